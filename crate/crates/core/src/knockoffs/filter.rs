//! Feature statistics, knockoff thresholds and knockoff e-values.

use nalgebra::{DMatrix, DVector};

use super::lasso::Lasso;
use crate::error::{check_alpha, domain, Result};
use crate::evalue::{EValueVector, TIE_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdVariant {
    Standard,
    #[default]
    EarlyStop,
}

/// `[X X̃]` as one matrix.
pub fn augment(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != x_tilde.shape() {
        return Err(domain("design and knockoffs must have the same shape"));
    }
    let mut data = Vec::with_capacity(2 * x.len());
    data.extend_from_slice(x.as_slice());
    data.extend_from_slice(x_tilde.as_slice());
    Ok(DMatrix::from_vec(x.nrows(), 2 * x.ncols(), data))
}

/// Lasso coefficient differences `W_j = |β̂_j| - |β̂_{j+m}|`.
pub fn lcd_stats(x: &DMatrix<f64>, x_tilde: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Vec<f64>> {
    lcd_stats_warm(x, x_tilde, y, lambda, None).map(|(w, _)| w)
}

/// As [`lcd_stats`], also returning the fitted coefficients for reuse as a warm start.
pub fn lcd_stats_warm(
    x: &DMatrix<f64>,
    x_tilde: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = x.ncols();
    let beta = Lasso::new(&augment(x, x_tilde)?, y)?.fit(lambda, warm)?;
    let w = (0..m).map(|j| beta[j].abs() - beta[j + m].abs()).collect();
    Ok((w, beta))
}

/// Knockoff filter threshold over the grid `{|W_j|} \ {0}`; `+∞` when nothing qualifies.
pub fn knockoff_threshold(w: &[f64], alpha_kn: f64, variant: ThresholdVariant) -> Result<f64> {
    check_alpha("alpha_kn", alpha_kn)?;
    let mut grid: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    for t in grid {
        let pos = w.iter().filter(|&&v| v >= t).count();
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let fdp_ok = pos > 0 && (1 + neg) as f64 <= alpha_kn * pos as f64 * (1.0 + TIE_SLACK);
        let early = variant == ThresholdVariant::EarlyStop && (pos as f64) * alpha_kn < 1.0;
        if fdp_ok || early {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// `e_j = m 1{W_j ≥ T} / (1 + #{k : W_k ≤ -T})`.
pub fn knockoff_evalues(w: &[f64], t: f64, m: usize) -> Result<EValueVector> {
    if w.len() != m {
        return Err(domain(format!("W has length {} but m = {m}", w.len())));
    }
    if t.is_infinite() {
        return EValueVector::new(vec![0.0; m]);
    }
    let neg = w.iter().filter(|&&v| v <= -t).count();
    let val = m as f64 / (1 + neg) as f64;
    EValueVector::new(w.iter().map(|&v| if v >= t { val } else { 0.0 }).collect())
}
