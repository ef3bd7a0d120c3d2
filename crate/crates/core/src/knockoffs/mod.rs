//! Model-X knockoffs with derandomized knockoff e-values and the conditional
//! randomization resampler used for boosting them.

mod filter;
pub mod lasso;
mod sampler;

pub use filter::{augment, knockoff_evalues, knockoff_threshold, lcd_stats, lcd_stats_warm, ThresholdVariant};
pub use sampler::{s_matrix, sample_knockoffs, GaussianDesignModel, KnockoffSampler, SMethod, FEASIBILITY_TOL};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::calibration::Resampler;
use crate::error::{check_alpha, domain, Result};
use crate::evalue::EValueVector;
use crate::linalg::{drop_index, inverse_pd};
use crate::rng::{Stream, StreamKey};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(domain(format!("X has {} rows but Y has length {}", x.nrows(), y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(domain("X and Y must be finite"));
        }
        Ok(Self { x, y })
    }
}

#[derive(Debug, Clone)]
pub struct DerandomizedEValues {
    pub d: usize,
    pub alpha_kn: f64,
    pub w: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub runs: Vec<EValueVector>,
    pub averaged: EValueVector,
}

/// Fixed settings of the derandomized knockoff procedure.
#[derive(Debug, Clone)]
pub struct KnockoffPipeline {
    pub model: GaussianDesignModel,
    sampler: KnockoffSampler,
    pub d: usize,
    pub alpha_kn: f64,
    pub lambda: f64,
    pub variant: ThresholdVariant,
}

impl KnockoffPipeline {
    pub fn new(model: GaussianDesignModel, d: usize, alpha_kn: f64, lambda: f64, variant: ThresholdVariant) -> Result<Self> {
        if d == 0 {
            return Err(domain("d must be at least 1"));
        }
        check_alpha("alpha_kn", alpha_kn)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(domain(format!("lambda = {lambda} must be finite and nonnegative")));
        }
        let sampler = KnockoffSampler::new(&model)?;
        Ok(Self { model, sampler, d, alpha_kn, lambda, variant })
    }

    /// Run `k` draws its knockoffs from `key.child(k)`.
    pub fn run(&self, data: &Dataset, key: StreamKey) -> Result<DerandomizedEValues> {
        let m = self.model.m();
        if data.x.ncols() != m {
            return Err(domain(format!("design has {} columns, model has {m}", data.x.ncols())));
        }
        let mut w = Vec::with_capacity(self.d);
        let mut thresholds = Vec::with_capacity(self.d);
        let mut runs = Vec::with_capacity(self.d);
        let mut sum = vec![0.0; m];
        for k in 0..self.d {
            let xt = self.sampler.sample(&data.x, &mut key.child(k as u64).stream())?;
            let wk = lcd_stats(&data.x, &xt, &data.y, self.lambda)?;
            let t = knockoff_threshold(&wk, self.alpha_kn, self.variant)?;
            let e = knockoff_evalues(&wk, t, m)?;
            for (s, v) in sum.iter_mut().zip(e.as_slice()) {
                *s += v;
            }
            w.push(wk);
            thresholds.push(t);
            runs.push(e);
        }
        let averaged = EValueVector::new(sum.into_iter().map(|s| s / self.d as f64).collect())?;
        Ok(DerandomizedEValues { d: self.d, alpha_kn: self.alpha_kn, w, thresholds, runs, averaged })
    }
}

pub fn derandomized_evalues(pipeline: &KnockoffPipeline, data: &Dataset, key: StreamKey) -> Result<DerandomizedEValues> {
    pipeline.run(data, key)
}

/// Penalty chosen by 5-fold cross-validation over a 50-point grid on an
/// independent hold-out dataset, augmented with its own knockoffs.
pub fn holdout_lambda(model: &GaussianDesignModel, holdout: &Dataset, rng: &mut Stream) -> Result<f64> {
    let xt = sample_knockoffs(model, &holdout.x, rng)?;
    lasso::cv_lambda(&augment(&holdout.x, &xt)?, &holdout.y, 5, 50)
}

/// Gaussian conditional of column `j` given the others.
#[derive(Debug, Clone)]
pub struct ColumnConditional {
    pub j: usize,
    coef: Vec<f64>,
    mu: DVector<f64>,
    pub sd: f64,
}

impl ColumnConditional {
    pub fn new(model: &GaussianDesignModel, j: usize) -> Result<Self> {
        let m = model.m();
        if j >= m {
            return Err(domain(format!("column {j} out of range")));
        }
        let rest: Vec<usize> = (0..m).filter(|&k| k != j).collect();
        let (coef, var) = if rest.is_empty() {
            (Vec::new(), model.sigma[(j, j)])
        } else {
            let inv = inverse_pd(&drop_index(&model.sigma, j), "Σ_{-j,-j}")?;
            let cross = DVector::from_iterator(rest.len(), rest.iter().map(|&k| model.sigma[(j, k)]));
            let coef = &inv * &cross;
            (coef.iter().copied().collect(), model.sigma[(j, j)] - cross.dot(&coef))
        };
        Ok(Self { j, coef, mu: model.mu.clone(), sd: var.max(0.0).sqrt() })
    }

    /// Conditional mean of `X_ij` for every row.
    pub fn means(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let mut acc = self.mu[self.j];
                let mut c = self.coef.iter();
                for k in 0..x.ncols() {
                    if k != self.j {
                        acc += c.next().unwrap() * (x[(i, k)] - self.mu[k]);
                    }
                }
                acc
            })
            .collect()
    }

    /// `X` with column `j` redrawn from its conditional law.
    pub fn resample(&self, x: &DMatrix<f64>, means: &[f64], rng: &mut Stream) -> DMatrix<f64> {
        let mut out = x.clone();
        for (i, mu) in means.iter().enumerate() {
            out[(i, self.j)] = mu + self.sd * rng.sample::<f64, _>(StandardNormal);
        }
        out
    }
}

/// Conditional randomization resampler: redraw column `j`, rerun the whole
/// derandomized procedure with fresh knockoffs.
#[derive(Debug, Clone)]
pub struct CrtResampler<'a> {
    pipeline: &'a KnockoffPipeline,
    data: &'a Dataset,
    cond: ColumnConditional,
    means: Vec<f64>,
}

pub fn crt_resampler<'a>(pipeline: &'a KnockoffPipeline, data: &'a Dataset, j: usize) -> Result<CrtResampler<'a>> {
    let cond = ColumnConditional::new(&pipeline.model, j)?;
    let means = cond.means(&data.x);
    Ok(CrtResampler { pipeline, data, cond, means })
}

impl CrtResampler<'_> {
    pub fn draw_dataset(&self, rng: &mut Stream) -> Dataset {
        Dataset { x: self.cond.resample(&self.data.x, &self.means, rng), y: self.data.y.clone() }
    }
}

impl Resampler for CrtResampler<'_> {
    fn hypothesis(&self) -> usize {
        self.cond.j
    }

    fn draw(&self, rng: &mut Stream) -> Result<EValueVector> {
        let data = self.draw_dataset(rng);
        let key = StreamKey::new(rng.next_u64());
        Ok(self.pipeline.run(&data, key)?.averaged)
    }

    fn evalue_bound(&self) -> Option<f64> {
        Some(self.pipeline.model.m() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ar1, sym_factor};

    fn setup(m: usize, n: usize, seed: u64) -> (KnockoffPipeline, Dataset) {
        let sigma = ar1(m, 0.5);
        let model = GaussianDesignModel::with_method(DVector::zeros(m), sigma.clone(), SMethod::Equicorrelated).unwrap();
        let mut rng = StreamKey::new(seed).stream();
        let f = sym_factor(&sigma).unwrap();
        let z = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = z * f.transpose();
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 1.2 - x[(i, 3)] + rng.sample::<f64, _>(StandardNormal));
        let p = KnockoffPipeline::new(model, 3, 0.2, 0.05, ThresholdVariant::EarlyStop).unwrap();
        (p, Dataset::new(x, y).unwrap())
    }

    #[test]
    fn average_is_exact_mean_of_runs() {
        let (p, data) = setup(8, 60, 1);
        let out = p.run(&data, StreamKey::new(7)).unwrap();
        for j in 0..8 {
            let s: f64 = out.runs.iter().map(|e| e.as_slice()[j]).sum();
            assert_eq!(out.averaged.as_slice()[j], s / 3.0);
        }
        for (k, e) in out.runs.iter().enumerate() {
            let neg = out.w[k].iter().filter(|&&v| v <= -out.thresholds[k]).count();
            for &v in e.as_slice() {
                assert!(v == 0.0 || v == 8.0 / (1 + neg) as f64);
            }
        }
    }

    #[test]
    fn single_run_matches_plain_knockoffs() {
        let (p, data) = setup(6, 50, 2);
        let p1 = KnockoffPipeline::new(p.model.clone(), 1, 0.2, 0.05, ThresholdVariant::EarlyStop).unwrap();
        let out = p1.run(&data, StreamKey::new(3)).unwrap();
        assert_eq!(out.averaged, out.runs[0]);
    }

    #[test]
    fn crt_keeps_other_columns_and_response() {
        let (p, data) = setup(5, 40, 3);
        let r = crt_resampler(&p, &data, 2).unwrap();
        let mut rng = StreamKey::new(4).stream();
        for _ in 0..20 {
            let d = r.draw_dataset(&mut rng);
            assert_eq!(d.y, data.y);
            for k in (0..5).filter(|&k| k != 2) {
                assert_eq!(d.x.column(k), data.x.column(k));
            }
        }
    }

    #[test]
    fn crt_conditional_law() {
        let m = 3;
        let model = GaussianDesignModel::with_method(DVector::zeros(m), ar1(m, 0.5), SMethod::Equicorrelated).unwrap();
        let cond = ColumnConditional::new(&model, 1).unwrap();
        // Σ = AR(1, 0.5): X_2 | X_1, X_3 has mean 0.4 (X_1 + X_3) and variance 0.6
        assert!((cond.sd * cond.sd - 0.6).abs() < 1e-12);
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 2.0]);
        let means = cond.means(&x);
        assert!((means[0] - 1.2).abs() < 1e-12);
        let mut rng = StreamKey::new(5).stream();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| cond.resample(&x, &means, &mut rng)[(0, 1)]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.2).abs() < 0.02 && (var - 0.6).abs() < 0.02);
        let id = GaussianDesignModel::new(DVector::from_vec(vec![0.0, 3.0]), DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap();
        let c = ColumnConditional::new(&id, 1).unwrap();
        assert_eq!(c.means(&DMatrix::from_row_slice(1, 2, &[9.0, 0.0])), vec![3.0]);
        assert_eq!(c.sd, 1.0);
    }

    #[test]
    fn holdout_lambda_positive() {
        let (p, data) = setup(6, 100, 6);
        let lam = holdout_lambda(&p.model, &data, &mut StreamKey::new(1).stream()).unwrap();
        assert!(lam > 0.0);
    }
}
