//! Gaussian model-X knockoffs: the S-matrix and the conditional sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};
use crate::linalg::{check_pd, inverse_pd, min_eigenvalue, sym_factor};
use crate::rng::Stream;

/// Slack allowed on `λ_min(2Σ - S)`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SMethod {
    #[default]
    Equicorrelated,
    Mvr,
}

#[derive(Debug, Clone)]
pub struct GaussianDesignModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub s_diag: Vec<f64>,
}

impl GaussianDesignModel {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, s_diag: Vec<f64>) -> Result<Self> {
        let m = mu.len();
        if sigma.nrows() != m || s_diag.len() != m {
            return Err(domain("mu, sigma and S must share dimension m"));
        }
        check_pd(&sigma, "sigma")?;
        if s_diag.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(domain("S entries must be finite and nonnegative"));
        }
        let gap = min_eigenvalue(&(2.0 * &sigma - DMatrix::from_diagonal(&DVector::from_column_slice(&s_diag))));
        if gap < -FEASIBILITY_TOL {
            return Err(domain(format!("2Σ - S is not positive semidefinite (min eigenvalue {gap:e})")));
        }
        Ok(Self { mu, sigma, s_diag })
    }

    /// Model with `S` chosen by `method`.
    pub fn with_method(mu: DVector<f64>, sigma: DMatrix<f64>, method: SMethod) -> Result<Self> {
        let s = s_matrix(&sigma, method)?;
        Self::new(mu, sigma, s)
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }
}

fn check_unit_diagonal(sigma: &DMatrix<f64>) -> Result<()> {
    check_pd(sigma, "sigma")?;
    if (0..sigma.nrows()).any(|i| (sigma[(i, i)] - 1.0).abs() > 1e-12) {
        return Err(domain("sigma must have a unit diagonal"));
    }
    Ok(())
}

pub fn s_matrix(sigma: &DMatrix<f64>, method: SMethod) -> Result<Vec<f64>> {
    check_unit_diagonal(sigma)?;
    let m = sigma.nrows();
    let equi = (2.0 * min_eigenvalue(sigma)).min(1.0);
    match method {
        SMethod::Equicorrelated => Ok(vec![equi; m]),
        SMethod::Mvr => mvr(sigma, equi),
    }
}

/// `Tr(S⁻¹) + Tr((2Σ - S)⁻¹)`, the trace of the inverse joint Gram matrix.
fn mvr_loss(s: &[f64], g: &DMatrix<f64>) -> f64 {
    s.iter().map(|v| 1.0 / v).sum::<f64>() + g.trace()
}

/// Coordinate descent on the reconstructibility loss. Each coordinate update is
/// the closed-form minimizer `1/(b + √c)` with `B = (2Σ - S_{-j})⁻¹`, `b = B_jj`,
/// `c = ‖B e_j‖²`, applied through Sherman–Morrison updates.
fn mvr(sigma: &DMatrix<f64>, equi: f64) -> Result<Vec<f64>> {
    let m = sigma.nrows();
    let mut s = vec![0.5 * equi; m];
    let two_sigma = 2.0 * sigma;
    let inv = |s: &[f64]| {
        let d = &two_sigma - DMatrix::from_diagonal(&DVector::from_column_slice(s));
        inverse_pd(&d, "2Σ - S")
    };
    let mut g = inv(&s)?;
    let mut loss = mvr_loss(&s, &g);
    for _ in 0..1000 {
        for j in 0..m {
            // remove coordinate j: B = (G⁻¹ + s_j e eᵀ)⁻¹
            let gj = g.column(j).clone_owned();
            let b_mat = &g - (s[j] / (1.0 + s[j] * gj[j])) * &gj * gj.transpose();
            let bj = b_mat.column(j).clone_owned();
            let b = bj[j];
            let c = bj.norm_squared();
            let new = 1.0 / (b + c.sqrt());
            s[j] = new;
            g = &b_mat + (new / (1.0 - new * b)) * &bj * bj.transpose();
        }
        g = inv(&s)?;
        let next = mvr_loss(&s, &g);
        let done = (loss - next).abs() <= 1e-6 * next.abs();
        loss = next;
        if done {
            break;
        }
    }
    Ok(s)
}

/// Precomputed `X̃ | X ~ N(μ + (I - SΣ⁻¹)(X - μ), 2S - SΣ⁻¹S)` per row.
#[derive(Debug, Clone)]
pub struct KnockoffSampler {
    mu: DVector<f64>,
    a: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl KnockoffSampler {
    pub fn new(model: &GaussianDesignModel) -> Result<Self> {
        let m = model.m();
        let sigma_inv = inverse_pd(&model.sigma, "sigma")?;
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&model.s_diag));
        let s_sinv = &s * &sigma_inv;
        let a = DMatrix::identity(m, m) - &s_sinv;
        let mut cov = 2.0 * &s - &s_sinv * &s;
        cov = 0.5 * (&cov + cov.transpose());
        Ok(Self { mu: model.mu.clone(), a, factor: sym_factor(&cov)? })
    }

    pub fn sample(&self, x: &DMatrix<f64>, rng: &mut Stream) -> Result<DMatrix<f64>> {
        let (n, m) = x.shape();
        if m != self.mu.len() {
            return Err(domain(format!("design has {m} columns, model has {}", self.mu.len())));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mu.transpose();
        }
        let noise = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = centered * self.a.transpose() + noise * self.factor.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mu.transpose();
        }
        Ok(out)
    }
}

pub fn sample_knockoffs(model: &GaussianDesignModel, x: &DMatrix<f64>, rng: &mut Stream) -> Result<DMatrix<f64>> {
    KnockoffSampler::new(model)?.sample(x, rng)
}
