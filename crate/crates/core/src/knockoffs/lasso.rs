//! Lasso by cyclic coordinate descent on standardized columns, with an
//! intercept absorbed by centering.
//!
//! Objective: `(1/2n)‖y - Xβ‖² + λ‖β‖₁`, `β` on the standardized scale.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const GAP_TOL: f64 = 1e-8;
const COARSE_TOL: f64 = 1e-3;
const KKT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Lasso {
    n: usize,
    p: usize,
    /// Standardized columns, column-major.
    x: Vec<f64>,
    y: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    y_ss: f64,
}

impl Lasso {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || y.len() != n {
            return Err(domain(format!("design is {n}x{p} but response has length {}", y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(domain("design and response must be finite"));
        }
        let nf = n as f64;
        let mut xs = Vec::with_capacity(n * p);
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for col in x.column_iter() {
            let mean = col.sum() / nf;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
            means.push(mean);
            sds.push(sd);
            if sd > 0.0 {
                xs.extend(col.iter().map(|v| (v - mean) / sd));
            } else {
                xs.extend(std::iter::repeat_n(0.0, n));
            }
        }
        let y_mean = y.sum() / nf;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let y_ss = yc.iter().map(|v| v * v).sum();
        Ok(Self { n, p, x: xs, y: yc, means, sds, y_mean, y_ss })
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Smallest penalty with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        (0..self.p)
            .map(|j| dot(self.col(j), &self.y).abs())
            .fold(0.0, f64::max)
            / self.n as f64
    }

    /// Coarse descent to find the support, then an exact solve on that
    /// support; falls back to descent to the duality-gap tolerance when the
    /// solve fails the KKT check.
    pub fn fit(&self, lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(domain(format!("lambda = {lambda} must be finite and nonnegative")));
        }
        let mut beta = match warm {
            Some(b) if b.len() == self.p => b.to_vec(),
            Some(_) => return Err(domain("warm start has the wrong length")),
            None => vec![0.0; self.p],
        };
        let mut r = self.y.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(-b, self.col(j), &mut r);
            }
        }
        let live: Vec<usize> = (0..self.p).filter(|&j| self.sds[j] > 0.0).collect();
        let mut sweeps = 0;
        self.descend(&live, lambda, &mut beta, &mut r, &mut sweeps, Some(COARSE_TOL))?;
        if let Some(b) = self.polish(lambda, &beta) {
            return Ok(b);
        }
        self.descend(&live, lambda, &mut beta, &mut r, &mut sweeps, None)?;
        Ok(beta)
    }

    /// Active-set coordinate descent. With `coarse = Some(tol)` stops once a
    /// full sweep moves no coefficient by more than `tol`.
    fn descend(
        &self,
        live: &[usize],
        lambda: f64,
        beta: &mut [f64],
        r: &mut [f64],
        sweeps: &mut usize,
        coarse: Option<f64>,
    ) -> Result<()> {
        let inner_tol = coarse.unwrap_or(GAP_TOL);
        loop {
            let full = self.sweep(live, lambda, beta, r);
            *sweeps += 1;
            if !full.is_finite() {
                return Err(Error::Numeric("lasso coordinate descent diverged".into()));
            }
            let done = match coarse {
                Some(tol) => full < tol,
                None => self.converged(lambda, beta, r, full),
            };
            if done || *sweeps >= MAX_SWEEPS {
                return Ok(());
            }
            let active: Vec<usize> = live.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            while *sweeps < MAX_SWEEPS {
                let d = self.sweep(&active, lambda, beta, r);
                *sweeps += 1;
                if !d.is_finite() {
                    return Err(Error::Numeric("lasso coordinate descent diverged".into()));
                }
                if d < inner_tol {
                    break;
                }
            }
        }
    }

    /// Solve the stationarity equations on the support and sign pattern of
    /// `beta`; `None` unless the result satisfies every KKT condition.
    fn polish(&self, lambda: f64, beta: &[f64]) -> Option<Vec<f64>> {
        let active: Vec<usize> = (0..self.p).filter(|&j| beta[j] != 0.0).collect();
        let k = active.len();
        if k == 0 || k >= self.n {
            return None;
        }
        let nf = self.n as f64;
        let gram = DMatrix::from_fn(k, k, |a, b| dot(self.col(active[a]), self.col(active[b])) / nf);
        let rhs = DVector::from_fn(k, |a, _| {
            let j = active[a];
            dot(self.col(j), &self.y) / nf - lambda * beta[j].signum()
        });
        let sol = gram.cholesky()?.solve(&rhs);
        let mut out = vec![0.0; self.p];
        let mut r = self.y.clone();
        for (a, &j) in active.iter().enumerate() {
            if !(sol[a] * beta[j].signum() > 0.0) {
                return None;
            }
            out[j] = sol[a];
            axpy(-sol[a], self.col(j), &mut r);
        }
        let slack = lambda * (1.0 + KKT_SLACK) + KKT_SLACK * (self.y_ss / nf).sqrt();
        for j in 0..self.p {
            if out[j] == 0.0 && dot(self.col(j), &r).abs() / nf > slack {
                return None;
            }
        }
        Some(out)
    }

    /// One pass over `idx`; returns the largest coefficient change.
    fn sweep(&self, idx: &[usize], lambda: f64, beta: &mut [f64], r: &mut [f64]) -> f64 {
        let nf = self.n as f64;
        let mut max_delta: f64 = 0.0;
        for &j in idx {
            let col = self.col(j);
            let rho = dot(col, r) / nf + beta[j];
            let new = soft(rho, lambda);
            let delta = new - beta[j];
            if delta != 0.0 {
                axpy(-delta, col, r);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// Relative duality gap for `λ > 0`, coefficient change for `λ = 0`.
    fn converged(&self, lambda: f64, beta: &[f64], r: &[f64], last_delta: f64) -> bool {
        if lambda == 0.0 || self.y_ss == 0.0 {
            return last_delta < GAP_TOL;
        }
        let nf = self.n as f64;
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let primal = rr / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
        let corr = (0..self.p).map(|j| dot(self.col(j), r).abs()).fold(0.0, f64::max);
        let s = if corr > 0.0 { (nf * lambda / corr).min(1.0) } else { 1.0 };
        // dual objective at θ = s r / n
        let diff: f64 = self.y.iter().zip(r).map(|(y, r)| (y - s * r).powi(2)).sum();
        let dual = (self.y_ss - diff) / (2.0 * nf);
        (primal - dual) <= GAP_TOL * self.y_ss / (2.0 * nf)
    }

    /// Predictions for new rows from standardized-scale coefficients.
    pub fn predict(&self, x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![self.y_mean; x.nrows()];
        for (j, col) in x.column_iter().enumerate() {
            if beta[j] == 0.0 || self.sds[j] == 0.0 {
                continue;
            }
            let scale = beta[j] / self.sds[j];
            for (o, v) in out.iter_mut().zip(col.iter()) {
                *o += scale * (v - self.means[j]);
            }
        }
        out
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Log-spaced grid from `λ_max` down to `ratio·λ_max`.
pub fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..len)
        .map(|i| (hi + (lo - hi) * i as f64 / (len - 1) as f64).exp())
        .collect()
}

/// Penalty minimizing `folds`-fold cross-validated squared error over a
/// `grid_len`-point log grid. Folds are contiguous row blocks.
pub fn cv_lambda(x: &DMatrix<f64>, y: &DVector<f64>, folds: usize, grid_len: usize) -> Result<f64> {
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(domain(format!("cannot split {n} rows into {folds} folds")));
    }
    let full = Lasso::new(x, y)?;
    let lmax = full.lambda_max();
    if lmax == 0.0 {
        return Ok(0.0);
    }
    let grid = lambda_grid(lmax, grid_len, 1e-3);
    let mut err = vec![0.0; grid.len()];
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let train: Vec<usize> = (0..n).filter(|&i| i < lo || i >= hi).collect();
        let test: Vec<usize> = (lo..hi).collect();
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let xv = x.select_rows(&test);
        let model = Lasso::new(&xt, &yt)?;
        let mut beta: Option<Vec<f64>> = None;
        for (g, &lam) in grid.iter().enumerate() {
            let b = model.fit(lam, beta.as_deref())?;
            let pred = model.predict(&xv, &b);
            err[g] += test.iter().zip(&pred).map(|(&i, p)| (y[i] - p).powi(2)).sum::<f64>();
            beta = Some(b);
        }
    }
    let best = err
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(g, _)| g)
        .unwrap();
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = StreamKey::new(seed).stream();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] - x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn zero_above_lambda_max() {
        let (x, y) = random(60, 8, 1);
        let l = Lasso::new(&x, &y).unwrap();
        let b = l.fit(l.lambda_max() * 1.0001, None).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        let b = l.fit(l.lambda_max() * 0.9, None).unwrap();
        assert!(b.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn kkt_conditions_hold() {
        let (x, y) = random(80, 12, 2);
        let l = Lasso::new(&x, &y).unwrap();
        let lam = 0.05;
        let b = l.fit(lam, None).unwrap();
        let mut r = l.y.clone();
        for j in 0..l.p {
            axpy(-b[j], l.col(j), &mut r);
        }
        for j in 0..l.p {
            let g = dot(l.col(j), &r) / l.n as f64;
            if b[j] != 0.0 {
                assert!((g - lam * b[j].signum()).abs() < 1e-6, "{j}: {g}");
            } else {
                assert!(g.abs() <= lam + 1e-6);
            }
        }
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let (x, y) = random(50, 10, 3);
        let l = Lasso::new(&x, &y).unwrap();
        let cold = l.fit(0.02, None).unwrap();
        let warm = l.fit(0.02, Some(&l.fit(0.1, None).unwrap())).unwrap();
        for (a, b) in cold.iter().zip(&warm) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cv_picks_interior_lambda() {
        let (x, y) = random(120, 10, 4);
        let lam = cv_lambda(&x, &y, 5, 50).unwrap();
        let lmax = Lasso::new(&x, &y).unwrap().lambda_max();
        assert!(lam > 0.0 && lam < lmax);
    }
}
