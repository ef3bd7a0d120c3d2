//! Multivariate z- and t-statistic likelihood-ratio e-values, their
//! sufficient statistics and exact conditional resamplers, and the lognormal
//! marginal boosting factor.

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::ContinuousCDF;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::calibration::Resampler;
use crate::error::{domain, Error, Result};
use crate::evalue::EValueVector;
use crate::linalg::check_pd;
use crate::rng::Stream;

/// Exact dyadic rational. Every finite `f64` converts without loss, so the
/// sufficient-statistic maps below can be evaluated with no rounding at all.
pub type Exact = BigRational;

pub fn to_exact(x: &[f64]) -> Result<Vec<Exact>> {
    x.iter()
        .map(|&v| BigRational::from_float(v).ok_or_else(|| domain(format!("{v} is not finite"))))
        .collect()
}

/// Nearest `f64` to an exact value.
pub fn round_exact(x: &[Exact]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
}

fn exact_entry(a: &DMatrix<f64>, r: usize, c: usize) -> Exact {
    BigRational::from_float(a[(r, c)]).expect("matrix entries are finite")
}

const EXP_CLAMP: f64 = 700.0;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `exp(a z - a²/2)`, exponent clamped to ±700.
pub fn lrt_z(z: f64, a: f64) -> f64 {
    (a * z - 0.5 * a * a).clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

#[derive(Debug, Clone)]
pub struct ZInstance {
    pub z: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub a: Vec<f64>,
}

impl ZInstance {
    pub fn new(z: Vec<f64>, sigma: DMatrix<f64>, a: Vec<f64>) -> Result<Self> {
        let m = z.len();
        if m == 0 || sigma.nrows() != m || a.len() != m {
            return Err(domain("z, sigma and a must share dimension m >= 1"));
        }
        check_pd(&sigma, "sigma")?;
        if let Some(j) = (0..m).find(|&j| (sigma[(j, j)] - 1.0).abs() > 1e-10) {
            return Err(domain(format!("sigma must have unit diagonal (entry {j} is {})", sigma[(j, j)])));
        }
        if z.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(domain("z and a must be finite"));
        }
        Ok(Self { z, sigma, a })
    }

    pub fn evalues(&self) -> EValueVector {
        EValueVector::new(self.z.iter().zip(&self.a).map(|(&z, &a)| lrt_z(z, a)).collect())
            .expect("lrt_z is finite and positive")
    }

    /// One-sided p-values `1 - Φ(Z_j)`.
    pub fn pvalues(&self) -> Vec<f64> {
        self.z.iter().map(|&z| normal_cdf(-z).max(f64::MIN_POSITIVE)).collect()
    }
}

/// `S_j = Z_{-j} - Σ_{-j,j} Z_j`.
pub fn z_suffstat(inst: &ZInstance, j: usize) -> Vec<f64> {
    (0..inst.z.len())
        .filter(|&k| k != j)
        .map(|k| inst.z[k] - inst.sigma[(k, j)] * inst.z[j])
        .collect()
}

fn z_from_y(s: &[f64], sigma: &DMatrix<f64>, j: usize, y: f64) -> Vec<f64> {
    let m = s.len() + 1;
    let mut out = Vec::with_capacity(m);
    let mut it = s.iter();
    for k in 0..m {
        if k == j {
            out.push(y);
        } else {
            out.push(it.next().unwrap() + sigma[(k, j)] * y);
        }
    }
    out
}

pub fn z_resample(s: &[f64], sigma: &DMatrix<f64>, j: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    if sigma.nrows() != s.len() + 1 || j > s.len() {
        return Err(domain("suffstat, sigma and j are inconsistent"));
    }
    let y: f64 = rng.sample::<f64, _>(StandardNormal) * sigma[(j, j)].sqrt();
    Ok(z_from_y(s, sigma, j, y))
}

/// `S_j` evaluated without rounding.
pub fn z_suffstat_exact(z: &[Exact], sigma: &DMatrix<f64>, j: usize) -> Vec<Exact> {
    (0..z.len())
        .filter(|&k| k != j)
        .map(|k| &z[k] - exact_entry(sigma, k, j) * &z[j])
        .collect()
}

/// `Z̃ = (S_j + Σ_{-j,j} y, y)` without rounding.
pub fn z_resample_exact(s: &[Exact], sigma: &DMatrix<f64>, j: usize, y: f64) -> Result<Vec<Exact>> {
    let y = to_exact(&[y])?.remove(0);
    let mut it = s.iter();
    Ok((0..s.len() + 1)
        .map(|k| if k == j { y.clone() } else { it.next().unwrap() + exact_entry(sigma, k, j) * &y })
        .collect())
}

/// Null conditional law of the z-test LRT e-values given `S_j`.
#[derive(Debug, Clone)]
pub struct ZResampler<'a> {
    j: usize,
    s: Vec<f64>,
    inst: &'a ZInstance,
}

impl<'a> ZResampler<'a> {
    pub fn new(inst: &'a ZInstance, j: usize) -> Self {
        Self { j, s: z_suffstat(inst, j), inst }
    }

    /// The draw `draw` would make from the same stream state, as exact data.
    pub fn draw_exact(&self, rng: &mut Stream) -> Result<Vec<Exact>> {
        let s = z_suffstat_exact(&to_exact(&self.inst.z)?, &self.inst.sigma, self.j);
        let y: f64 = rng.sample::<f64, _>(StandardNormal) * self.inst.sigma[(self.j, self.j)].sqrt();
        z_resample_exact(&s, &self.inst.sigma, self.j, y)
    }
}

impl Resampler for ZResampler<'_> {
    fn hypothesis(&self) -> usize {
        self.j
    }

    fn draw(&self, rng: &mut Stream) -> Result<EValueVector> {
        let z = z_resample(&self.s, &self.inst.sigma, self.j, rng)?;
        EValueVector::new(z.iter().zip(&self.inst.a).map(|(&z, &a)| lrt_z(z, a)).collect())
    }

    /// `Z̃_j ~ N(0, 1)` independently of `S_j`, and the LRT has mean 1.
    fn conditional_budget(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct TInstance {
    pub z: Vec<f64>,
    pub psi: DMatrix<f64>,
    pub w_norm_sq: f64,
    pub dof: usize,
    pub a: Vec<f64>,
}

impl TInstance {
    pub fn new(z: Vec<f64>, psi: DMatrix<f64>, w_norm_sq: f64, dof: usize, a: Vec<f64>) -> Result<Self> {
        let m = z.len();
        if m == 0 || psi.nrows() != m || a.len() != m {
            return Err(domain("z, psi and a must share dimension m >= 1"));
        }
        check_pd(&psi, "psi")?;
        if dof == 0 {
            return Err(domain("dof must be at least 1"));
        }
        if !(w_norm_sq.is_finite() && w_norm_sq >= 0.0) {
            return Err(domain(format!("w_norm_sq = {w_norm_sq} must be finite and nonnegative")));
        }
        Ok(Self { z, psi, w_norm_sq, dof, a })
    }

    /// One-sided p-values `1 - F_dof(T_j)`.
    pub fn pvalues(&self) -> Result<Vec<f64>> {
        let dist = statrs::distribution::StudentsT::new(0.0, 1.0, self.dof as f64)
            .map_err(|e| domain(format!("dof: {e}")))?;
        Ok(t_stats(self)?.iter().map(|&t| dist.sf(t).max(f64::MIN_POSITIVE)).collect())
    }

    pub fn evalues(&self) -> Result<EValueVector> {
        let t = t_stats(self)?;
        EValueVector::new(t.iter().zip(&self.a).map(|(&t, &a)| lrt_t(t, a, self.dof)).collect())
    }
}

pub fn t_stats(inst: &TInstance) -> Result<Vec<f64>> {
    if inst.w_norm_sq <= 0.0 {
        return Err(Error::Degenerate("‖W‖² = 0 gives an undefined variance estimate".into()));
    }
    let s2 = inst.w_norm_sq / inst.dof as f64;
    Ok(inst
        .z
        .iter()
        .enumerate()
        .map(|(j, &z)| z / (s2 * inst.psi[(j, j)]).sqrt())
        .collect())
}

/// `(U_j, V_j)` with `U_j = Z_{-j} - Ψ_{-j,j} Ψ_jj⁻¹ Z_j` and `V_j = ‖W‖² + Z_j²/Ψ_jj`.
pub fn t_suffstat(inst: &TInstance, j: usize) -> (Vec<f64>, f64) {
    let pjj = inst.psi[(j, j)];
    let u = (0..inst.z.len())
        .filter(|&k| k != j)
        .map(|k| inst.z[k] - inst.psi[(k, j)] / pjj * inst.z[j])
        .collect();
    (u, inst.w_norm_sq + inst.z[j] * inst.z[j] / pjj)
}

/// `T_{-j}` as a function of `(T_j, U_j, V_j)`.
pub fn t_reconstruct(u: &[f64], v: f64, psi: &DMatrix<f64>, dof: usize, j: usize, t_j: f64) -> Result<Vec<f64>> {
    if !(v > 0.0) {
        return Err(domain(format!("V_j = {v} must be positive")));
    }
    if psi.nrows() != u.len() + 1 || j > u.len() {
        return Err(domain("U_j, psi and j are inconsistent"));
    }
    let m = u.len() + 1;
    let scale = ((dof as f64 + t_j * t_j) / v).sqrt();
    let pjj = psi[(j, j)];
    let mut out = Vec::with_capacity(m);
    let mut it = u.iter();
    for k in 0..m {
        if k == j {
            out.push(t_j);
        } else {
            let uk = it.next().unwrap();
            out.push(uk * scale / psi[(k, k)].sqrt() + psi[(k, j)] / pjj * t_j);
        }
    }
    Ok(out)
}

pub fn t_resample(u: &[f64], v: f64, psi: &DMatrix<f64>, dof: usize, j: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    let y = StudentT::new(dof as f64)
        .map_err(|e| domain(format!("dof: {e}")))?
        .sample(rng);
    t_reconstruct(u, v, psi, dof, j, y)
}

#[derive(Debug, Clone)]
pub struct TResampler<'a> {
    j: usize,
    u: Vec<f64>,
    v: f64,
    inst: &'a TInstance,
}

impl<'a> TResampler<'a> {
    pub fn new(inst: &'a TInstance, j: usize) -> Self {
        let (u, v) = t_suffstat(inst, j);
        Self { j, u, v, inst }
    }

    /// Exact `(Z̃, ‖W̃‖²)` with the same `(U_j, V_j)` as the instance, built
    /// from the same `T̃_j` draw that `draw` makes from this stream state.
    pub fn draw_exact(&self, rng: &mut Stream) -> Result<(Vec<Exact>, Exact)> {
        let inst = self.inst;
        let t_j = StudentT::new(inst.dof as f64)
            .map_err(|e| domain(format!("dof: {e}")))?
            .sample(rng);
        let (u, v) = t_suffstat_exact(&to_exact(&inst.z)?, &inst.psi, &to_exact(&[inst.w_norm_sq])?[0], self.j);
        let dof = inst.dof as f64;
        let pjj = inst.psi[(self.j, self.j)];
        let w0 = self.v * dof / (dof + t_j * t_j);
        let zj = to_exact(&[t_j * (pjj * w0 / dof).sqrt()])?.remove(0);
        let pjj_x = exact_entry(&inst.psi, self.j, self.j);
        let w = &v - &zj * &zj / &pjj_x;
        let mut it = u.iter();
        let z = (0..inst.z.len())
            .map(|k| {
                if k == self.j {
                    zj.clone()
                } else {
                    it.next().unwrap() + exact_entry(&inst.psi, k, self.j) / &pjj_x * &zj
                }
            })
            .collect();
        Ok((z, w))
    }
}

/// `(U_j, V_j)` evaluated without rounding.
pub fn t_suffstat_exact(z: &[Exact], psi: &DMatrix<f64>, w_norm_sq: &Exact, j: usize) -> (Vec<Exact>, Exact) {
    let pjj = exact_entry(psi, j, j);
    let u = (0..z.len())
        .filter(|&k| k != j)
        .map(|k| &z[k] - exact_entry(psi, k, j) / &pjj * &z[j])
        .collect();
    (u, w_norm_sq + &z[j] * &z[j] / &pjj)
}

impl Resampler for TResampler<'_> {
    fn hypothesis(&self) -> usize {
        self.j
    }

    fn draw(&self, rng: &mut Stream) -> Result<EValueVector> {
        let t = t_resample(&self.u, self.v, &self.inst.psi, self.inst.dof, self.j, rng)?;
        EValueVector::new(t.iter().zip(&self.inst.a).map(|(&t, &a)| lrt_t(t, a, self.inst.dof)).collect())
    }

    /// `T̃_j ~ t_dof` given `(U_j, V_j)` and a density ratio has mean 1 under its denominator.
    fn conditional_budget(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Log of `∫_0^∞ x^ν exp(-(t x - a)²/2 - ν x²/2) dx` by double-exponential quadrature
/// around the mode.
fn log_nct_kernel(t: f64, a: f64, nu: f64) -> f64 {
    let c = t * t + nu;
    let x_star = (t * a + (t * t * a * a + 4.0 * nu * c).sqrt()) / (2.0 * c);
    let h = |x: f64| nu * x.ln() - 0.5 * (t * x - a).powi(2) - 0.5 * nu * x * x;
    let h_star = h(x_star);
    // log-concave with curvature at least c everywhere
    let width = 16.0 / c.sqrt();
    let lo = (x_star - width).max(0.0);
    let hi = x_star + width;
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (h(x) - h_star).exp() };
    let out = quadrature::double_exponential::integrate(f, lo, hi, 1e-12 * width);
    h_star + out.integral.ln()
}

/// Noncentral-t to central-t density ratio `f_{ν,a}(t) / f_{ν,0}(t)`.
pub fn lrt_t(t: f64, a: f64, dof: usize) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    let nu = dof as f64;
    let c = t * t + nu;
    let log_central = ln_gamma((nu + 1.0) / 2.0) + 0.5 * (nu - 1.0) * std::f64::consts::LN_2 - 0.5 * (nu + 1.0) * c.ln();
    let log_ratio = log_nct_kernel(t, a, nu) - log_central;
    log_ratio.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Largest element of `{0, 1, m/(m-1), …, m/2, m}` not exceeding `x`.
pub fn truncation_t(x: f64, m: usize) -> Result<f64> {
    if !(x >= 0.0) || m == 0 {
        return Err(domain(format!("truncation needs x >= 0 and m >= 1 (x = {x}, m = {m})")));
    }
    let mf = m as f64;
    if x < 1.0 {
        return Ok(0.0);
    }
    if x >= mf {
        return Ok(mf);
    }
    // smallest k with m/k <= x
    let mut k = (mf / x).ceil().max(1.0) as usize;
    while k > 1 && mf / (k - 1) as f64 <= x {
        k -= 1;
    }
    while mf / k as f64 > x {
        k += 1;
    }
    Ok(mf / k as f64)
}

/// Root `b >= 1` of `b Φ(δ/2 + ln(α b)/δ) = 1`.
pub fn marginal_boost_factor(delta: f64, alpha: f64) -> Result<f64> {
    crate::error::check_alpha("alpha", alpha)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(domain(format!("delta = {delta} must be positive")));
    }
    let g = |b: f64| b * normal_cdf(delta / 2.0 + (alpha * b).ln() / delta) - 1.0;
    let (mut lo, mut hi) = (1.0f64, 1e12f64);
    if g(lo) > 0.0 || g(hi) < 0.0 {
        return Err(Error::Numeric(format!("no boosting factor in [1, 1e12] for delta = {delta}, alpha = {alpha}")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = if g(hi).abs() < g(lo).abs() { hi } else { lo };
    let r = g(b).abs();
    if r > 1e-10 {
        return Err(Error::Numeric(format!("boosting factor residual {r:e} above 1e-10")));
    }
    Ok(b)
}

/// Data generation for the z-test experiments: `Z ~ N(μ, Σ)`.
pub fn simulate_z(mu: &[f64], factor: &DMatrix<f64>, rng: &mut Stream) -> Vec<f64> {
    let x = crate::linalg::mvn(factor, rng);
    x.iter().zip(mu).map(|(x, m)| x + m).collect()
}

/// Data generation for the t-test experiments: `Z ~ N(μ, Ψ)`, `‖W‖² ~ χ²_dof`.
pub fn simulate_t(mu: &[f64], factor: &DMatrix<f64>, dof: usize, rng: &mut Stream) -> (Vec<f64>, f64) {
    let z = simulate_z(mu, factor, rng);
    let w: f64 = (0..dof).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
    (z, w)
}
