//! Confidence intervals and anytime-valid confidence sequences for Monte-Carlo means.
//!
//! * [`bernstein_ci`]: fixed-sample empirical-Bernstein interval for bounded samples.
//! * [`HedgedCapitalCs`]: betting confidence sequence for means in `[0, 1]`.
//! * [`AsymptoticCs`]: Gaussian-mixture style asymptotic sequence for arbitrary samples.
//! * [`hybrid_cs`]: the two-phase schedule used by the boosting layer.

use crate::error::{check_alpha, domain, Result};

pub fn bernstein_ci(samples: &[f64], lo: f64, hi: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha("alpha_ci", alpha)?;
    let k = samples.len();
    if k < 2 {
        return Err(domain(format!("bernstein_ci needs at least 2 samples, got {k}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(domain(format!("invalid bounds [{lo}, {hi}]")));
    }
    let kf = k as f64;
    let mean = samples.iter().sum::<f64>() / kf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    let l = (3.0 / alpha).ln();
    let radius = (2.0 * var * l / kf).sqrt() + 3.0 * (hi - lo) * l / kf;
    Ok((mean - radius, mean + radius))
}

const EQUISPACED: usize = 1024;
const EDGE_POINTS: usize = 128;

fn default_grid(extra: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = (0..EQUISPACED).map(|i| i as f64 / (EQUISPACED - 1) as f64).collect();
    // The equispaced grid alone cannot resolve thresholds of order 1e-3.
    for i in 0..EDGE_POINTS {
        let x = 10f64.powf(-6.0 + 4.0 * i as f64 / (EDGE_POINTS - 1) as f64);
        g.push(x);
        g.push(1.0 - x);
    }
    g.extend(extra.iter().copied().filter(|x| (0.0..=1.0).contains(x)));
    g.sort_by(|a, b| a.total_cmp(b));
    g.dedup();
    g
}

/// Betting confidence sequence for the mean of samples in `[0, 1]`.
///
/// Each candidate mean `q` carries a long and a short capital process, each
/// started at 1/2. `q` is excluded once either reaches `1/alpha`; since the
/// sum of the two is a nonnegative supermartingale under `q`, the sequence has
/// time-uniform coverage `1 - alpha`.
#[derive(Debug, Clone)]
pub struct HedgedCapitalCs {
    alpha: f64,
    grid: Vec<f64>,
    log_long: Vec<f64>,
    log_short: Vec<f64>,
    count: usize,
    sum: f64,
    sum_sq_dev: f64,
    lower: f64,
    upper: f64,
}

impl HedgedCapitalCs {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_extra_grid(alpha, &[])
    }

    /// Adds candidate means to the default grid (e.g. a decision threshold).
    pub fn with_extra_grid(alpha: f64, extra: &[f64]) -> Result<Self> {
        check_alpha("alpha_cs", alpha)?;
        let grid = default_grid(extra);
        let g = grid.len();
        Ok(Self {
            alpha,
            grid,
            log_long: vec![0.5f64.ln(); g],
            log_short: vec![0.5f64.ln(); g],
            count: 0,
            sum: 0.0,
            sum_sq_dev: 0.0,
            lower: 0.0,
            upper: 1.0,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn update(&mut self, batch: &[f64]) -> Result<(f64, f64)> {
        if let Some(x) = batch.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(domain(format!("hedged CS sample {x} outside [0, 1]")));
        }
        if batch.is_empty() {
            return Ok(self.interval());
        }
        let log_2_over_alpha = (2.0 / self.alpha).ln();
        // Multiply in linear space within a batch, fold into logs afterwards.
        // Factors lie in [0.5, 1 + lambda], so a batch of a few hundred cannot overflow.
        let mut lin_long = vec![1.0; self.grid.len()];
        let mut lin_short = vec![1.0; self.grid.len()];
        for chunk in batch.chunks(256) {
            for &x in chunk {
                let t = (self.count + 1) as f64;
                let var_prev = (0.25 + self.sum_sq_dev) / t;
                let lambda = (2.0 * log_2_over_alpha / (var_prev * t)).sqrt();
                for (i, &q) in self.grid.iter().enumerate() {
                    let lp = if q > 0.0 { lambda.min(0.5 / q) } else { lambda };
                    let ls = if q < 1.0 { lambda.min(0.5 / (1.0 - q)) } else { lambda };
                    lin_long[i] *= 1.0 + lp * (x - q);
                    lin_short[i] *= 1.0 - ls * (x - q);
                }
                self.sum += x;
                self.count += 1;
                let mu = (0.5 + self.sum) / (self.count as f64 + 1.0);
                self.sum_sq_dev += (x - mu) * (x - mu);
            }
            for i in 0..self.grid.len() {
                self.log_long[i] += lin_long[i].ln();
                self.log_short[i] += lin_short[i].ln();
                lin_long[i] = 1.0;
                lin_short[i] = 1.0;
            }
        }
        self.refresh();
        Ok(self.interval())
    }

    fn refresh(&mut self) {
        let bar = (1.0 / self.alpha).ln();
        let cap = |i: usize| self.log_long[i].max(self.log_short[i]);
        let g = self.grid.len();
        let first = (0..g).find(|&i| cap(i) < bar);
        let last = (0..g).rev().find(|&i| cap(i) < bar);
        match (first, last) {
            (Some(a), Some(b)) => {
                // The true mean may sit between grid points: widen by one step.
                self.lower = self.grid[a.saturating_sub(1)];
                self.upper = self.grid[(b + 1).min(g - 1)];
            }
            _ => {
                let best = (0..g)
                    .min_by(|&a, &b| cap(a).total_cmp(&cap(b)))
                    .unwrap_or(0);
                self.lower = self.grid[best.saturating_sub(1)];
                self.upper = self.grid[(best + 1).min(g - 1)];
            }
        }
    }
}

/// Tuning parameter minimising the asymptotic width at sample size `k0`.
pub fn asymptotic_rho(alpha: f64, k0: usize) -> f64 {
    let l = -2.0 * alpha.ln();
    ((l + (l + 1.0).ln()) / k0.max(1) as f64).sqrt()
}

/// Radius multiplier `r(k)` so that the interval is `mean ± sd * r(k)`.
pub fn asymptotic_radius(alpha: f64, rho: f64, k: usize) -> f64 {
    let k = k as f64;
    let r2k = rho * rho * k + 1.0;
    (2.0 * r2k / (k * k * rho * rho) * (r2k.sqrt() / alpha).ln()).sqrt()
}

/// Below this many samples the variance estimate is too noisy to use and the
/// asymptotic interval is the whole line.
pub const ASYMPTOTIC_MIN_COUNT: usize = 10;

#[derive(Debug, Clone)]
pub struct AsymptoticCs {
    alpha: f64,
    rho: f64,
    count: usize,
    mean: f64,
    m2: f64,
    lower: f64,
    upper: f64,
}

impl AsymptoticCs {
    pub fn new(alpha: f64, rho: f64) -> Result<Self> {
        check_alpha("alpha_cs", alpha)?;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(domain(format!("rho = {rho} must be positive")));
        }
        Ok(Self {
            alpha,
            rho,
            count: 0,
            mean: 0.0,
            m2: 0.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Welford accumulation without recomputing the interval.
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn update(&mut self, batch: &[f64]) -> Result<(f64, f64)> {
        if let Some(x) = batch.iter().find(|x| !x.is_finite()) {
            return Err(domain(format!("non-finite sample {x}")));
        }
        for &x in batch {
            self.push(x);
        }
        self.refresh();
        Ok(self.interval())
    }

    pub fn refresh(&mut self) {
        if self.count < ASYMPTOTIC_MIN_COUNT {
            self.lower = f64::NEG_INFINITY;
            self.upper = f64::INFINITY;
            return;
        }
        let var = if self.count > 1 { self.m2 / (self.count - 1) as f64 } else { 0.0 };
        let guard = 1e-12 * (1.0 + self.mean.abs());
        let radius = if var > 0.0 {
            (var.sqrt() * asymptotic_radius(self.alpha, self.rho, self.count)).max(guard)
        } else {
            guard
        };
        self.lower = self.mean - radius;
        self.upper = self.mean + radius;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridSchedule {
    pub exact_budget: usize,
    pub asymptotic_budget: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Upper endpoint at or below the target.
    Boost,
    /// Lower endpoint above the target.
    NoBoost,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOutcome {
    pub lower: f64,
    pub upper: f64,
    pub reason: StopReason,
    pub samples: usize,
}

/// Streams samples until the running interval is decisive against `target`.
///
/// With `bounds = Some((lo, hi))` the first `exact_budget` samples feed a
/// hedged-capital sequence on the rescaled values, the rest an asymptotic
/// sequence over all samples seen so far. Without bounds, the asymptotic
/// sequence is used for the whole budget.
pub fn hybrid_cs(
    mut next: impl FnMut() -> Result<f64>,
    alpha: f64,
    schedule: HybridSchedule,
    bounds: Option<(f64, f64)>,
    target: f64,
) -> Result<HybridOutcome> {
    check_alpha("alpha_cs", alpha)?;
    if schedule.batch_size == 0 {
        return Err(domain("batch_size must be at least 1"));
    }
    let total = schedule.exact_budget + schedule.asymptotic_budget;
    let k0 = schedule.exact_budget.max(schedule.batch_size);
    let mut asym = AsymptoticCs::new(alpha, asymptotic_rho(alpha, k0))?;
    let decide = |l: f64, u: f64| {
        if u <= target {
            Some(StopReason::Boost)
        } else if l > target {
            Some(StopReason::NoBoost)
        } else {
            None
        }
    };
    let mut interval = (f64::NEG_INFINITY, f64::INFINITY);
    let mut batch = Vec::with_capacity(schedule.batch_size);
    let mut used = 0;

    if let Some((lo, hi)) = bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(domain(format!("invalid sample bounds [{lo}, {hi}]")));
        }
        let scale = hi - lo;
        let t = (target - lo) / scale;
        let extra = [0.5 * t, 0.75 * t, 0.9 * t, t, 1.1 * t, 1.25 * t, 1.5 * t, 2.0 * t];
        let mut hedged = HedgedCapitalCs::with_extra_grid(alpha, &extra)?;
        interval = (lo, hi);
        while used < schedule.exact_budget {
            let size = schedule.batch_size.min(schedule.exact_budget - used);
            batch.clear();
            for _ in 0..size {
                let x = next()?;
                asym.push(x);
                batch.push(((x - lo) / scale).clamp(0.0, 1.0));
            }
            used += size;
            let (l, u) = hedged.update(&batch)?;
            interval = (lo + scale * l, lo + scale * u);
            if let Some(reason) = decide(interval.0, interval.1) {
                return Ok(HybridOutcome { lower: interval.0, upper: interval.1, reason, samples: used });
            }
        }
    }

    while used < total {
        let size = schedule.batch_size.min(total - used);
        for _ in 0..size {
            let x = next()?;
            if !x.is_finite() {
                return Err(domain(format!("non-finite sample {x}")));
            }
            asym.push(x);
        }
        used += size;
        asym.refresh();
        interval = asym.interval();
        if let Some(reason) = decide(interval.0, interval.1) {
            return Ok(HybridOutcome { lower: interval.0, upper: interval.1, reason, samples: used });
        }
    }
    Ok(HybridOutcome {
        lower: interval.0,
        upper: interval.1,
        reason: StopReason::BudgetExhausted,
        samples: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn bernstein_constant_samples() {
        let (l, u) = bernstein_ci(&[0.3; 50], 0.0, 2.0, 0.05).unwrap();
        let w = 2.0 * 3.0 * 2.0 * (3.0f64 / 0.05).ln() / 50.0;
        assert!(((u - l) - w).abs() < 1e-12);
        assert!(((u + l) / 2.0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn bernstein_width_monotone() {
        let s: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 7.0).collect();
        let w = |a: f64| {
            let (l, u) = bernstein_ci(&s, 0.0, 1.0, a).unwrap();
            u - l
        };
        let mut prev = f64::INFINITY;
        for a in [0.01, 0.1, 0.5, 0.9, 0.99, 0.999999] {
            assert!(w(a) < prev && w(a) > 0.0);
            prev = w(a);
        }
        let doubled: Vec<f64> = s.iter().chain(s.iter()).copied().collect();
        let (l1, u1) = bernstein_ci(&s, 0.0, 1.0, 0.05).unwrap();
        let (l2, u2) = bernstein_ci(&doubled, 0.0, 1.0, 0.05).unwrap();
        assert!(u2 - l2 < u1 - l1);
        assert!(bernstein_ci(&[1.0], 0.0, 1.0, 0.05).is_err());
    }

    #[test]
    fn hedged_point_mass_covered() {
        let mut cs = HedgedCapitalCs::new(0.05).unwrap();
        for _ in 0..40 {
            let (l, u) = cs.update(&[0.5; 50]).unwrap();
            assert!(l < 0.5 && 0.5 < u, "({l}, {u})");
        }
        assert!(cs.update(&[1.5]).is_err());
    }

    #[test]
    fn hedged_smaller_alpha_not_narrower() {
        let mut rng = StreamKey::new(3).stream();
        let data: Vec<f64> = (0..3000).map(|_| rng.random::<f64>().powi(3)).collect();
        let mut a = HedgedCapitalCs::new(0.05).unwrap();
        let mut b = HedgedCapitalCs::new(0.01).unwrap();
        for chunk in data.chunks(100) {
            let (la, ua) = a.update(chunk).unwrap();
            let (lb, ub) = b.update(chunk).unwrap();
            assert!(lb <= la && ub >= ua);
        }
        let (l, u) = a.interval();
        assert!(l < 0.25 && 0.25 < u && u - l < 0.1);
    }

    #[test]
    fn hedged_rescaling_is_affine() {
        let raw = [3.0, 7.0, 5.0, 9.0, 4.0, 8.0];
        let (lo, hi) = (2.0, 10.0);
        let scaled: Vec<f64> = raw.iter().map(|x| (x - lo) / (hi - lo)).collect();
        let mut cs = HedgedCapitalCs::new(0.1).unwrap();
        let (l, u) = cs.update(&scaled).unwrap();
        let back = (lo + (hi - lo) * l, lo + (hi - lo) * u);
        assert_eq!(back.0, lo + (hi - lo) * cs.interval().0);
        assert_eq!(back.1, lo + (hi - lo) * cs.interval().1);
    }

    #[test]
    fn asymptotic_unbounded_before_min_count() {
        let mut cs = AsymptoticCs::new(0.05, 0.1).unwrap();
        let (l, u) = cs.update(&[0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.4, 0.6, 0.8]).unwrap();
        assert!(l.is_infinite() && u.is_infinite());
        let (l, u) = cs.update(&[0.5]).unwrap();
        assert!(l.is_finite() && u.is_finite());
    }

    #[test]
    fn asymptotic_zero_variance_guard() {
        let mut cs = AsymptoticCs::new(0.05, 0.1).unwrap();
        let (l, u) = cs.update(&[2.0; 20]).unwrap();
        assert!(l < 2.0 && u > 2.0);
        assert!((u - l - 2.0 * 1e-12 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_radius_decreasing() {
        let rho: f64 = 0.05;
        let start = (1.0 / (rho * rho)).ceil() as usize;
        let mut prev = f64::INFINITY;
        for k in (start..start + 20_000).step_by(37) {
            let r = asymptotic_radius(0.05, rho, k);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn hybrid_negative_stream_boosts() {
        let sched = HybridSchedule { exact_budget: 300, asymptotic_budget: 200, batch_size: 100 };
        let out = hybrid_cs(|| Ok(0.0), 0.01, sched, Some((0.0, 10.0)), 1.0).unwrap();
        assert_eq!(out.reason, StopReason::Boost);
        assert!(out.samples < 500);
        let out = hybrid_cs(|| Ok(-1.0), 0.01, sched, None, 0.0).unwrap();
        assert_eq!(out.reason, StopReason::Boost);
        assert_eq!(out.samples, 100);
        let out = hybrid_cs(|| Ok(1.0), 0.01, sched, None, 0.0).unwrap();
        assert_eq!(out.reason, StopReason::NoBoost);
    }

    #[test]
    fn hybrid_pure_asymptotic_and_exhaustion() {
        let mut rng = StreamKey::new(5).stream();
        let sched = HybridSchedule { exact_budget: 0, asymptotic_budget: 1000, batch_size: 100 };
        let out = hybrid_cs(|| Ok(rng.sample::<f64, _>(StandardNormal)), 0.05, sched, Some((0.0, 1.0)), 0.0).unwrap();
        assert_eq!(out.reason, StopReason::BudgetExhausted);
        assert_eq!(out.samples, 1000);
    }
}
