//! Data generation and per-replication method runs.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ExperimentConfig, ExperimentKind, FilterRule};
use super::ReplicationResult;
use crate::calibration::{ebhcc, mc_level, BoostOutcome, BudgetedTarget, CcConfig, Decision, Oracle, boost_with_budget};
use crate::conformal::{conformal_resampler, weighted_evalues_at, weighted_pvalues, KdeScore, ScoreFunction, WeightedInstance};
use crate::error::Result;
use crate::evalue::{bh, ebh, metrics, EValueVector, GroundTruth, PValueVector, RejectionSet};
use crate::knockoffs::{
    crt_resampler, holdout_lambda, knockoff_threshold, lcd_stats, sample_knockoffs, Dataset, GaussianDesignModel,
    KnockoffPipeline, ThresholdVariant,
};
use crate::linalg::{ar1, sym_factor};
use crate::parametric::{marginal_boost_factor, simulate_t, simulate_z, TInstance, TResampler, ZInstance, ZResampler};
use crate::rng::{purpose, Stream, StreamKey};

/// Method names in CSV order for an experiment kind.
pub fn methods(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Zstat | ExperimentKind::Tstat | ExperimentKind::Outlier => &["BH", "e-BH", "e-BH-CC"],
        ExperimentKind::KnockoffDense | ExperimentKind::KnockoffSparse => &["knockoff-filter", "e-BH", "e-BH-CC"],
        ExperimentKind::MarginalBoostCompare => &["BH", "e-BH", "e-BH-marginal", "e-BH-CC", "e-BH-CC-doubly"],
    }
}

pub(super) fn cc_config(cfg: &ExperimentConfig) -> CcConfig {
    CcConfig {
        alpha: cfg.alpha,
        alpha_cc: cfg.alpha_cc,
        alpha0: cfg.alpha0,
        batch_size: cfg.batch_size,
        exact_cs_budget: cfg.exact_cs_budget,
        asymptotic_cs_budget: cfg.asymptotic_cs_budget,
        rounds: 1,
    }
}

/// One method's outcome within a replication.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: &'static str,
    pub rejections: RejectionSet,
    pub n_boosted: usize,
    pub samples: usize,
    pub seconds: f64,
}

/// Everything a replication produced, before conversion to CSV rows.
#[derive(Debug, Clone)]
pub struct Replication {
    pub rep: usize,
    pub truth: GroundTruth,
    /// Base e-values, for containment checks.
    pub evalues: EValueVector,
    pub runs: Vec<MethodRun>,
}

impl Replication {
    pub fn run(&self, method: &str) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }

    pub fn rows(&self, seed: u64) -> Vec<ReplicationResult> {
        self.runs
            .iter()
            .map(|r| {
                let (fdp, power) = metrics(&r.rejections, &self.truth);
                ReplicationResult {
                    method: r.method.to_string(),
                    rep: self.rep,
                    power,
                    fdp,
                    n_reject: r.rejections.len(),
                    n_boosted: r.n_boosted,
                    samples: r.samples,
                    seconds: r.seconds,
                    seed,
                }
            })
            .collect()
    }
}

struct Clock {
    on: bool,
    start: Instant,
}

impl Clock {
    fn new(on: bool) -> Self {
        Self { on, start: Instant::now() }
    }

    fn lap(&mut self) -> f64 {
        let s = if self.on { self.start.elapsed().as_secs_f64() } else { 0.0 };
        self.start = Instant::now();
        s
    }
}

fn plain(method: &'static str, rejections: RejectionSet, seconds: f64) -> MethodRun {
    MethodRun { method, rejections, n_boosted: 0, samples: 0, seconds }
}

fn mask_from_filter(rule: FilterRule, alpha: f64, e: &[f64], p: Option<&[f64]>) -> Option<Vec<usize>> {
    let m = e.len();
    match rule {
        FilterRule::All => None,
        FilterRule::Nonzero => Some((0..m).filter(|&j| e[j] > 0.0).collect()),
        FilterRule::PValue(f) => match p {
            Some(p) => Some((0..m).filter(|&j| e[j] > 0.0 && p[j] <= f * alpha).collect()),
            None => Some((0..m).filter(|&j| e[j] > 0.0).collect()),
        },
    }
}

pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<Replication> {
    let key = StreamKey::new(cfg.seed).child(rep as u64);
    match cfg.kind {
        ExperimentKind::Zstat | ExperimentKind::MarginalBoostCompare => zstat(cfg, rep, key),
        ExperimentKind::Tstat => tstat(cfg, rep, key),
        ExperimentKind::KnockoffDense | ExperimentKind::KnockoffSparse => knockoff(cfg, rep, key),
        ExperimentKind::Outlier => outlier(cfg, rep, key),
    }
}

/// `μ` with `A` on the first `nonnull` coordinates.
fn parametric_mean(cfg: &ExperimentConfig) -> (Vec<f64>, GroundTruth) {
    let mu: Vec<f64> = (0..cfg.m).map(|j| if j < cfg.nonnull { cfg.amplitude } else { 0.0 }).collect();
    let nonnull: Vec<usize> = if cfg.amplitude != 0.0 { (0..cfg.nonnull).collect() } else { Vec::new() };
    (mu, GroundTruth::from_nonnulls(cfg.m, &nonnull))
}

fn zstat(cfg: &ExperimentConfig, rep: usize, key: StreamKey) -> Result<Replication> {
    let sigma = ar1(cfg.m, cfg.rho);
    let factor = sym_factor(&sigma)?;
    let (mu, truth) = parametric_mean(cfg);
    let z = simulate_z(&mu, &factor, &mut key.child(purpose::DATA).stream());
    let a = cfg.lrt_value();
    let inst = ZInstance::new(z, sigma, vec![a; cfg.m])?;
    let e = inst.evalues();
    let p = inst.pvalues();
    let mut clock = Clock::new(cfg.timing);
    let mut runs = vec![plain("BH", bh(&PValueVector::new(p.clone())?, cfg.alpha)?, clock.lap())];
    runs.push(plain("e-BH", ebh(&e, cfg.alpha)?, clock.lap()));

    let cc = cc_config(cfg);
    let mask = mask_from_filter(cfg.filter, cfg.alpha, e.as_slice(), Some(&p));
    let boost_key = key.child(purpose::BOOST);

    let b = if cfg.kind == ExperimentKind::MarginalBoostCompare {
        let b = marginal_boost_factor(a, cfg.alpha)?;
        let be = EValueVector::new(e.as_slice().iter().map(|v| v * b).collect())?;
        runs.push(plain("e-BH-marginal", ebh(&be, cfg.alpha)?, clock.lap()));
        Some((b, be))
    } else {
        None
    };

    let res = ebhcc(&e, |j| Ok(ZResampler::new(&inst, j)), &cc, mask.as_deref(), Oracle::Avcs, boost_key)?;
    runs.push(MethodRun {
        method: "e-BH-CC",
        n_boosted: res.n_boosted(),
        samples: res.samples(),
        rejections: res.rejections,
        seconds: clock.lap(),
    });

    if let Some((b, be)) = b {
        let mask = mask_from_filter(cfg.filter, cfg.alpha, be.as_slice(), Some(&p));
        let run = doubly_boosted(&inst, &e, &be, b, &cc, mask, boost_key.child(1))?;
        runs.push(MethodRun { seconds: clock.lap(), ..run });
    }
    Ok(Replication { rep, truth, evalues: e, runs })
}

/// e-BH-CC on `b·e` with the original e-values as the budget.
fn doubly_boosted(
    inst: &ZInstance,
    e: &EValueVector,
    be: &EValueVector,
    b: f64,
    cc: &CcConfig,
    mask: Option<Vec<usize>>,
    key: StreamKey,
) -> Result<MethodRun> {
    use rayon::prelude::*;
    let m = e.len();
    let base = ebh(be, cc.alpha)?;
    let mut in_mask = vec![mask.is_none(); m];
    for &j in mask.iter().flatten().chain(base.indices()) {
        in_mask[j] = true;
    }
    let mask_size = in_mask.iter().filter(|x| **x).count();
    let scale = move |x: &[f64]| x.iter().map(|v| v * b).collect::<Vec<f64>>();
    let spec = BudgetedTarget { target: be, budget: e, map: &scale, shortcut: true };
    let outcomes: Vec<BoostOutcome> = (0..m)
        .into_par_iter()
        .map(|j| {
            if !in_mask[j] {
                return Ok(BoostOutcome { hypothesis: j, decision: Decision::Skipped, samples_used: 0, interval: None, value: 0.0 });
            }
            let level = mc_level(be.as_slice(), j, cc.alpha_cc, cc.alpha0, mask_size);
            boost_with_budget(&spec, j, &ZResampler::new(inst, j), cc, level, key.child(j as u64))
        })
        .collect::<Result<_>>()?;
    let boosted = EValueVector::new(outcomes.iter().map(|o| o.value).collect())?;
    Ok(MethodRun {
        method: "e-BH-CC-doubly",
        rejections: ebh(&boosted, cc.alpha)?,
        n_boosted: outcomes.iter().filter(|o| o.decision == Decision::Boosted).count(),
        samples: outcomes.iter().map(|o| o.samples_used).sum(),
        seconds: 0.0,
    })
}

fn tstat(cfg: &ExperimentConfig, rep: usize, key: StreamKey) -> Result<Replication> {
    let sigma = ar1(cfg.m, cfg.rho);
    let factor = sym_factor(&sigma)?;
    let (mu, truth) = parametric_mean(cfg);
    let (z, w) = simulate_t(&mu, &factor, cfg.dof, &mut key.child(purpose::DATA).stream());
    let inst = TInstance::new(z, sigma, w, cfg.dof, vec![cfg.lrt_value(); cfg.m])?;
    let e = inst.evalues()?;
    let p = inst.pvalues()?;
    let mut clock = Clock::new(cfg.timing);
    let mut runs = vec![plain("BH", bh(&PValueVector::new(p.clone())?, cfg.alpha)?, clock.lap())];
    runs.push(plain("e-BH", ebh(&e, cfg.alpha)?, clock.lap()));
    let mask = mask_from_filter(cfg.filter, cfg.alpha, e.as_slice(), Some(&p));
    let res = ebhcc(&e, |j| Ok(TResampler::new(&inst, j)), &cc_config(cfg), mask.as_deref(), Oracle::Avcs, key.child(purpose::BOOST))?;
    runs.push(MethodRun {
        method: "e-BH-CC",
        n_boosted: res.n_boosted(),
        samples: res.samples(),
        rejections: res.rejections,
        seconds: clock.lap(),
    });
    Ok(Replication { rep, truth, evalues: e, runs })
}

/// Nonnull positions: every `zeros` nulls are followed by one signal.
pub fn knockoff_support(m: usize, zeros: usize) -> Vec<usize> {
    (0..m).filter(|j| j % (zeros + 1) == zeros).collect()
}

fn gaussian_rows(n: usize, factor: &DMatrix<f64>, rng: &mut Stream) -> DMatrix<f64> {
    let m = factor.nrows();
    let z = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * factor.transpose()
}

fn linear_response(x: &DMatrix<f64>, beta: &DVector<f64>, rng: &mut Stream) -> DVector<f64> {
    let mut y = x * beta;
    for v in y.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    y
}

fn knockoff(cfg: &ExperimentConfig, rep: usize, key: StreamKey) -> Result<Replication> {
    let (m, n) = (cfg.m, cfg.n);
    let sigma = ar1(m, cfg.rho);
    let factor = sym_factor(&sigma)?;
    let support = knockoff_support(m, cfg.zeros);
    let amp = cfg.amplitude / (n as f64).sqrt();
    let mut beta = DVector::zeros(m);
    for (k, &j) in support.iter().enumerate() {
        beta[j] = if k % 2 == 0 { amp } else { -amp };
    }
    let truth = GroundTruth::from_nonnulls(m, if cfg.amplitude != 0.0 { &support } else { &[] });
    let model = GaussianDesignModel::with_method(DVector::zeros(m), sigma, cfg.s_method)?;

    let mut rng = key.child(purpose::DATA).stream();
    let x = gaussian_rows(n, &factor, &mut rng);
    let y = linear_response(&x, &beta, &mut rng);
    let data = Dataset::new(x, y)?;
    let mut hrng = key.child(purpose::HOLDOUT).stream();
    let hx = gaussian_rows(cfg.n_holdout, &factor, &mut hrng);
    let hy = linear_response(&hx, &beta, &mut hrng);
    let lambda = holdout_lambda(&model, &Dataset::new(hx, hy)?, &mut hrng)?;

    let mut clock = Clock::new(cfg.timing);
    // baseline: one fresh knockoff draw, standard threshold at α
    let xt = sample_knockoffs(&model, &data.x, &mut key.child(purpose::BASELINE).stream())?;
    let w = lcd_stats(&data.x, &xt, &data.y, lambda)?;
    let t = knockoff_threshold(&w, cfg.alpha, ThresholdVariant::Standard)?;
    let kf = RejectionSet::from_indices((0..m).filter(|&j| w[j] >= t).collect());
    let mut runs = vec![plain("knockoff-filter", kf, clock.lap())];

    let pipeline = KnockoffPipeline::new(model, cfg.d, cfg.alpha_kn(), lambda, ThresholdVariant::EarlyStop)?;
    let e = pipeline.run(&data, key.child(purpose::KNOCKOFF))?.averaged;
    runs.push(plain("e-BH", ebh(&e, cfg.alpha)?, clock.lap()));
    let mask = mask_from_filter(cfg.filter, cfg.alpha, e.as_slice(), None);
    let res = ebhcc(&e, |j| crt_resampler(&pipeline, &data, j), &cc_config(cfg), mask.as_deref(), Oracle::Avcs, key.child(purpose::BOOST))?;
    runs.push(MethodRun {
        method: "e-BH-CC",
        n_boosted: res.n_boosted(),
        samples: res.samples(),
        rejections: res.rejections,
        seconds: clock.lap(),
    });
    Ok(Replication { rep, truth, evalues: e, runs })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Covariate-shift outlier model: calibration inliers `L + W`, test inliers
/// tilted by `σ(xᵀθ)`, outliers `√a L + W`, `W` uniform over fixed centers.
pub struct OutlierModel {
    centers: Vec<Vec<f64>>,
    theta: Vec<f64>,
    a: f64,
}

impl OutlierModel {
    pub fn new(dim: usize, n_centers: usize, a: f64, rng: &mut Stream) -> Self {
        let centers = (0..n_centers)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let pattern = [0.3, 0.3, 0.2, 0.2, 0.1, 0.1];
        let theta = (0..dim).map(|k| pattern.get(k).copied().unwrap_or(0.0)).collect();
        Self { centers, theta, a }
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        sigmoid(x.iter().zip(&self.theta).map(|(a, b)| a * b).sum())
    }

    fn point(&self, scale: f64, rng: &mut Stream) -> Vec<f64> {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        c.iter().map(|w| scale * rng.sample::<f64, _>(StandardNormal) + w).collect()
    }

    pub fn calibration(&self, rng: &mut Stream) -> Vec<f64> {
        self.point(1.0, rng)
    }

    /// Rejection sampling with acceptance probability `w(x) ≤ 1`.
    pub fn test_inlier(&self, rng: &mut Stream) -> Vec<f64> {
        loop {
            let x = self.point(1.0, rng);
            if rng.random::<f64>() < self.weight(&x) {
                return x;
            }
        }
    }

    pub fn outlier(&self, rng: &mut Stream) -> Vec<f64> {
        self.point(self.a.sqrt(), rng)
    }
}

fn outlier(cfg: &ExperimentConfig, rep: usize, key: StreamKey) -> Result<Replication> {
    // centers are fixed for the whole experiment
    let model = OutlierModel::new(cfg.dim, cfg.n_centers, cfg.outlier_a, &mut StreamKey::new(cfg.seed).child(purpose::DATA).stream());
    let mut hrng = key.child(purpose::HOLDOUT).stream();
    let score = KdeScore::fit((0..cfg.n_holdout).map(|_| model.calibration(&mut hrng)).collect())?;

    let mut rng = key.child(purpose::DATA).stream();
    let n_out = (cfg.pi1 * cfg.m as f64).round() as usize;
    let calib: Vec<Vec<f64>> = (0..cfg.n).map(|_| model.calibration(&mut rng)).collect();
    let test: Vec<Vec<f64>> = (0..cfg.m)
        .map(|j| if j < n_out { model.outlier(&mut rng) } else { model.test_inlier(&mut rng) })
        .collect();
    let truth = GroundTruth::from_nonnulls(cfg.m, &(0..n_out).collect::<Vec<_>>());
    let inst = WeightedInstance::new(
        calib.iter().map(|x| score.score(x)).collect(),
        calib.iter().map(|x| model.weight(x)).collect(),
        test.iter().map(|x| score.score(x)).collect(),
        test.iter().map(|x| model.weight(x)).collect(),
    )?;

    let mut clock = Clock::new(cfg.timing);
    let p = weighted_pvalues(&inst)?;
    let mut runs = vec![plain("BH", bh(&p, cfg.alpha)?, clock.lap())];
    let e = weighted_evalues_at(&inst, cfg.alpha)?;
    runs.push(plain("e-BH", ebh(&e, cfg.alpha)?, clock.lap()));
    let mask = mask_from_filter(cfg.filter, cfg.alpha, e.as_slice(), Some(p.as_slice()));
    let res = ebhcc(&e, |j| conformal_resampler(&inst, j, cfg.alpha), &cc_config(cfg), mask.as_deref(), Oracle::Exact, key.child(purpose::BOOST))?;
    runs.push(MethodRun {
        method: "e-BH-CC",
        n_boosted: res.n_boosted(),
        samples: res.samples(),
        rejections: res.rejections,
        seconds: clock.lap(),
    });
    Ok(Replication { rep, truth, evalues: e, runs })
}
