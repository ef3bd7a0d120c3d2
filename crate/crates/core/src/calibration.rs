//! Conditional calibration: boost decisions for individual e-values and the
//! e-BH-CC pipeline built on them.
//!
//! For hypothesis `j` with sufficient statistic `S_j`, a [`Resampler`] draws
//! `ẽ | S_j` under the null. Each draw yields an indicator term
//! `(m/α)·1{ẽ_j |R̂_j(ẽ)| ≥ e_j |R̂_j(e)|} / |R̂_j(ẽ)|` whose conditional mean,
//! minus `E[ẽ_j | S_j]`, decides whether `e_j` is boosted to `m / (α |R̂_j(e)|)`.
//! `R̂_j(x)` is the e-BH rejection set of `x` with `j` added.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;

use crate::confidence::{bernstein_ci, hybrid_cs, HybridSchedule, StopReason};
use crate::error::{check_alpha, domain, Error, Result};
use crate::evalue::{clears, ebh_count, ebh_raw, EValueVector, RejectionSet};
use crate::rng::{Stream, StreamKey};

/// Conditional null law of the e-value vector given `S_j`.
pub trait Resampler: Send + Sync {
    fn hypothesis(&self) -> usize;

    /// One draw of `ẽ | S_j`.
    fn draw(&self, rng: &mut Stream) -> Result<EValueVector>;

    /// Finite enumeration of the conditional law, probabilities summing to 1.
    fn exact_support(&self) -> Option<Vec<(EValueVector, f64)>> {
        None
    }

    /// `E[ẽ_j | S_j]` when known in closed form.
    fn conditional_budget(&self) -> Option<f64> {
        None
    }

    /// Almost-sure upper bound on `ẽ_j`. Without an analytic budget, the CI
    /// oracle needs it and the AVCS oracle uses it for its bounded phase.
    fn evalue_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcConfig {
    pub alpha: f64,
    pub alpha_cc: f64,
    pub alpha0: f64,
    pub batch_size: usize,
    pub exact_cs_budget: usize,
    pub asymptotic_cs_budget: usize,
    pub rounds: usize,
}

impl CcConfig {
    /// `alpha_cc = alpha`, `alpha0 = alpha / 10`, budgets (3000, 2000), batches of 100.
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            alpha_cc: alpha,
            alpha0: alpha / 10.0,
            batch_size: 100,
            exact_cs_budget: 3000,
            asymptotic_cs_budget: 2000,
            rounds: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha("alpha", self.alpha)?;
        check_alpha("alpha_cc", self.alpha_cc)?;
        check_alpha("alpha0", self.alpha0)?;
        if self.batch_size == 0 {
            return Err(domain("batch_size must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(domain("rounds must be at least 1"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> HybridSchedule {
        HybridSchedule {
            exact_budget: self.exact_cs_budget,
            asymptotic_budget: self.asymptotic_cs_budget,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Boosted,
    NotBoosted,
    /// `e_j = 0`, or `j` outside the mask.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub hypothesis: usize,
    pub decision: Decision,
    pub samples_used: usize,
    /// Final interval for the quantity compared against the budget; `None`
    /// when no sampling happened.
    pub interval: Option<(f64, f64)>,
    pub value: f64,
}

impl BoostOutcome {
    fn fixed(j: usize, decision: Decision, value: f64) -> Self {
        Self { hypothesis: j, decision, samples_used: 0, interval: None, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McTerms {
    pub indicator: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetMode {
    Difference,
    AnalyticBudget(f64),
}

pub fn budget_mode_select<R: Resampler + ?Sized>(resampler: &R) -> BudgetMode {
    match resampler.conditional_budget() {
        Some(b) => BudgetMode::AnalyticBudget(b),
        None => BudgetMode::Difference,
    }
}

/// Per-hypothesis constants of the indicator term.
#[derive(Debug, Clone)]
struct Calibrator {
    m: usize,
    j: usize,
    alpha_cc: f64,
    e_j: f64,
    /// `|R̂_j(e)|`
    rhat: usize,
    in_rejection: bool,
    scratch: Vec<f64>,
}

impl Calibrator {
    fn new(e: &[f64], j: usize, alpha_cc: f64) -> Self {
        let m = e.len();
        let mut scratch = Vec::with_capacity(m);
        let k = ebh_count(e, alpha_cc, &mut scratch);
        let in_rejection = clears(e[j], alpha_cc, k, m);
        Self {
            m,
            j,
            alpha_cc,
            e_j: e[j],
            rhat: if in_rejection { k } else { k + 1 },
            in_rejection,
            scratch,
        }
    }

    fn boosted_value(&self) -> f64 {
        self.m as f64 / (self.alpha_cc * self.rhat as f64)
    }

    fn rhat_of(&mut self, x: &[f64]) -> usize {
        let k = ebh_count(x, self.alpha_cc, &mut self.scratch);
        if clears(x[self.j], self.alpha_cc, k, self.m) {
            k
        } else {
            k + 1
        }
    }

    fn indicator(&mut self, x: &[f64]) -> f64 {
        if x[self.j] <= 0.0 {
            return 0.0;
        }
        let r = self.rhat_of(x);
        let lhs = x[self.j] * r as f64;
        let rhs = self.e_j * self.rhat as f64;
        if lhs >= rhs * (1.0 - crate::evalue::TIE_SLACK) {
            self.m as f64 / self.alpha_cc / r as f64
        } else {
            0.0
        }
    }
}

fn check_pair(e: &EValueVector, e_tilde: &EValueVector, j: usize) -> Result<()> {
    if e.len() != e_tilde.len() {
        return Err(domain(format!("resample has length {} but e has length {}", e_tilde.len(), e.len())));
    }
    if j >= e.len() {
        return Err(domain(format!("hypothesis {j} out of range for m = {}", e.len())));
    }
    Ok(())
}

pub fn mc_sample(e: &EValueVector, j: usize, e_tilde: &EValueVector, alpha_cc: f64) -> Result<McTerms> {
    check_alpha("alpha_cc", alpha_cc)?;
    check_pair(e, e_tilde, j)?;
    if e.as_slice()[j] <= 0.0 {
        return Err(domain(format!("mc_sample requires e_{j} > 0")));
    }
    let mut cal = Calibrator::new(e.as_slice(), j, alpha_cc);
    let indicator = cal.indicator(e_tilde.as_slice());
    Ok(McTerms { indicator, difference: indicator - e_tilde.as_slice()[j] })
}

fn support_of<R: Resampler + ?Sized>(resampler: &R) -> Result<Vec<(EValueVector, f64)>> {
    let support = resampler
        .exact_support()
        .ok_or_else(|| Error::Unsupported("resampler has no exact support".into()))?;
    let total: f64 = support.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!("exact support probabilities sum to {total}")));
    }
    Ok(support)
}

pub fn phi_exact<R: Resampler + ?Sized>(e: &EValueVector, j: usize, resampler: &R, alpha_cc: f64) -> Result<f64> {
    check_alpha("alpha_cc", alpha_cc)?;
    let support = support_of(resampler)?;
    let mut cal = Calibrator::new(e.as_slice(), j, alpha_cc);
    let mut phi = 0.0;
    for (x, p) in &support {
        check_pair(e, x, j)?;
        phi += p * (cal.indicator(x.as_slice()) - x.as_slice()[j]);
    }
    Ok(phi)
}

/// Handles the two cases that never need the resampler.
fn trivial_outcome(cal: &Calibrator, e_j: f64) -> Option<BoostOutcome> {
    if e_j <= 0.0 {
        Some(BoostOutcome::fixed(cal.j, Decision::Skipped, 0.0))
    } else if cal.in_rejection {
        Some(BoostOutcome::fixed(cal.j, Decision::Boosted, cal.boosted_value()))
    } else {
        None
    }
}

fn outcome(cal: &Calibrator, boost: bool, samples: usize, interval: Option<(f64, f64)>) -> BoostOutcome {
    BoostOutcome {
        hypothesis: cal.j,
        decision: if boost { Decision::Boosted } else { Decision::NotBoosted },
        samples_used: samples,
        interval,
        value: if boost { cal.boosted_value() } else { 0.0 },
    }
}

pub fn boost_exact<R: Resampler + ?Sized>(e: &EValueVector, j: usize, resampler: &R, cfg: &CcConfig) -> Result<BoostOutcome> {
    let cal = Calibrator::new(e.as_slice(), j, cfg.alpha_cc);
    if let Some(o) = trivial_outcome(&cal, e.as_slice()[j]) {
        return Ok(o);
    }
    let phi = phi_exact(e, j, resampler, cfg.alpha_cc)?;
    Ok(outcome(&cal, phi <= 0.0, 0, Some((phi, phi))))
}

/// Source of `(resampled target vector, budget term ẽ_j)` pairs.
struct DrawPair<'a, R: Resampler + ?Sized> {
    resampler: &'a R,
    map: Option<&'a (dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
    j: usize,
    m: usize,
}

impl<R: Resampler + ?Sized> DrawPair<'_, R> {
    fn next(&self, rng: &mut Stream, cal: &mut Calibrator) -> Result<(f64, f64)> {
        let x = self.resampler.draw(rng)?;
        if x.len() != self.m {
            return Err(domain(format!("resample has length {} but m = {}", x.len(), self.m)));
        }
        let budget = x.as_slice()[self.j];
        let ind = match self.map {
            Some(f) => cal.indicator(&f(x.as_slice())),
            None => cal.indicator(x.as_slice()),
        };
        Ok((ind, budget))
    }
}

fn ci_decide<R: Resampler + ?Sized>(
    cal: &mut Calibrator,
    pair: &DrawPair<'_, R>,
    k: usize,
    alpha_ci: f64,
    rng: &mut Stream,
) -> Result<BoostOutcome> {
    let upper = cal.m as f64 / cal.alpha_cc;
    let mode = budget_mode_select(pair.resampler);
    let mut samples = Vec::with_capacity(k);
    for _ in 0..k {
        let (ind, budget) = pair.next(rng, cal)?;
        samples.push(match mode {
            BudgetMode::AnalyticBudget(_) => ind,
            BudgetMode::Difference => ind - budget,
        });
    }
    let (l, u, target) = match mode {
        BudgetMode::AnalyticBudget(b) => {
            let (l, u) = bernstein_ci(&samples, 0.0, upper, alpha_ci)?;
            (l, u, b)
        }
        BudgetMode::Difference => {
            let bound = pair.resampler.evalue_bound().ok_or_else(|| {
                Error::Unsupported("fixed-sample CI needs an analytic budget or an e-value bound".into())
            })?;
            let (l, u) = bernstein_ci(&samples, -bound, upper, alpha_ci)?;
            (l, u, 0.0)
        }
    };
    Ok(outcome(cal, u <= target, k, Some((l, u))))
}

fn avcs_decide<R: Resampler + ?Sized>(
    cal: &mut Calibrator,
    pair: &DrawPair<'_, R>,
    cfg: &CcConfig,
    alpha_avcs: f64,
    rng: &mut Stream,
) -> Result<BoostOutcome> {
    let upper = cal.m as f64 / cal.alpha_cc;
    let res = match budget_mode_select(pair.resampler) {
        BudgetMode::AnalyticBudget(b) => hybrid_cs(
            || pair.next(rng, cal).map(|(ind, _)| ind),
            alpha_avcs,
            cfg.schedule(),
            Some((0.0, upper)),
            b,
        )?,
        BudgetMode::Difference => hybrid_cs(
            || pair.next(rng, cal).map(|(ind, budget)| ind - budget),
            alpha_avcs,
            cfg.schedule(),
            pair.resampler.evalue_bound().map(|b| (-b, upper)),
            0.0,
        )?,
    };
    Ok(outcome(cal, res.reason == StopReason::Boost, res.samples, Some((res.lower, res.upper))))
}

pub fn boost_ci<R: Resampler + ?Sized>(
    e: &EValueVector,
    j: usize,
    resampler: &R,
    cfg: &CcConfig,
    k: usize,
    alpha_ci: f64,
    key: StreamKey,
) -> Result<BoostOutcome> {
    check_alpha("alpha_ci", alpha_ci)?;
    if k < 2 {
        return Err(domain(format!("boost_ci needs K >= 2, got {k}")));
    }
    let mut cal = Calibrator::new(e.as_slice(), j, cfg.alpha_cc);
    if let Some(o) = trivial_outcome(&cal, e.as_slice()[j]) {
        return Ok(o);
    }
    let pair = DrawPair { resampler, map: None, j, m: e.len() };
    ci_decide(&mut cal, &pair, k, alpha_ci, &mut key.stream())
}

pub fn boost_avcs<R: Resampler + ?Sized>(
    e: &EValueVector,
    j: usize,
    resampler: &R,
    cfg: &CcConfig,
    alpha_avcs: f64,
    key: StreamKey,
) -> Result<BoostOutcome> {
    check_alpha("alpha_avcs", alpha_avcs)?;
    let mut cal = Calibrator::new(e.as_slice(), j, cfg.alpha_cc);
    if let Some(o) = trivial_outcome(&cal, e.as_slice()[j]) {
        return Ok(o);
    }
    if cfg.exact_cs_budget + cfg.asymptotic_cs_budget == 0 {
        return Ok(outcome(&cal, false, 0, None));
    }
    let pair = DrawPair { resampler, map: None, j, m: e.len() };
    avcs_decide(&mut cal, &pair, cfg, alpha_avcs, &mut key.stream())
}

/// Boost decision where the indicator is built from `target = map(e)` while the
/// subtracted budget is the original `ẽ_j`.
pub struct BudgetedTarget<'a> {
    pub target: &'a EValueVector,
    pub budget: &'a EValueVector,
    /// Applied to every resampled budget vector to get the resampled target.
    pub map: &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync),
    /// Boost `j ∈ ebh(target)` without sampling. Only valid when `φ_j(1) ≤ 0`
    /// is known for the target, e.g. lognormal e-values scaled by the
    /// marginal boosting factor.
    pub shortcut: bool,
}

pub fn boost_with_budget<R: Resampler + ?Sized>(
    spec: &BudgetedTarget<'_>,
    j: usize,
    resampler: &R,
    cfg: &CcConfig,
    alpha_avcs: f64,
    key: StreamKey,
) -> Result<BoostOutcome> {
    check_alpha("alpha_avcs", alpha_avcs)?;
    if spec.target.len() != spec.budget.len() {
        return Err(domain("target and budget lengths differ"));
    }
    let mut cal = Calibrator::new(spec.target.as_slice(), j, cfg.alpha_cc);
    if spec.target.as_slice()[j] <= 0.0 {
        return Ok(BoostOutcome::fixed(j, Decision::Skipped, 0.0));
    }
    if spec.shortcut && cal.in_rejection {
        return Ok(BoostOutcome::fixed(j, Decision::Boosted, cal.boosted_value()));
    }
    let pair = DrawPair { resampler, map: Some(spec.map), j, m: spec.target.len() };
    avcs_decide(&mut cal, &pair, cfg, alpha_avcs, &mut key.stream())
}

pub fn apply_mask(e_boost: &EValueVector, mask: &[usize]) -> EValueVector {
    let mut keep = vec![false; e_boost.len()];
    for &j in mask {
        if j < keep.len() {
            keep[j] = true;
        }
    }
    let v = e_boost
        .as_slice()
        .iter()
        .zip(&keep)
        .map(|(&x, &k)| if k { x } else { 0.0 })
        .collect();
    EValueVector::new(v).expect("masking preserves validity")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    /// Exact enumeration through `exact_support`.
    Exact,
    /// Fixed `samples` draws with an empirical-Bernstein interval.
    Ci { samples: usize },
    /// Anytime-valid hybrid sequence with the configured budgets.
    Avcs,
}

#[derive(Debug, Clone)]
pub struct CcResult {
    pub rejections: RejectionSet,
    /// One entry per hypothesis, in index order.
    pub outcomes: Vec<BoostOutcome>,
    /// Masked boosted e-values.
    pub boosted: EValueVector,
}

impl CcResult {
    pub fn n_boosted(&self) -> usize {
        self.outcomes.iter().filter(|o| o.decision == Decision::Boosted).count()
    }

    pub fn samples(&self) -> usize {
        self.outcomes.iter().map(|o| o.samples_used).sum()
    }
}

/// Monte-Carlo level for hypothesis `j`: `alpha0 · |R̂_j(e)| / |M|`.
pub fn mc_level(e: &[f64], j: usize, alpha_cc: f64, alpha0: f64, mask_size: usize) -> f64 {
    let cal = Calibrator::new(e, j, alpha_cc);
    (alpha0 * cal.rhat as f64 / mask_size.max(1) as f64).min(alpha0)
}

/// The full e-BH-CC pipeline. `resampler(j)` is called only for hypotheses
/// that need sampling. `mask = None` boosts every hypothesis; a given mask is
/// enlarged by `ebh(e, alpha)`.
pub fn ebhcc<F, R>(
    e: &EValueVector,
    resampler: F,
    cfg: &CcConfig,
    mask: Option<&[usize]>,
    oracle: Oracle,
    key: StreamKey,
) -> Result<CcResult>
where
    F: Fn(usize) -> Result<R> + Sync,
    R: Resampler,
{
    cfg.validate()?;
    let m = e.len();
    let ev = e.as_slice();
    let base = ebh_raw(ev, cfg.alpha);
    let mut in_mask = vec![mask.is_none(); m];
    if let Some(mask) = mask {
        for &j in mask.iter().chain(base.indices()) {
            if j >= m {
                return Err(domain(format!("mask index {j} out of range for m = {m}")));
            }
            in_mask[j] = true;
        }
    }
    let mask_size = in_mask.iter().filter(|b| **b).count();

    let outcomes: Vec<BoostOutcome> = (0..m)
        .into_par_iter()
        .map(|j| -> Result<BoostOutcome> {
            if !in_mask[j] {
                return Ok(BoostOutcome::fixed(j, Decision::Skipped, 0.0));
            }
            let cal = Calibrator::new(ev, j, cfg.alpha_cc);
            if let Some(o) = trivial_outcome(&cal, ev[j]) {
                return Ok(o);
            }
            let r = resampler(j)?;
            let level = mc_level(ev, j, cfg.alpha_cc, cfg.alpha0, mask_size);
            match oracle {
                Oracle::Exact => boost_exact(e, j, &r, cfg),
                Oracle::Ci { samples } => boost_ci(e, j, &r, cfg, samples, level, key.child(j as u64)),
                Oracle::Avcs => boost_avcs(e, j, &r, cfg, level, key.child(j as u64)),
            }
        })
        .collect::<Result<_>>()?;

    let boosted = EValueVector::new(outcomes.iter().map(|o| o.value).collect())?;
    let rejections = ebh_raw(boosted.as_slice(), cfg.alpha);
    Ok(CcResult { rejections, outcomes, boosted })
}

/// A problem instance whose conditional laws can be enumerated, and whose
/// resampled instances can be resampled again. Needed for multi-round CC,
/// where the round-`t` rejection set of every resampled instance enters the
/// round-`t` decision.
pub trait ExactInstance: Sized + Sync {
    type Key: Eq + Hash + Clone + Send;
    fn key(&self) -> Self::Key;
    fn evalues(&self) -> Result<EValueVector>;
    /// Atoms of the conditional law of the whole instance given `S_j`.
    fn conditional_support(&self, j: usize) -> Result<Vec<(Self, f64)>>;
}

struct RoundSolver<'a, I: ExactInstance> {
    cfg: &'a CcConfig,
    evalues: HashMap<I::Key, Vec<f64>>,
    sets: HashMap<(I::Key, usize), Vec<usize>>,
}

impl<I: ExactInstance> RoundSolver<'_, I> {
    fn evalues(&mut self, inst: &I) -> Result<Vec<f64>> {
        let key = inst.key();
        if let Some(v) = self.evalues.get(&key) {
            return Ok(v.clone());
        }
        let v = inst.evalues()?.into_inner();
        self.evalues.insert(key, v.clone());
        Ok(v)
    }

    /// Boosted e-values of round `t >= 1`.
    fn boosted(&mut self, inst: &I, t: usize) -> Result<Vec<f64>> {
        let a = self.cfg.alpha_cc;
        let e = self.evalues(inst)?;
        let m = e.len();
        let prev = self.set(inst, t - 1)?;
        let mut out = vec![0.0; m];
        for j in 0..m {
            if e[j] <= 0.0 {
                continue;
            }
            let mut cal = Calibrator::new(&e, j, a);
            let rhat_prev = prev.len() + usize::from(!prev.contains(&j));
            let mut phi = 0.0;
            for (x, p) in inst.conditional_support(j)? {
                let ex = self.evalues(&x)?;
                let ej = ex[j];
                // the round-0 indicator, renormalised by the round-(t-1) set size
                let hit = cal.indicator(&ex) > 0.0;
                let term = if hit {
                    let sx = self.set(&x, t - 1)?;
                    let r = sx.len() + usize::from(!sx.contains(&j));
                    m as f64 / a / r as f64
                } else {
                    0.0
                };
                phi += p * (term - ej);
            }
            if phi <= 0.0 {
                out[j] = m as f64 / (a * rhat_prev as f64);
            }
        }
        Ok(out)
    }

    /// `R^{(t)}` at level `alpha_cc`.
    fn set(&mut self, inst: &I, t: usize) -> Result<Vec<usize>> {
        let key = (inst.key(), t);
        if let Some(s) = self.sets.get(&key) {
            return Ok(s.clone());
        }
        let values = if t == 0 { self.evalues(inst)? } else { self.boosted(inst, t)? };
        let s = ebh_raw(&values, self.cfg.alpha_cc).indices().to_vec();
        self.sets.insert(key, s.clone());
        Ok(s)
    }
}

/// Rejection sets `R^{(1)}, …, R^{(rounds)}` of repeated conditional calibration
/// with exact enumeration. `R^{(1)}` is ordinary e-BH-CC.
pub fn cc_rounds_exact<I: ExactInstance>(inst: &I, cfg: &CcConfig) -> Result<Vec<RejectionSet>> {
    cfg.validate()?;
    let mut solver = RoundSolver::<I> { cfg, evalues: HashMap::new(), sets: HashMap::new() };
    (1..=cfg.rounds)
        .map(|t| {
            let values = solver.boosted(inst, t)?;
            Ok(ebh_raw(&values, cfg.alpha))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(v: &[f64]) -> EValueVector {
        EValueVector::new(v.to_vec()).unwrap()
    }

    /// Finite-support resampler over explicit atoms.
    struct Atoms {
        j: usize,
        atoms: Vec<(EValueVector, f64)>,
        budget: Option<f64>,
    }

    impl Resampler for Atoms {
        fn hypothesis(&self) -> usize {
            self.j
        }
        fn draw(&self, rng: &mut Stream) -> Result<EValueVector> {
            use rand::Rng;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (x, p) in &self.atoms {
                acc += p;
                if u < acc {
                    return Ok(x.clone());
                }
            }
            Ok(self.atoms.last().unwrap().0.clone())
        }
        fn exact_support(&self) -> Option<Vec<(EValueVector, f64)>> {
            Some(self.atoms.clone())
        }
        fn conditional_budget(&self) -> Option<f64> {
            self.budget
        }
        fn evalue_bound(&self) -> Option<f64> {
            Some(100.0)
        }
    }

    #[test]
    fn mc_sample_examples() {
        let e = ev(&[8., 8., 1., 0.]);
        let t = mc_sample(&e, 2, &ev(&[8., 8., 8., 0.]), 0.5).unwrap();
        assert!((t.indicator - 8.0 / 3.0).abs() < 1e-12);
        let t = mc_sample(&e, 2, &ev(&[0., 0., 0., 0.]), 0.5).unwrap();
        assert_eq!((t.indicator, t.difference), (0.0, 0.0));
        let t = mc_sample(&e, 2, &ev(&[8., 8., 2., 0.]), 0.5).unwrap();
        assert!((t.indicator - 8.0 / 3.0).abs() < 1e-12);
        assert!((t.difference - 2.0 / 3.0).abs() < 1e-12);
        assert!(mc_sample(&e, 3, &e, 0.5).is_err());
    }

    #[test]
    fn phi_exact_examples() {
        let e = ev(&[2., 2.]);
        let r = Atoms { j: 0, atoms: vec![(e.clone(), 1.0)], budget: None };
        // alpha_cc must be < 1 here; 1 - 1e-15 reproduces the alpha = 1 hand value
        let phi = phi_exact(&e, 0, &r, 1.0 - 1e-15).unwrap();
        assert!((phi + 1.0).abs() < 1e-9);
        let zero = Atoms { j: 0, atoms: vec![(ev(&[0., 5.]), 1.0)], budget: None };
        assert_eq!(phi_exact(&e, 0, &zero, 0.5).unwrap(), 0.0);
    }

    struct NoSupport;
    impl Resampler for NoSupport {
        fn hypothesis(&self) -> usize {
            0
        }
        fn draw(&self, _: &mut Stream) -> Result<EValueVector> {
            EValueVector::new(vec![0.0; 4])
        }
    }

    #[test]
    fn phi_exact_requires_support() {
        assert!(matches!(phi_exact(&ev(&[1., 1., 1., 1.]), 0, &NoSupport, 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn boost_shortcuts() {
        let cfg = CcConfig::new(0.5);
        let e = ev(&[8., 8., 0., 0.]);
        let o = boost_ci(&e, 0, &NoSupport, &cfg, 10, 0.05, StreamKey::new(1)).unwrap();
        assert_eq!(o.decision, Decision::Boosted);
        assert_eq!(o.value, 4.0);
        assert_eq!(o.samples_used, 0);
        let o = boost_avcs(&e, 2, &NoSupport, &cfg, 0.05, StreamKey::new(1)).unwrap();
        assert_eq!(o.decision, Decision::Skipped);
        assert_eq!(o.value, 0.0);
    }

    #[test]
    fn degenerate_resampler_never_boosts() {
        let cfg = CcConfig { exact_cs_budget: 300, asymptotic_cs_budget: 200, ..CcConfig::new(0.5) };
        let e = ev(&[1., 1., 1., 1.]);
        let r = Atoms { j: 1, atoms: vec![(ev(&[0., 0., 0., 0.]), 1.0)], budget: None };
        let o = boost_ci(&e, 1, &r, &cfg, 50, 0.05, StreamKey::new(2)).unwrap();
        assert_eq!(o.decision, Decision::NotBoosted);
        let (l, u) = o.interval.unwrap();
        assert!(l <= 0.0 && u >= 0.0);
        let o = boost_avcs(&e, 1, &r, &cfg, 0.05, StreamKey::new(2)).unwrap();
        assert_eq!(o.decision, Decision::NotBoosted);
    }

    #[test]
    fn avcs_constant_streams() {
        // indicator always m/alpha with budget 20: difference is -1 per draw... build it
        // from atoms where ẽ_j is large and ẽ clears the indicator.
        let cfg = CcConfig { exact_cs_budget: 0, asymptotic_cs_budget: 1000, ..CcConfig::new(0.5) };
        let e = ev(&[1., 0.5, 0.5, 0.5]);
        // R̂_0(e) = {0}; ẽ = (9,0,0,0): R(ẽ)={0}, indicator = 8, difference = 8 - 9 = -1
        let neg = Atoms { j: 0, atoms: vec![(ev(&[9., 0., 0., 0.]), 1.0)], budget: None };
        let o = boost_avcs(&e, 0, &neg, &cfg, 0.01, StreamKey::new(3)).unwrap();
        assert_eq!(o.decision, Decision::Boosted);
        assert!(o.samples_used > 0);
        // ẽ = (7,0,0,0): indicator 8, difference +1
        let pos = Atoms { j: 0, atoms: vec![(ev(&[7., 0., 0., 0.]), 1.0)], budget: None };
        let o = boost_avcs(&e, 0, &pos, &cfg, 0.01, StreamKey::new(3)).unwrap();
        assert_eq!(o.decision, Decision::NotBoosted);
        assert_eq!(o.samples_used, 100);
    }

    #[test]
    fn budget_mode() {
        let a = Atoms { j: 0, atoms: vec![], budget: Some(1.0) };
        assert_eq!(budget_mode_select(&a), BudgetMode::AnalyticBudget(1.0));
        assert_eq!(budget_mode_select(&NoSupport), BudgetMode::Difference);
    }

    #[test]
    fn mask_examples() {
        let e = ev(&[4., 4., 0., 0.]);
        assert_eq!(apply_mask(&e, &[0, 1, 2, 3]), e);
        assert_eq!(apply_mask(&e, &[]), ev(&[0., 0., 0., 0.]));
        assert_eq!(apply_mask(&e, &[0]), ev(&[4., 0., 0., 0.]));
    }

    #[test]
    fn ebhcc_all_zero() {
        let cfg = CcConfig::new(0.1);
        let e = ev(&[0.; 5]);
        let res = ebhcc(&e, |_| Ok(NoSupport), &cfg, None, Oracle::Avcs, StreamKey::new(0)).unwrap();
        assert!(res.rejections.is_empty());
        assert!(res.outcomes.iter().all(|o| o.decision == Decision::Skipped));
    }

    #[test]
    fn ebhcc_never_boost_equals_ebh() {
        let cfg = CcConfig { exact_cs_budget: 200, asymptotic_cs_budget: 200, ..CcConfig::new(0.5) };
        let e = ev(&[8., 8., 1., 0.5]);
        let never = |j: usize| Ok(Atoms { j, atoms: vec![(ev(&[0., 0., 0., 0.]), 1.0)], budget: None });
        let res = ebhcc(&e, never, &cfg, None, Oracle::Avcs, StreamKey::new(0)).unwrap();
        assert_eq!(res.rejections, crate::ebh(&e, 0.5).unwrap());
        let res = ebhcc(&e, never, &cfg, Some(&[]), Oracle::Ci { samples: 100 }, StreamKey::new(0)).unwrap();
        assert_eq!(res.rejections.indices(), &[0, 1]);
    }

    #[test]
    fn budgeted_identity_matches_standard() {
        let cfg = CcConfig { exact_cs_budget: 300, asymptotic_cs_budget: 200, ..CcConfig::new(0.5) };
        let e = ev(&[1.5, 0.5, 0.5, 0.5]);
        let atoms = vec![(ev(&[9., 0., 0., 0.]), 0.1), (ev(&[0., 1., 1., 1.]), 0.9)];
        let r = Atoms { j: 0, atoms, budget: Some(0.9) };
        let ident = |x: &[f64]| x.to_vec();
        let spec = BudgetedTarget { target: &e, budget: &e, map: &ident, shortcut: true };
        let a = boost_with_budget(&spec, 0, &r, &cfg, 0.05, StreamKey::new(9)).unwrap();
        let b = boost_avcs(&e, 0, &r, &cfg, 0.05, StreamKey::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
