//! Conformal and weighted-conformal outlier detection: p-values, e-values,
//! hypothesis-specific thresholds, the weighted-exchangeability resampler and
//! the comparison e-values of weighted conformal selection.
//!
//! Larger scores mean "more outlying". Tests use `>=` throughout, with no
//! randomized tie-breaking.

use rand::Rng;

use crate::calibration::{ExactInstance, Resampler};
use crate::error::{domain, Result};
use crate::evalue::{bh, EValueVector, PValueVector, TIE_SLACK};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInstance {
    pub calib_scores: Vec<f64>,
    pub calib_weights: Vec<f64>,
    pub test_scores: Vec<f64>,
    pub test_weights: Vec<f64>,
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha = {alpha} must lie in (0, 1]")))
    }
}

impl WeightedInstance {
    pub fn new(calib_scores: Vec<f64>, calib_weights: Vec<f64>, test_scores: Vec<f64>, test_weights: Vec<f64>) -> Result<Self> {
        if calib_scores.len() != calib_weights.len() || test_scores.len() != test_weights.len() {
            return Err(domain("scores and weights must have matching lengths"));
        }
        if calib_scores.is_empty() || test_scores.is_empty() {
            return Err(domain("need at least one calibration and one test point"));
        }
        if calib_scores.iter().chain(&test_scores).any(|v| v.is_nan()) {
            return Err(domain("scores must not be NaN"));
        }
        if calib_weights.iter().chain(&test_weights).any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(domain("weights must be finite and strictly positive"));
        }
        Ok(Self { calib_scores, calib_weights, test_scores, test_weights })
    }

    pub fn unweighted(calib_scores: Vec<f64>, test_scores: Vec<f64>) -> Result<Self> {
        let (n, m) = (calib_scores.len(), test_scores.len());
        Self::new(calib_scores, vec![1.0; n], test_scores, vec![1.0; m])
    }

    pub fn n(&self) -> usize {
        self.calib_scores.len()
    }

    pub fn m(&self) -> usize {
        self.test_scores.len()
    }

    pub fn is_unweighted(&self) -> bool {
        self.calib_weights.iter().chain(&self.test_weights).all(|&w| w == 1.0)
    }

    fn calib_weight(&self) -> f64 {
        self.calib_weights.iter().sum()
    }
}

/// Distinct candidate thresholds in ascending order with
/// `C(t) = Σ_i w_i 1{V_i ≥ t}` and `N(t) = #{k : V_{n+k} ≥ t}`.
struct ScoreGrid {
    t: Vec<f64>,
    c: Vec<f64>,
    n_test: Vec<usize>,
}

impl ScoreGrid {
    fn new(inst: &WeightedInstance) -> Self {
        let mut pts: Vec<(f64, f64, bool)> = inst
            .calib_scores
            .iter()
            .zip(&inst.calib_weights)
            .map(|(&s, &w)| (s, w, false))
            .chain(inst.test_scores.iter().map(|&s| (s, 0.0, true)))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut t = Vec::with_capacity(pts.len());
        let mut c = Vec::with_capacity(pts.len());
        let mut n_test = Vec::with_capacity(pts.len());
        let (mut cw, mut nt) = (0.0, 0usize);
        let mut i = 0;
        while i < pts.len() {
            let s = pts[i].0;
            while i < pts.len() && pts[i].0 == s {
                cw += pts[i].1;
                nt += usize::from(pts[i].2);
                i += 1;
            }
            t.push(s);
            c.push(cw);
            n_test.push(nt);
        }
        t.reverse();
        c.reverse();
        n_test.reverse();
        Self { t, c, n_test }
    }

    /// Smallest grid point with `m (w + C(t)) / ((w + W) (N(t) ∨ 1)) ≤ α`.
    fn threshold(&self, m: usize, w: f64, total: f64, alpha: f64) -> f64 {
        let mf = m as f64;
        for (i, &t) in self.t.iter().enumerate() {
            let lhs = mf * (w + self.c[i]);
            let rhs = alpha * self.n_test[i].max(1) as f64 * (w + total);
            if lhs <= rhs * (1.0 + TIE_SLACK) {
                return t;
            }
        }
        f64::INFINITY
    }

    /// Total calibration weight, summed in the same order as `C`.
    fn total(&self) -> f64 {
        self.c.first().copied().unwrap_or(0.0)
    }

    /// `C(t)` for an arbitrary `t`.
    fn calib_above(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&s| s < t);
        if i < self.t.len() {
            self.c[i]
        } else {
            0.0
        }
    }
}

pub fn conformal_pvalues(inst: &WeightedInstance) -> Result<PValueVector> {
    if !inst.is_unweighted() {
        return Err(domain("conformal_pvalues needs unit weights; use weighted_pvalues"));
    }
    weighted_pvalues(inst)
}

pub fn weighted_pvalues(inst: &WeightedInstance) -> Result<PValueVector> {
    let total = inst.calib_weight();
    let v = inst
        .test_scores
        .iter()
        .zip(&inst.test_weights)
        .map(|(&s, &w)| {
            let above: f64 = inst
                .calib_scores
                .iter()
                .zip(&inst.calib_weights)
                .filter(|(&v, _)| v >= s)
                .map(|(_, &wi)| wi)
                .sum();
            (w + above) / (w + total)
        })
        .collect();
    PValueVector::new(v)
}

pub fn conformal_threshold(inst: &WeightedInstance, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    if !inst.is_unweighted() {
        return Err(domain("conformal_threshold needs unit weights; use weighted_thresholds"));
    }
    let grid = ScoreGrid::new(inst);
    Ok(grid.threshold(inst.m(), 1.0, grid.total(), alpha))
}

pub fn conformal_evalues(inst: &WeightedInstance, t: f64) -> Result<EValueVector> {
    if !inst.is_unweighted() {
        return Err(domain("conformal_evalues needs unit weights; use weighted_evalues"));
    }
    weighted_evalues(inst, &vec![t; inst.m()])
}

pub fn weighted_thresholds(inst: &WeightedInstance, alpha: f64) -> Result<Vec<f64>> {
    check_level(alpha)?;
    let grid = ScoreGrid::new(inst);
    let total = grid.total();
    Ok(inst
        .test_weights
        .iter()
        .map(|&w| grid.threshold(inst.m(), w, total, alpha))
        .collect())
}

pub fn weighted_evalues(inst: &WeightedInstance, thresholds: &[f64]) -> Result<EValueVector> {
    if thresholds.len() != inst.m() {
        return Err(domain("one threshold per test point is required"));
    }
    let grid = ScoreGrid::new(inst);
    let total = grid.total();
    let v = (0..inst.m())
        .map(|j| {
            let (s, w, t) = (inst.test_scores[j], inst.test_weights[j], thresholds[j]);
            if s >= t {
                (w + total) / (w + grid.calib_above(t))
            } else {
                0.0
            }
        })
        .collect();
    EValueVector::new(v)
}

/// Thresholds and e-values at level `alpha` in one pass.
pub fn weighted_evalues_at(inst: &WeightedInstance, alpha: f64) -> Result<EValueVector> {
    let t = weighted_thresholds(inst, alpha)?;
    weighted_evalues(inst, &t)
}

/// The companion threshold `T̂_j`, a function of the bag and the other test points only.
pub fn alternative_threshold(inst: &WeightedInstance, j: usize, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    if j >= inst.m() {
        return Err(domain(format!("test index {j} out of range")));
    }
    let mut cands: Vec<f64> = inst.calib_scores.iter().chain(&inst.test_scores).copied().collect();
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    let m = inst.m() as f64;
    let (sj, wj) = (inst.test_scores[j], inst.test_weights[j]);
    let total = inst.calib_weight();
    for t in cands {
        let c: f64 = inst
            .calib_scores
            .iter()
            .zip(&inst.calib_weights)
            .filter(|(&v, _)| v >= t)
            .map(|(_, &w)| w)
            .sum();
        let others = (0..inst.m()).filter(|&k| k != j && inst.test_scores[k] >= t).count();
        let num = if sj >= t { wj } else { 0.0 } + c;
        if m * num <= alpha * (1 + others) as f64 * (wj + total) * (1.0 + TIE_SLACK) {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// The unordered bag `{Z_1, …, Z_n, Z_{n+j}}` plus the remaining test points,
/// each as `(score, weight)`. Stored sorted so equality is multiset equality.
#[derive(Debug, Clone, PartialEq)]
pub struct BagStatistic {
    pub bag: Vec<(f64, f64)>,
    pub other_tests: Vec<(usize, f64, f64)>,
}

fn sort_pairs(v: &mut [(f64, f64)]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

pub fn bag_statistic(inst: &WeightedInstance, j: usize) -> BagStatistic {
    let mut bag: Vec<(f64, f64)> = inst
        .calib_scores
        .iter()
        .zip(&inst.calib_weights)
        .map(|(&s, &w)| (s, w))
        .collect();
    bag.push((inst.test_scores[j], inst.test_weights[j]));
    sort_pairs(&mut bag);
    let other_tests = (0..inst.m())
        .filter(|&k| k != j)
        .map(|k| (k, inst.test_scores[k], inst.test_weights[k]))
        .collect();
    BagStatistic { bag, other_tests }
}

/// Conditional law of the whole data set given the bag statistic of test point `j`.
#[derive(Debug, Clone)]
pub struct ConformalResampler<'a> {
    inst: &'a WeightedInstance,
    j: usize,
    alpha: f64,
    bag: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    budget: f64,
}

pub fn conformal_resampler(inst: &WeightedInstance, j: usize, alpha: f64) -> Result<ConformalResampler<'_>> {
    check_level(alpha)?;
    if j >= inst.m() {
        return Err(domain(format!("test index {j} out of range")));
    }
    let bag = bag_statistic(inst, j).bag;
    let mut acc = 0.0;
    let cumulative = bag.iter().map(|(_, w)| { acc += w; acc }).collect();
    // E[ẽ_j | bag] is 1 when some bag element clears T̂_j and 0 otherwise.
    let t_hat = alternative_threshold(inst, j, alpha)?;
    let budget = if bag.iter().any(|(s, _)| *s >= t_hat) { 1.0 } else { 0.0 };
    Ok(ConformalResampler { inst, j, alpha, bag, cumulative, budget })
}

impl ConformalResampler<'_> {
    /// Data set with bag element `pick` in test slot `j`.
    pub fn instance_with(&self, pick: usize) -> WeightedInstance {
        let mut calib_scores = Vec::with_capacity(self.bag.len() - 1);
        let mut calib_weights = Vec::with_capacity(self.bag.len() - 1);
        for (i, &(s, w)) in self.bag.iter().enumerate() {
            if i != pick {
                calib_scores.push(s);
                calib_weights.push(w);
            }
        }
        let mut test_scores = self.inst.test_scores.clone();
        let mut test_weights = self.inst.test_weights.clone();
        test_scores[self.j] = self.bag[pick].0;
        test_weights[self.j] = self.bag[pick].1;
        WeightedInstance { calib_scores, calib_weights, test_scores, test_weights }
    }

    pub fn draw_instance(&self, rng: &mut Stream) -> WeightedInstance {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let pick = self.cumulative.partition_point(|&c| c <= u).min(self.bag.len() - 1);
        self.instance_with(pick)
    }

    /// Distinct atoms `(pick index, probability)`, merging identical `(score, weight)` pairs.
    pub fn atoms(&self) -> Vec<(usize, f64)> {
        let total = *self.cumulative.last().unwrap();
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (i, &(s, w)) in self.bag.iter().enumerate() {
            match out.last_mut() {
                Some((k, p)) if self.bag[*k] == (s, w) => *p += w / total,
                _ => out.push((i, w / total)),
            }
        }
        out
    }
}

impl Resampler for ConformalResampler<'_> {
    fn hypothesis(&self) -> usize {
        self.j
    }

    fn draw(&self, rng: &mut Stream) -> Result<EValueVector> {
        weighted_evalues_at(&self.draw_instance(rng), self.alpha)
    }

    fn exact_support(&self) -> Option<Vec<(EValueVector, f64)>> {
        self.atoms()
            .into_iter()
            .map(|(i, p)| weighted_evalues_at(&self.instance_with(i), self.alpha).ok().map(|e| (e, p)))
            .collect()
    }

    fn conditional_budget(&self) -> Option<f64> {
        Some(self.budget)
    }
}

/// Comparison e-values `1{p_j ≤ α|R̂_j|/m} / (α|R̂_j|/m)` from weighted conformal selection.
pub fn wcs_evalues(inst: &WeightedInstance, alpha: f64) -> Result<EValueVector> {
    check_level(alpha)?;
    let p = weighted_pvalues(inst)?;
    let m = inst.m();
    let total = inst.calib_weight();
    let mut out = vec![0.0; m];
    for j in 0..m {
        let (sj, wj) = (inst.test_scores[j], inst.test_weights[j]);
        let pj: Vec<f64> = (0..m)
            .map(|l| {
                if l == j {
                    return f64::MIN_POSITIVE;
                }
                let s = inst.test_scores[l];
                let above: f64 = inst
                    .calib_scores
                    .iter()
                    .zip(&inst.calib_weights)
                    .filter(|(&v, _)| v >= s)
                    .map(|(_, &w)| w)
                    .sum();
                ((above + if sj >= s { wj } else { 0.0 }) / (total + wj)).max(f64::MIN_POSITIVE)
            })
            .collect();
        // level 1 is outside bh's open interval; every p-value ≤ 1 is then rejected
        let r = if alpha < 1.0 {
            bh(&PValueVector::new(pj)?, alpha)?.len()
        } else {
            m
        };
        let cut = alpha * r as f64 / m as f64;
        if p.as_slice()[j] <= cut * (1.0 + TIE_SLACK) {
            out[j] = 1.0 / cut;
        }
    }
    EValueVector::new(out)
}

/// A pluggable conformity score: larger means more outlying.
pub trait ScoreFunction: Sync {
    fn score(&self, x: &[f64]) -> f64;
}

/// Negative log Gaussian kernel density estimate fitted on reference inliers.
#[derive(Debug, Clone)]
pub struct KdeScore {
    points: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl KdeScore {
    /// Scott's rule bandwidth from the average coordinate standard deviation.
    pub fn fit(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(domain("kernel density needs at least two reference points"));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(domain("reference points must share a positive dimension"));
        }
        let mut sd = 0.0;
        for k in 0..d {
            let mean = points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            let var = points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            sd += var.sqrt();
        }
        sd /= d as f64;
        let bandwidth = sd * (n as f64).powf(-1.0 / (d as f64 + 4.0));
        if !(bandwidth > 0.0) {
            return Err(domain("reference points are constant"));
        }
        Ok(Self { points, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

impl ScoreFunction for KdeScore {
    fn score(&self, x: &[f64]) -> f64 {
        let h2 = 2.0 * self.bandwidth * self.bandwidth;
        let logs: Vec<f64> = self
            .points
            .iter()
            .map(|p| -p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / h2)
            .collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        -lse
    }
}

/// Instance key for memoised multi-round calibration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceKey {
    calib: Vec<(u64, u64)>,
    test: Vec<(u64, u64)>,
}

/// A weighted instance together with the level used for its e-values.
#[derive(Debug, Clone)]
pub struct ConformalProblem {
    pub inst: WeightedInstance,
    pub alpha: f64,
}

impl ExactInstance for ConformalProblem {
    type Key = InstanceKey;

    fn key(&self) -> InstanceKey {
        let mut calib: Vec<(u64, u64)> = self
            .inst
            .calib_scores
            .iter()
            .zip(&self.inst.calib_weights)
            .map(|(s, w)| (s.to_bits(), w.to_bits()))
            .collect();
        calib.sort_unstable();
        let test = self
            .inst
            .test_scores
            .iter()
            .zip(&self.inst.test_weights)
            .map(|(s, w)| (s.to_bits(), w.to_bits()))
            .collect();
        InstanceKey { calib, test }
    }

    fn evalues(&self) -> Result<EValueVector> {
        weighted_evalues_at(&self.inst, self.alpha)
    }

    fn conditional_support(&self, j: usize) -> Result<Vec<(Self, f64)>> {
        let r = conformal_resampler(&self.inst, j, self.alpha)?;
        Ok(r.atoms()
            .into_iter()
            .map(|(i, p)| (ConformalProblem { inst: r.instance_with(i), alpha: self.alpha }, p))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{phi_exact, Resampler};
    use crate::evalue::ebh;
    use crate::rng::StreamKey;

    fn small() -> WeightedInstance {
        WeightedInstance::unweighted(vec![1.0, 2.0, 3.0], vec![2.5, 0.5]).unwrap()
    }

    #[test]
    fn pvalue_examples() {
        let i = WeightedInstance::unweighted(vec![1.0, 2.0, 3.0], vec![2.5, 0.0, 9.0]).unwrap();
        assert_eq!(conformal_pvalues(&i).unwrap().as_slice(), &[0.5, 1.0, 0.25]);
        let i = WeightedInstance::new(vec![1.0], vec![1.0], vec![2.0], vec![1.0]).unwrap();
        assert_eq!(weighted_pvalues(&i).unwrap().as_slice(), &[0.5]);
        let a = WeightedInstance::new(vec![1.0, 3.0], vec![0.5, 2.0], vec![2.0], vec![1.5]).unwrap();
        let b = WeightedInstance::new(vec![1.0, 3.0], vec![1.5, 6.0], vec![2.0], vec![4.5]).unwrap();
        let (pa, pb) = (weighted_pvalues(&a).unwrap(), weighted_pvalues(&b).unwrap());
        assert!((pa.as_slice()[0] - pb.as_slice()[0]).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let i = small();
        assert_eq!(conformal_threshold(&i, 1.0).unwrap(), 0.5);
        assert_eq!(conformal_threshold(&i, 0.8).unwrap(), f64::INFINITY);
        let low = WeightedInstance::unweighted(vec![5.0, 6.0, 7.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(conformal_threshold(&low, 0.1).unwrap(), f64::INFINITY);
        let one = WeightedInstance::new(vec![1.0], vec![1.0], vec![2.0], vec![1.0]).unwrap();
        assert_eq!(weighted_thresholds(&one, 1.0).unwrap(), vec![1.0]);
        assert_eq!(weighted_evalues(&one, &[1.0]).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn evalue_examples() {
        let i = small();
        assert_eq!(conformal_evalues(&i, 0.5).unwrap().as_slice(), &[1.0, 1.0]);
        assert_eq!(conformal_evalues(&i, f64::INFINITY).unwrap().as_slice(), &[0.0, 0.0]);
        let p = conformal_pvalues(&i).unwrap();
        // BH at level 1 rejects everything with p ≤ 1
        assert_eq!(p.as_slice(), &[0.5, 1.0]);
        let e = conformal_evalues(&i, 0.5).unwrap();
        assert_eq!(ebh(&e, 1.0 - 1e-12).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn weighted_reduces_to_unweighted() {
        let i = small();
        let t = weighted_thresholds(&i, 1.0).unwrap();
        assert_eq!(t, vec![0.5, 0.5]);
        assert_eq!(weighted_evalues(&i, &t).unwrap(), conformal_evalues(&i, 0.5).unwrap());
    }

    fn random_instance(seed: u64, n: usize, m: usize) -> WeightedInstance {
        let mut rng = StreamKey::new(seed).stream();
        WeightedInstance::new(
            (0..n).map(|_| rng.random::<f64>()).collect(),
            (0..n).map(|_| 0.2 + rng.random::<f64>()).collect(),
            (0..m).map(|_| rng.random::<f64>() * 1.3).collect(),
            (0..m).map(|_| 0.2 + rng.random::<f64>()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn thresholds_monotone_in_alpha() {
        for seed in 0..50 {
            let i = random_instance(seed, 12, 6);
            let mut prev = weighted_thresholds(&i, 1.0).unwrap();
            for a in [0.8, 0.5, 0.3, 0.1] {
                let t = weighted_thresholds(&i, a).unwrap();
                assert!(t.iter().zip(&prev).all(|(x, y)| x >= y));
                prev = t;
            }
        }
    }

    #[test]
    fn resampler_pick_probabilities() {
        let i = WeightedInstance::new(vec![1.0], vec![1.0], vec![2.0], vec![3.0]).unwrap();
        let r = conformal_resampler(&i, 0, 0.5).unwrap();
        let atoms = r.atoms();
        assert_eq!(atoms.len(), 2);
        assert!((atoms[0].1 - 0.25).abs() < 1e-15 && (atoms[1].1 - 0.75).abs() < 1e-15);
        let mut rng = StreamKey::new(2).stream();
        let hits = (0..40_000).filter(|_| r.draw_instance(&mut rng).test_scores[0] == 2.0).count();
        assert!((hits as f64 / 40_000.0 - 0.75).abs() < 0.01);
    }

    #[test]
    fn resampler_preserves_bag() {
        let i = random_instance(11, 8, 4);
        let stat = bag_statistic(&i, 2);
        let r = conformal_resampler(&i, 2, 0.3).unwrap();
        let mut rng = StreamKey::new(3).stream();
        for _ in 0..200 {
            assert_eq!(bag_statistic(&r.draw_instance(&mut rng), 2), stat);
        }
    }

    #[test]
    fn exact_support_budget_is_one() {
        for seed in 0..100 {
            let i = random_instance(seed, 7, 4);
            let e = weighted_evalues_at(&i, 0.5).unwrap();
            for j in 0..4 {
                let r = conformal_resampler(&i, j, 0.5).unwrap();
                let mean: f64 = r.exact_support().unwrap().iter().map(|(x, p)| p * x.as_slice()[j]).sum();
                assert!((mean - r.conditional_budget().unwrap()).abs() < 1e-12);
                if e.as_slice()[j] > 0.0 {
                    assert_eq!(r.conditional_budget(), Some(1.0));
                }
            }
        }
    }

    #[test]
    fn alternative_threshold_matches_weighted() {
        for seed in 0..200 {
            let i = random_instance(seed, 10, 5);
            let t = weighted_thresholds(&i, 0.4).unwrap();
            for j in 0..5 {
                let th = alternative_threshold(&i, j, 0.4).unwrap();
                assert!(th <= t[j]);
                if i.test_scores[j] >= t[j] {
                    assert_eq!(th, t[j]);
                }
            }
        }
    }

    #[test]
    fn wcs_dominance_and_zero() {
        for seed in 0..200 {
            let i = random_instance(seed, 10, 5);
            for a in [0.2, 0.5, 1.0] {
                let e = weighted_evalues_at(&i, a).unwrap();
                let w = wcs_evalues(&i, a).unwrap();
                for j in 0..5 {
                    assert!(e.as_slice()[j] >= w.as_slice()[j], "{seed} {a} {j} {:?} {:?} {:?}", e, w, i);
                }
            }
        }
        let i = WeightedInstance::unweighted(vec![5.0, 6.0], vec![1.0, 7.0]).unwrap();
        assert_eq!(wcs_evalues(&i, 0.5).unwrap().as_slice()[0], 0.0);
    }

    #[test]
    fn phi_exact_matches_monte_carlo() {
        let i = WeightedInstance::unweighted(vec![0.3, 1.7, 0.9], vec![2.5, 1.2]).unwrap();
        let e = weighted_evalues_at(&i, 0.5).unwrap();
        let j = (0..2).find(|&j| e.as_slice()[j] > 0.0).unwrap();
        let r = conformal_resampler(&i, j, 0.5).unwrap();
        let phi = phi_exact(&e, j, &r, 0.5).unwrap();
        let mut rng = StreamKey::new(1).stream();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let x = r.draw(&mut rng).unwrap();
                crate::calibration::mc_sample(&e, j, &x, 0.5).unwrap().difference
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - phi).abs() <= 3.0 * sd / (n as f64).sqrt() + 1e-12, "{mean} vs {phi}");
    }

    #[test]
    fn kde_scores_outliers_higher() {
        let mut rng = StreamKey::new(6).stream();
        let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let k = KdeScore::fit(pts).unwrap();
        assert!(k.score(&[5.0, 5.0]) > k.score(&[0.5, 0.5]));
        assert!(k.score(&[50.0, 50.0]).is_finite());
    }
}
