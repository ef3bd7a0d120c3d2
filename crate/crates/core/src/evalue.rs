//! Value types and the base procedures: e-BH, BH and the FDP / power metrics.
//!
//! Indices are 0-based throughout the library; the CLI prints them 1-based.

use crate::error::{check_alpha, domain, Result};

/// Relative slack used by every threshold comparison of the form `e * alpha * k >= m`.
/// Products like `m / (alpha * k) * alpha * k` do not round-trip exactly.
pub(crate) const TIE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EValueVector(Vec<f64>);

impl EValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("e-value vector must be non-empty"));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(domain(format!("e-value {j} = {v} is not a finite nonnegative number")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector(Vec<f64>);

impl PValueVector {
    /// Values above 1 are allowed; `bh` clamps them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("p-value vector must be non-empty"));
        }
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || v.is_nan()) {
            return Err(domain(format!("p-value {j} = {v} must be positive")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Strictly increasing list of rejected hypothesis indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RejectionSet(Vec<usize>);

impl RejectionSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Sorts and deduplicates.
    pub fn from_indices(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &RejectionSet) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    null_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn new(null_mask: Vec<bool>) -> Self {
        Self { null_mask }
    }

    pub fn from_nonnulls(m: usize, nonnulls: &[usize]) -> Self {
        let mut null_mask = vec![true; m];
        for &j in nonnulls {
            null_mask[j] = false;
        }
        Self { null_mask }
    }

    pub fn is_null(&self, j: usize) -> bool {
        self.null_mask[j]
    }

    pub fn len(&self) -> usize {
        self.null_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.null_mask.is_empty()
    }

    pub fn n_nonnull(&self) -> usize {
        self.null_mask.iter().filter(|n| !**n).count()
    }
}

/// Number of e-BH rejections, `k* = max{k : e_(k) >= m / (alpha k)}`.
pub(crate) fn ebh_count(e: &[f64], alpha: f64, scratch: &mut Vec<f64>) -> usize {
    let m = e.len() as f64;
    scratch.clear();
    scratch.extend(e.iter().copied().filter(|&v| v > 0.0));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let bar = m * (1.0 - TIE_SLACK);
    let mut k_star = 0;
    for (i, &v) in scratch.iter().enumerate() {
        if v * alpha * (i + 1) as f64 >= bar {
            k_star = i + 1;
        }
    }
    k_star
}

/// Whether `value` clears the e-BH threshold `m / (alpha k)`.
#[inline]
pub(crate) fn clears(value: f64, alpha: f64, k: usize, m: usize) -> bool {
    k > 0 && value * alpha * k as f64 >= m as f64 * (1.0 - TIE_SLACK)
}

pub fn ebh(e: &EValueVector, alpha: f64) -> Result<RejectionSet> {
    check_alpha("alpha", alpha)?;
    Ok(ebh_raw(e.as_slice(), alpha))
}

pub(crate) fn ebh_raw(e: &[f64], alpha: f64) -> RejectionSet {
    let mut scratch = Vec::with_capacity(e.len());
    let k = ebh_count(e, alpha, &mut scratch);
    let m = e.len();
    RejectionSet(
        (0..m)
            .filter(|&j| clears(e[j], alpha, k, m))
            .collect(),
    )
}

pub fn bh(p: &PValueVector, alpha: f64) -> Result<RejectionSet> {
    check_alpha("alpha", alpha)?;
    let m = p.len();
    let mut sorted: Vec<f64> = p.as_slice().iter().map(|&v| v.min(1.0)).collect();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let passes = |v: f64, k: usize| v * m as f64 <= alpha * k as f64 * (1.0 + TIE_SLACK);
    let k_star = (1..=m).rev().find(|&k| passes(sorted[k - 1], k)).unwrap_or(0);
    if k_star == 0 {
        return Ok(RejectionSet::empty());
    }
    Ok(RejectionSet(
        (0..m)
            .filter(|&j| passes(p.as_slice()[j].min(1.0), k_star))
            .collect(),
    ))
}

/// Returns `(fdp, power)`.
pub fn metrics(r: &RejectionSet, truth: &GroundTruth) -> (f64, f64) {
    let false_rej = r.indices().iter().filter(|&&j| truth.is_null(j)).count();
    let true_rej = r.len() - false_rej;
    let fdp = false_rej as f64 / r.len().max(1) as f64;
    let power = true_rej as f64 / truth.n_nonnull().max(1) as f64;
    (fdp, power)
}
