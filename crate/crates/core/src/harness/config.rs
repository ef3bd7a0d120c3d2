//! Line-based `key = value` experiment configuration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::knockoffs::SMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Zstat,
    Tstat,
    KnockoffDense,
    KnockoffSparse,
    Outlier,
    MarginalBoostCompare,
}

impl ExperimentKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zstat" => Self::Zstat,
            "tstat" => Self::Tstat,
            "knockoff_dense" => Self::KnockoffDense,
            "knockoff_sparse" => Self::KnockoffSparse,
            "outlier" => Self::Outlier,
            "marginal_boost_compare" => Self::MarginalBoostCompare,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Zstat => "zstat",
            Self::Tstat => "tstat",
            Self::KnockoffDense => "knockoff_dense",
            Self::KnockoffSparse => "knockoff_sparse",
            Self::Outlier => "outlier",
            Self::MarginalBoostCompare => "marginal_boost_compare",
        }
    }

    pub fn is_knockoff(self) -> bool {
        matches!(self, Self::KnockoffDense | Self::KnockoffSparse)
    }
}

/// LRT alternative parameter: the true amplitude, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrtParam {
    Matched,
    Fixed(f64),
}

/// Which hypotheses e-BH-CC tries to boost (always joined with `ebh(e, α)`,
/// and `e_j = 0` is always skipped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterRule {
    /// `p_j ≤ factor · α`.
    PValue(f64),
    Nonzero,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub alpha_cc: f64,
    pub alpha0: f64,
    pub amplitude: f64,
    pub lrt_a: LrtParam,
    pub rho: f64,
    pub nonnull: usize,
    pub dof: usize,
    pub zeros: usize,
    pub d: usize,
    pub h_kn: f64,
    pub s_method: SMethod,
    pub n_holdout: usize,
    pub pi1: f64,
    pub dim: usize,
    pub n_centers: usize,
    pub outlier_a: f64,
    pub replications: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub exact_cs_budget: usize,
    pub asymptotic_cs_budget: usize,
    pub filter: FilterRule,
    pub timing: bool,
}

pub const REQUIRED: [&str; 4] = ["experiment", "m", "alpha", "replications"];

const KNOWN: [&str; 27] = [
    "experiment", "m", "n", "alpha", "alpha_cc", "alpha0", "amplitude", "lrt_a", "rho", "nonnull", "dof", "zeros",
    "d", "h_kn", "s_method", "n_holdout", "pi1", "dim", "n_centers", "outlier_a", "replications", "seed",
    "batch_size", "exact_cs_budget", "asymptotic_cs_budget", "filter", "timing",
];

impl ExperimentConfig {
    pub fn alpha_kn(&self) -> f64 {
        self.h_kn * self.alpha
    }

    /// LRT parameter actually used.
    pub fn lrt_value(&self) -> f64 {
        match self.lrt_a {
            LrtParam::Matched => self.amplitude,
            LrtParam::Fixed(a) => a,
        }
    }
}

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    fn err(&self, key: &str, msg: String) -> Error {
        Error::Config { line: self.line(key), msg: format!("{key}: {msg}") }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| self.err(key, format!("cannot parse {v:?} as {}", std::any::type_name::<T>()))),
        }
    }

    fn level(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse(key, default)?;
        if !(v > 0.0 && v < 1.0) {
            return Err(self.err(key, format!("{v} must lie in (0, 1)")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize> {
        let v: usize = self.parse(key, default)?;
        if v == 0 {
            return Err(self.err(key, "must be at least 1".into()));
        }
        Ok(v)
    }

    fn finite(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parse(key, default)?;
        if !v.is_finite() {
            return Err(self.err(key, format!("{v} must be finite")));
        }
        Ok(v)
    }
}

/// Parse the config text. Errors name the offending line (1-based) and key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::Config { line, msg: format!("expected `key = value`, got {content:?}") })?;
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN.contains(&k) {
            return Err(Error::Config { line, msg: format!("unknown key {k:?}") });
        }
        if v.is_empty() {
            return Err(Error::Config { line, msg: format!("{k}: missing value") });
        }
        if map.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(Error::Config { line, msg: format!("{k}: duplicate key") });
        }
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !map.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(Error::ConfigMissing(missing.join(", ")));
    }
    let e = Entries { map };

    let kind_raw = e.raw("experiment").unwrap();
    let kind = ExperimentKind::parse(kind_raw).ok_or_else(|| {
        e.err(
            "experiment",
            format!("unknown experiment {kind_raw:?}; expected zstat, tstat, knockoff_dense, knockoff_sparse, outlier or marginal_boost_compare"),
        )
    })?;
    let alpha = e.level("alpha", 0.05)?;
    let m = e.positive("m", 1)?;
    let knock = kind.is_knockoff();
    let sparse = kind == ExperimentKind::KnockoffSparse;

    let lrt_a = match e.raw("lrt_a") {
        None | Some("matched") => LrtParam::Matched,
        Some(v) => match v.parse::<f64>() {
            Ok(a) if a.is_finite() => LrtParam::Fixed(a),
            _ => return Err(e.err("lrt_a", format!("expected `matched` or a number, got {v:?}"))),
        },
    };
    let s_method = match e.raw("s_method") {
        None | Some("equicorrelated") => SMethod::Equicorrelated,
        Some("mvr") => SMethod::Mvr,
        Some(v) => return Err(e.err("s_method", format!("expected `equicorrelated` or `mvr`, got {v:?}"))),
    };
    let default_filter = match kind {
        ExperimentKind::Zstat | ExperimentKind::Tstat | ExperimentKind::MarginalBoostCompare => FilterRule::PValue(3.0),
        _ => FilterRule::Nonzero,
    };
    let filter = match e.raw("filter") {
        None => default_filter,
        Some("nonzero") => FilterRule::Nonzero,
        Some("all") => FilterRule::All,
        Some(v) => match v.strip_prefix("pvalue:").map(str::parse::<f64>) {
            Some(Ok(f)) if f > 0.0 && f.is_finite() => FilterRule::PValue(f),
            _ => return Err(e.err("filter", format!("expected `pvalue:<factor>`, `nonzero` or `all`, got {v:?}"))),
        },
    };
    let (exact_default, asym_default) = match kind {
        _ if knock => (1200, 800),
        ExperimentKind::Outlier => (1500, 1000),
        _ => (3000, 2000),
    };

    let cfg = ExperimentConfig {
        kind,
        m,
        n: e.positive("n", if knock { 500 } else { 200 })?,
        alpha,
        alpha_cc: e.level("alpha_cc", alpha)?,
        alpha0: e.level("alpha0", alpha / 10.0)?,
        amplitude: e.finite("amplitude", 3.0)?,
        lrt_a,
        rho: e.finite("rho", 0.5)?,
        nonnull: e.parse("nonnull", 10.min(m))?,
        dof: e.positive("dof", 50)?,
        zeros: e.parse("zeros", if sparse { 20 } else { 7 })?,
        d: e.positive("d", if sparse { 10 } else { 2 })?,
        h_kn: e.finite("h_kn", 1.0)?,
        s_method,
        n_holdout: e.positive("n_holdout", 500)?,
        pi1: e.finite("pi1", 0.1)?,
        dim: e.positive("dim", 50)?,
        n_centers: e.positive("n_centers", 50)?,
        outlier_a: e.finite("outlier_a", 3.0)?,
        replications: e.positive("replications", 1)?,
        seed: e.parse("seed", 0)?,
        batch_size: e.positive("batch_size", 100)?,
        exact_cs_budget: e.parse("exact_cs_budget", exact_default)?,
        asymptotic_cs_budget: e.parse("asymptotic_cs_budget", asym_default)?,
        filter,
        timing: e.parse("timing", false)?,
    };

    if !(cfg.rho.abs() < 1.0) {
        return Err(e.err("rho", format!("{} must lie in (-1, 1)", cfg.rho)));
    }
    if cfg.nonnull > cfg.m {
        return Err(e.err("nonnull", format!("{} exceeds m = {}", cfg.nonnull, cfg.m)));
    }
    if !(cfg.pi1 >= 0.0 && cfg.pi1 <= 1.0) {
        return Err(e.err("pi1", format!("{} must lie in [0, 1]", cfg.pi1)));
    }
    if cfg.outlier_a <= 0.0 {
        return Err(e.err("outlier_a", "must be positive".into()));
    }
    if knock {
        let akn = cfg.alpha_kn();
        if !(akn > 0.0 && akn < 1.0) {
            return Err(e.err("h_kn", format!("alpha_kn = h_kn * alpha = {akn} must lie in (0, 1)")));
        }
    }
    if kind == ExperimentKind::MarginalBoostCompare && !(cfg.lrt_value() > 0.0) {
        return Err(e.err("lrt_a", "marginal boosting needs a positive LRT parameter".into()));
    }
    if kind == ExperimentKind::Outlier && cfg.n_holdout < 2 {
        return Err(e.err("n_holdout", "the score model needs at least two points".into()));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "experiment = zstat\nm = 50\nalpha = 0.05\nreplications = 10\n";

    #[test]
    fn parses_with_defaults() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.alpha_cc, 0.05);
        assert!((c.alpha0 - 0.005).abs() < 1e-15);
        assert_eq!(c.filter, FilterRule::PValue(3.0));
        assert_eq!(c.lrt_a, LrtParam::Matched);
        assert_eq!((c.exact_cs_budget, c.asymptotic_cs_budget, c.batch_size), (3000, 2000, 100));
    }

    #[test]
    fn comments_and_overrides() {
        let c = parse_config(&format!("# desk\n{BASE}lrt_a = 1 # misspecified\nfilter = nonzero\n")).unwrap();
        assert_eq!(c.lrt_a, LrtParam::Fixed(1.0));
        assert_eq!(c.filter, FilterRule::Nonzero);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = parse_config(&BASE.replace("alpha = 0.05", "alpha = 1.5")).unwrap_err().to_string();
        assert!(err.contains("alpha") && err.contains("line 3"), "{err}");
        let err = parse_config(&format!("{BASE}colour = red\n")).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line 5"), "{err}");
        let err = parse_config(&format!("{BASE}m = 3\n")).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
        let err = parse_config(&BASE.replace("m = 50", "m = fifty")).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains('m'), "{err}");
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let err = parse_config("").unwrap_err().to_string();
        for k in REQUIRED {
            assert!(err.contains(k), "{err}");
        }
    }
}
