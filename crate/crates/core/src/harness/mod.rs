//! Experiment driver: config parsing, seeded parallel replications and CSV output.

mod config;
mod experiments;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, FilterRule, LrtParam, REQUIRED};
pub use experiments::{knockoff_support, methods, run_replication, MethodRun, OutlierModel, Replication};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::Result;

pub const CSV_HEADER: &str = "method,rep,power,fdp,n_reject,n_boosted,samples,seconds,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub method: String,
    pub rep: usize,
    pub power: f64,
    pub fdp: f64,
    pub n_reject: usize,
    pub n_boosted: usize,
    pub samples: usize,
    pub seconds: f64,
    pub seed: u64,
}

/// All replications, in replication order. Parallel across replications;
/// the output does not depend on the number of threads.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<Vec<Replication>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect()
}

/// CSV rows in (method, replication) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReplicationResult>> {
    Ok(to_rows(cfg, &run_replications(cfg)?))
}

pub fn to_rows(cfg: &ExperimentConfig, reps: &[Replication]) -> Vec<ReplicationResult> {
    let order = methods(cfg.kind);
    let mut rows: Vec<ReplicationResult> = reps.iter().flat_map(|r| r.rows(cfg.seed)).collect();
    rows.sort_by_key(|r| (order.iter().position(|m| *m == r.method).unwrap_or(usize::MAX), r.rep));
    rows
}

/// `%g`-style formatting with `digits` significant digits.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, v);
        let (mant, e) = s.split_once('e').unwrap();
        format!("{}e{}", trim(mant.to_string()), e)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        // rounding may carry into a new digit, e.g. 9.999995 -> 10.0000
        trim(format!("{:.*}", decimals, v))
    }
}

pub fn csv_string(rows: &[ReplicationResult]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.rep,
            fmt_sig(r.power, 6),
            fmt_sig(r.fdp, 6),
            r.n_reject,
            r.n_boosted,
            r.samples,
            fmt_sig(r.seconds, 6),
            r.seed
        );
    }
    out
}

pub fn emit_csv(rows: &[ReplicationResult], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(1.0, 6), "1");
        assert_eq!(fmt_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(fmt_sig(2.0 / 3.0, 6), "0.666667");
        assert_eq!(fmt_sig(123.456789, 6), "123.457");
        assert_eq!(fmt_sig(0.1, 6), "0.1");
        assert_eq!(fmt_sig(1.5e-7, 6), "1.5e-7");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e6");
    }

    #[test]
    fn header_only_for_no_rows() {
        assert_eq!(csv_string(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn row_round_trips() {
        let r = ReplicationResult {
            method: "e-BH".into(),
            rep: 3,
            power: 0.7,
            fdp: 1.0 / 7.0,
            n_reject: 7,
            n_boosted: 2,
            samples: 400,
            seconds: 0.0,
            seed: 11,
        };
        let s = csv_string(&[r.clone()]);
        let line = s.lines().nth(1).unwrap();
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], "e-BH");
        assert_eq!(f[1].parse::<usize>().unwrap(), 3);
        assert!((f[3].parse::<f64>().unwrap() - r.fdp).abs() <= 0.5e-6);
        assert_eq!(f[6].parse::<usize>().unwrap(), 400);
    }
}
