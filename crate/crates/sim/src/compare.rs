//! `compare`: aligns summary tables by `(algorithm, P_max)` and reports
//! mean and sample standard deviation across seeds, with deltas against the
//! first summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::tables::{read_table, SummaryRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// Index of the summary in the argument list.
    pub source: usize,
    pub algorithm: String,
    pub p_max_w: f64,
    pub seeds: usize,
    pub mean_throughput: f64,
    pub mean_throughput_std: f64,
    pub min_throughput: f64,
    pub min_throughput_std: f64,
    pub inference_s: f64,
    pub inference_s_std: f64,
    /// `mean_throughput` minus the first summary's value for the same key; 0
    /// when the first summary lacks the key.
    pub delta_mean_throughput: f64,
    pub delta_min_throughput: f64,
    /// The first summary has this `(algorithm, P_max)` key.
    pub in_reference: bool,
    /// This summary's set of `P_max` values for the algorithm differs from
    /// the first summary's.
    pub sweep_mismatch: bool,
}

pub const COMPARISON_HEADER: [&str; 14] = [
    "source",
    "algorithm",
    "p_max_w",
    "seeds",
    "mean_throughput",
    "mean_throughput_std",
    "min_throughput",
    "min_throughput_std",
    "inference_s",
    "inference_s_std",
    "delta_mean_throughput",
    "delta_min_throughput",
    "in_reference",
    "sweep_mismatch",
];

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(algorithm, P_max bits)` keeps the float key orderable and exact.
type Key = (String, u64);

fn group(rows: &[SummaryRow]) -> BTreeMap<Key, Vec<&SummaryRow>> {
    let mut m: BTreeMap<Key, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        m.entry((r.algorithm.clone(), r.p_max_w.to_bits())).or_default().push(r);
    }
    m
}

fn sweeps(groups: &BTreeMap<Key, Vec<&SummaryRow>>) -> BTreeMap<String, BTreeSet<u64>> {
    let mut m: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for (alg, p) in groups.keys() {
        m.entry(alg.clone()).or_default().insert(*p);
    }
    m
}

pub fn compare(summaries: &[Vec<SummaryRow>]) -> SimResult<Vec<ComparisonRow>> {
    if summaries.len() < 2 {
        return Err(SimError::Config(format!("compare needs at least two summaries, got {}", summaries.len())));
    }
    let grouped: Vec<_> = summaries.iter().map(|s| group(s)).collect();
    let sweep_sets: Vec<_> = grouped.iter().map(sweeps).collect();
    let stats = |rows: &[&SummaryRow], f: fn(&SummaryRow) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());

    let mut out = Vec::new();
    for (source, groups) in grouped.iter().enumerate() {
        for (key, rows) in groups {
            let (mt, mt_sd) = stats(rows, |r| r.mean_throughput);
            let (mn, mn_sd) = stats(rows, |r| r.min_throughput);
            let (inf, inf_sd) = stats(rows, |r| r.inference_s);
            let reference = grouped[0].get(key);
            let (dmt, dmn) = match reference {
                Some(ref_rows) => (mt - stats(ref_rows, |r| r.mean_throughput).0, mn - stats(ref_rows, |r| r.min_throughput).0),
                None => (0.0, 0.0),
            };
            out.push(ComparisonRow {
                source,
                algorithm: key.0.clone(),
                p_max_w: f64::from_bits(key.1),
                seeds: rows.len(),
                mean_throughput: mt,
                mean_throughput_std: mt_sd,
                min_throughput: mn,
                min_throughput_std: mn_sd,
                inference_s: inf,
                inference_s_std: inf_sd,
                delta_mean_throughput: dmt,
                delta_min_throughput: dmn,
                in_reference: reference.is_some(),
                sweep_mismatch: sweep_sets[0].get(&key.0) != sweep_sets[source].get(&key.0),
            });
        }
    }
    Ok(out)
}

pub fn compare_files(paths: &[PathBuf]) -> SimResult<Vec<ComparisonRow>> {
    let summaries = paths.iter().map(|p| read_table::<SummaryRow>(p)).collect::<SimResult<Vec<_>>>()?;
    compare(&summaries)
}

/// Fixed-width rendering for the terminal.
pub fn render(rows: &[ComparisonRow], sources: &[impl AsRef<Path>]) -> String {
    let mut s = String::new();
    for (i, p) in sources.iter().enumerate() {
        let _ = writeln!(s, "[{i}] {}", p.as_ref().display());
    }
    let _ = writeln!(s, "{:>3} {:<8} {:>7} {:>5} {:>21} {:>21} {:>12} {:>10} flags", "src", "algo", "P_max", "seeds", "mean rate", "min rate", "inference s", "delta mean");
    for r in rows {
        let mut flags = Vec::new();
        if !r.in_reference {
            flags.push("not-in-reference");
        }
        if r.sweep_mismatch {
            flags.push("sweep-mismatch");
        }
        let _ = writeln!(
            s,
            "{:>3} {:<8} {:>7} {:>5} {:>10.4} ± {:<8.4} {:>10.4} ± {:<8.4} {:>12.3e} {:>+10.4} {}",
            r.source,
            r.algorithm,
            r.p_max_w,
            r.seeds,
            r.mean_throughput,
            r.mean_throughput_std,
            r.min_throughput,
            r.min_throughput_std,
            r.inference_s,
            r.delta_mean_throughput,
            flags.join(",")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, p: f64, seed: u64, mean: f64) -> SummaryRow {
        SummaryRow {
            algorithm: alg.into(),
            p_max_w: p,
            seed,
            mean_throughput: mean,
            min_throughput: mean / 2.0,
            sum_rate: 4.0 * mean,
            steps_to_threshold: -1,
            bcd_sweeps: 1,
            wall_clock_s: 1.0,
            inference_s: 0.5,
        }
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_have_zero_deltas() {
        let a = vec![row("ca", 1.0, 0, 2.0), row("ca", 1.0, 1, 3.0), row("ca", 2.0, 0, 4.0)];
        let out = compare(&[a.clone(), a]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.delta_mean_throughput == 0.0 && r.delta_min_throughput == 0.0 && r.in_reference && !r.sweep_mismatch));
        assert_eq!(out[0].seeds, 2);
        assert_eq!(out[0].mean_throughput, 2.5);
    }

    #[test]
    fn flags_mismatched_sweeps_and_missing_keys() {
        let a = vec![row("ca", 1.0, 0, 2.0), row("ca", 2.0, 0, 3.0)];
        let b = vec![row("ca", 1.0, 0, 2.5), row("camappo", 1.0, 0, 1.0)];
        let out = compare(&[a, b]).unwrap();
        let ca1 = out.iter().find(|r| r.source == 1 && r.algorithm == "ca").unwrap();
        assert!(ca1.sweep_mismatch);
        assert_eq!(ca1.delta_mean_throughput, 0.5);
        let cm = out.iter().find(|r| r.algorithm == "camappo").unwrap();
        assert!(!cm.in_reference);
        assert!(compare(&[vec![]]).is_err());
    }
}
