//! CSV result tables. Every file starts with a header row; files are
//! written to a temporary sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starnoma_core::bcd::BcdIteration;
use starnoma_core::beamforming::ScaIteration;
use starnoma_core::camappo::UpdateRecord;
use starnoma_core::convex::Status;
use starnoma_core::noma::RateReport;

use crate::error::{SimError, SimResult};

/// Columns holding elapsed time; they differ between otherwise identical runs.
pub const WALL_CLOCK_COLUMNS: [&str; 2] = ["wall_clock_s", "inference_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub p_max_w: f64,
    pub seed: u64,
    pub mean_throughput: f64,
    pub min_throughput: f64,
    pub sum_rate: f64,
    /// Environment steps until the moving-average reward crossed the
    /// threshold; -1 when never reached or not applicable.
    pub steps_to_threshold: i64,
    pub bcd_sweeps: usize,
    pub wall_clock_s: f64,
    /// One policy forward pass, or one SCA solve from the initial state.
    pub inference_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub update: usize,
    pub agent: usize,
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub l_clip: f64,
    pub l_vf: f64,
    pub entropy: f64,
    pub l_ca: f64,
    pub l_trpo: f64,
    pub l_total: f64,
    pub psi: f64,
    pub wall_clock_s: f64,
}

impl TrainingRow {
    pub fn new(r: &UpdateRecord, wall_clock_s: f64) -> Self {
        Self {
            update: r.update,
            agent: r.agent,
            episode: r.episode,
            step: r.step,
            reward: r.reward,
            l_clip: r.losses.clip,
            l_vf: r.losses.value,
            entropy: r.losses.entropy,
            l_ca: r.losses.ca,
            l_trpo: r.losses.trpo,
            l_total: r.losses.total,
            psi: r.psi,
            wall_clock_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdRow {
    pub n: usize,
    pub xi: f64,
    pub association: String,
    pub pairing: String,
    pub beams: String,
    pub rmin_violations: usize,
    /// Violating UEs, `;`-separated.
    pub violating_ues: String,
}

impl From<&BcdIteration> for BcdRow {
    fn from(it: &BcdIteration) -> Self {
        Self {
            n: it.n,
            xi: it.xi,
            association: it.association.label().into(),
            pairing: it.pairing.label().into(),
            beams: it.beams.label().into(),
            rmin_violations: it.rmin_violations.len(),
            violating_ues: it.rmin_violations.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaRow {
    pub bcd_sweep: usize,
    pub iteration: usize,
    pub xi: f64,
    pub active_status: String,
    pub passive_status: String,
    pub active_rank_one: f64,
    pub passive_rank_one: f64,
    pub active_committed: bool,
    pub passive_committed: bool,
}

fn status_label(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::MaxIter => "max_iter",
        Status::Infeasible => "infeasible",
    }
}

impl ScaRow {
    pub fn new(bcd_sweep: usize, it: &ScaIteration) -> Self {
        Self {
            bcd_sweep,
            iteration: it.iteration,
            xi: it.xi,
            active_status: status_label(it.active_status).into(),
            passive_status: status_label(it.passive_status).into(),
            active_rank_one: it.active_rank_one,
            passive_rank_one: it.passive_rank_one,
            active_committed: it.active_committed,
            passive_committed: it.passive_committed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub b: usize,
    pub k: usize,
    pub u: usize,
    pub sinr: f64,
    pub rate: f64,
}

pub fn rate_rows(report: &RateReport) -> Vec<RateRow> {
    report.entries.iter().map(|e| RateRow { b: e.ap, k: e.cluster, u: e.ue, sinr: e.sinr, rate: e.rate }).collect()
}

/// Serializes rows with a header; the header is written even for no rows.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> SimResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| SimError::Csv { path: PathBuf::new(), message: e.to_string() };
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| SimError::Csv { path: PathBuf::new(), message: e.to_string() })
}

/// Writes `rows` as CSV to `path` atomically.
pub fn write_table<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> SimResult<()> {
    let bytes = to_csv(rows, header).map_err(|e| match e {
        SimError::Csv { message, .. } => SimError::Csv { path: path.into(), message },
        other => other,
    })?;
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> SimResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| SimError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| SimError::io(path, e))
}

pub fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> SimResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SimError::Csv { path: path.into(), message: e.to_string() })?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| SimError::Csv { path: path.into(), message: e.to_string() })
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["algorithm", "p_max_w", "seed", "mean_throughput", "min_throughput", "sum_rate", "steps_to_threshold", "bcd_sweeps", "wall_clock_s", "inference_s"];
pub const TRAINING_HEADER: [&str; 13] = ["update", "agent", "episode", "step", "reward", "l_clip", "l_vf", "entropy", "l_ca", "l_trpo", "l_total", "psi", "wall_clock_s"];
pub const BCD_HEADER: [&str; 7] = ["n", "xi", "association", "pairing", "beams", "rmin_violations", "violating_ues"];
pub const SCA_HEADER: [&str; 9] = ["bcd_sweep", "iteration", "xi", "active_status", "passive_status", "active_rank_one", "passive_rank_one", "active_committed", "passive_committed"];
pub const RATE_HEADER: [&str; 5] = ["b", "k", "u", "sinr", "rate"];
