//! NOMA interference, SINR, rates and the SIC decoding order.
//!
//! Every cluster shares one beam `ω(b,k)`; all UEs of an AP get the equal
//! power share `p_b = 1 / (UEs served by b)`. Clusters store their members
//! in decoding order: position 0 is decoded first and sees interference from
//! every later member, the last member sees none.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{CombinedChannel, StarBeamMatrix};
use crate::linalg::{gain, CVector};
use crate::{Error, Result};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// Relative tolerance of the SIC inequality check.
pub const SIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentState {
    /// `[b][k]`: members of cluster `k` at AP `b`, in decoding order.
    pub clusters: Vec<Vec<Vec<usize>>>,
    n_ues: usize,
}

impl AssignmentState {
    /// Checks that every UE appears at most once.
    pub fn new(n_ues: usize, clusters: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let mut seen = vec![false; n_ues];
        for members in clusters.iter().flatten() {
            for &u in members {
                if u >= n_ues {
                    return Err(Error::Dimension(format!("UE {u} out of range ({n_ues} UEs)")));
                }
                if seen[u] {
                    return Err(Error::InvalidConfig(format!("UE {u} assigned twice")));
                }
                seen[u] = true;
            }
        }
        Ok(Self { clusters, n_ues })
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn n_aps(&self) -> usize {
        self.clusters.len()
    }

    /// UEs served by AP `b`.
    pub fn load(&self, b: usize) -> usize {
        self.clusters[b].iter().map(Vec::len).sum()
    }

    /// `(b, k, position)` of UE `u`.
    pub fn locate(&self, u: usize) -> Option<(usize, usize, usize)> {
        for (b, ap) in self.clusters.iter().enumerate() {
            for (k, members) in ap.iter().enumerate() {
                if let Some(pos) = members.iter().position(|&x| x == u) {
                    return Some((b, k, pos));
                }
            }
        }
        None
    }

    /// Binary `B x U` association matrix.
    pub fn alpha(&self) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; self.n_ues]; self.n_aps()];
        for (b, ap) in self.clusters.iter().enumerate() {
            for &u in ap.iter().flatten() {
                a[b][u] = true;
            }
        }
        a
    }

    /// Binary `[b][k][u]` pairing tensor.
    pub fn gamma(&self) -> Vec<Vec<Vec<bool>>> {
        self.clusters
            .iter()
            .map(|ap| {
                ap.iter()
                    .map(|members| {
                        let mut row = vec![false; self.n_ues];
                        members.iter().for_each(|&u| row[u] = true);
                        row
                    })
                    .collect()
            })
            .collect()
    }

    /// UEs not served by any AP.
    pub fn unassigned(&self) -> Vec<usize> {
        let a = self.alpha();
        (0..self.n_ues).filter(|&u| !a.iter().any(|row| row[u])).collect()
    }

    fn position(&self, b: usize, k: usize, u: usize) -> Result<usize> {
        self.clusters
            .get(b)
            .and_then(|ap| ap.get(k))
            .and_then(|m| m.iter().position(|&x| x == u))
            .ok_or(Error::NotInCluster { ap: b, cluster: k, ue: u })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    /// `[b][k]` active beams.
    pub omega: Vec<Vec<CVector>>,
    pub star: StarBeamMatrix,
}

impl BeamformingState {
    /// Transmit power of AP `b`.
    pub fn power(&self, b: usize) -> f64 {
        self.omega[b].iter().map(|w| w.norm_squared()).sum()
    }

    pub fn check_power(&self, p_max: f64, tol: f64) -> Result<()> {
        for b in 0..self.omega.len() {
            let p = self.power(b);
            if !(p <= p_max + tol) {
                return Err(Error::InvalidBeams(format!("AP {b} transmits {p} W over budget {p_max} W")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCoefficient {
    pub value: f64,
    /// AP serves nobody and does not transmit.
    pub idle: bool,
}

pub fn power_coefficient(assignment: &AssignmentState, b: usize) -> PowerCoefficient {
    match assignment.load(b) {
        0 => PowerCoefficient { value: 0.0, idle: true },
        n => PowerCoefficient { value: 1.0 / n as f64, idle: false },
    }
}

/// `|ĥ(b,m)^H ω(b,k)|²`.
pub fn beam_gain(h: &CombinedChannel, beams: &BeamformingState, b: usize, k: usize, m: usize) -> f64 {
    gain(&h[b][m], &beams.omega[b][k])
}

fn inter_cluster(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, b: usize, k: usize, m: usize) -> f64 {
    assignment.clusters[b]
        .iter()
        .enumerate()
        .filter(|&(k2, members)| k2 != k && !members.is_empty())
        .map(|(k2, members)| members.len() as f64 * beam_gain(h, beams, b, k2, m))
        .sum()
}

/// `(I_intra, I_inter)` of UE `u` in cluster `(b,k)`, measured on the channel
/// of `probe` when given (the signal of `u` as seen by a later-decoded `v`).
pub fn interference(
    h: &CombinedChannel,
    assignment: &AssignmentState,
    beams: &BeamformingState,
    b: usize,
    k: usize,
    u: usize,
    probe: Option<usize>,
) -> Result<(f64, f64)> {
    let pos = assignment.position(b, k, u)?;
    let m = match probe {
        Some(v) => {
            let pv = assignment.position(b, k, v)?;
            if pv <= pos {
                return Err(Error::InvalidConfig(format!("probe UE {v} is not decoded after UE {u}")));
            }
            v
        }
        None => u,
    };
    let later = assignment.clusters[b][k].len() - pos - 1;
    let p_b = power_coefficient(assignment, b).value;
    let intra = beam_gain(h, beams, b, k, m) * p_b * later as f64;
    Ok((intra, inter_cluster(h, assignment, beams, b, k, m)))
}

#[allow(clippy::too_many_arguments)]
pub fn sinr(
    h: &CombinedChannel,
    assignment: &AssignmentState,
    beams: &BeamformingState,
    noise: f64,
    b: usize,
    k: usize,
    u: usize,
    probe: Option<usize>,
) -> Result<f64> {
    let (intra, inter) = interference(h, assignment, beams, b, k, u, probe)?;
    let m = probe.unwrap_or(u);
    let signal = beam_gain(h, beams, b, k, m) * power_coefficient(assignment, b).value;
    if signal == 0.0 {
        return Ok(0.0);
    }
    Ok(signal / (intra + inter + noise))
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// SIC decoding order of cluster `(b,k)`: ascending
/// `g = |ĥω_k|² / (sum_{k'≠k} |C_k'| |ĥω_k'|² + σ²)`, ties by UE index.
pub fn decoding_order(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, noise: f64, b: usize, k: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = assignment.clusters[b][k]
        .iter()
        .map(|&u| {
            let x = beam_gain(h, beams, b, k, u);
            let j = inter_cluster(h, assignment, beams, b, k, u) + noise;
            let g = if x == 0.0 { 0.0 } else { x / j };
            (g, u)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, u)| u).collect()
}

/// Reorders every cluster by [`decoding_order`].
pub fn apply_decoding_order(h: &CombinedChannel, assignment: &mut AssignmentState, beams: &BeamformingState, noise: f64) {
    for b in 0..assignment.n_aps() {
        for k in 0..assignment.clusters[b].len() {
            let order = decoding_order(h, assignment, beams, noise, b, k);
            assignment.clusters[b][k] = order;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SicViolation {
    pub ap: usize,
    pub cluster: usize,
    /// Earlier-decoded UE whose signal must be cancelled.
    pub ue: usize,
    /// Later-decoded UE performing the cancellation.
    pub by: usize,
    pub sinr_own: f64,
    pub sinr_at_later: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SicCheck {
    pub violations: Vec<SicViolation>,
}

impl SicCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `SINR(v→u) ≥ SINR(u)` for every pair with `v` decoded after `u`.
pub fn verify_sic(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, noise: f64) -> SicCheck {
    let mut check = SicCheck::default();
    for (b, ap) in assignment.clusters.iter().enumerate() {
        for (k, members) in ap.iter().enumerate() {
            for (i, &u) in members.iter().enumerate() {
                let own = sinr(h, assignment, beams, noise, b, k, u, None).expect("member of its own cluster");
                for &v in &members[i + 1..] {
                    let at_v = sinr(h, assignment, beams, noise, b, k, u, Some(v)).expect("later member");
                    if at_v < own - SIC_TOLERANCE * own.abs().max(at_v.abs()) {
                        check.violations.push(SicViolation { ap: b, cluster: k, ue: u, by: v, sinr_own: own, sinr_at_later: at_v });
                    }
                }
            }
        }
    }
    check
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEntry {
    pub ap: usize,
    pub cluster: usize,
    pub ue: usize,
    pub sinr: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub entries: Vec<RateEntry>,
    /// Indexed by UE; unserved UEs get 0.
    pub per_ue: Vec<f64>,
    pub sum_rate: f64,
    /// Minimum over all UEs, 0 for an empty network.
    pub min_rate: f64,
}

impl RateReport {
    pub fn from_entries(entries: Vec<RateEntry>, n_ues: usize) -> Self {
        let mut per_ue = vec![0.0; n_ues];
        for e in &entries {
            per_ue[e.ue] += e.rate;
        }
        let sum_rate = per_ue.iter().sum();
        let min_rate = if per_ue.is_empty() { 0.0 } else { per_ue.iter().copied().fold(f64::INFINITY, f64::min) };
        Self { entries, per_ue, sum_rate, min_rate }
    }

    pub fn mean_rate(&self) -> f64 {
        if self.per_ue.is_empty() {
            0.0
        } else {
            self.sum_rate / self.per_ue.len() as f64
        }
    }
}

pub fn rate_report(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, noise: f64) -> RateReport {
    let mut entries = Vec::with_capacity(assignment.n_ues());
    for (b, ap) in assignment.clusters.iter().enumerate() {
        for (k, members) in ap.iter().enumerate() {
            for &u in members {
                let s = sinr(h, assignment, beams, noise, b, k, u, None).expect("member of its own cluster");
                entries.push(RateEntry { ap: b, cluster: k, ue: u, sinr: s, rate: rate(s) });
            }
        }
    }
    RateReport::from_entries(entries, assignment.n_ues())
}
