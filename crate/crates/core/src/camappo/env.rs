//! Beamforming environment: per-episode UE drop, channels and matching;
//! per-step action decoding and the min-rate reward.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::association::{two_stage_matching, MatchingOptions};
use crate::beamforming::{initial_beams, BeamProblem};
use crate::channel::{draw_channels, wrap_phase, ChannelState, Face, PanelBeams, StarBeamMatrix};
use crate::linalg::CVector;
use crate::noma::{AssignmentState, BeamformingState, RateReport};
use crate::rng::RandomStream;
use crate::scenario::{build_topology_with, derive_adjacency, AdjacencyIndicators, ScenarioConfig, Topology};
use crate::{Error, Result, C64};

/// Sizes of the two raw action vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    /// `(clusters, antennas)` per AP.
    pub aps: Vec<(usize, usize)>,
    /// Elements per panel.
    pub elements: Vec<usize>,
}

impl ActionLayout {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            aps: config.aps.iter().map(|a| (a.clusters, a.antennas)).collect(),
            elements: config.panels.iter().map(|p| p.m_h * p.m_v).collect(),
        }
    }

    /// Real and imaginary part of every antenna weight of every cluster beam.
    pub fn omega_dim(&self) -> usize {
        self.aps.iter().map(|(k, n)| 2 * k * n).sum()
    }

    /// `(β_F, θ_F, θ_B)` per element.
    pub fn phi_dim(&self) -> usize {
        3 * self.elements.iter().sum::<usize>()
    }
}

/// `tanh` squash, then per-AP rescale to exactly `P_max`. An all-zero squashed
/// vector decodes to equal-power all-ones beams.
pub fn decode_omega(raw: &[f64], layout: &ActionLayout, p_max: f64) -> Result<Vec<Vec<CVector>>> {
    if raw.len() != layout.omega_dim() {
        return Err(Error::Dimension(format!("active action of length {} (expected {})", raw.len(), layout.omega_dim())));
    }
    let mut offset = 0;
    let mut out = Vec::with_capacity(layout.aps.len());
    for &(k, n) in &layout.aps {
        let chunk = &raw[offset..offset + 2 * k * n];
        offset += 2 * k * n;
        let mut beams: Vec<CVector> = (0..k).map(|c| CVector::from_fn(n, |i, _| C64::new(chunk[2 * (c * n + i)].tanh(), chunk[2 * (c * n + i) + 1].tanh()))).collect();
        let power: f64 = beams.iter().map(|w| w.norm_squared()).sum();
        if power > 0.0 {
            let s = C64::new((p_max / power).sqrt(), 0.0);
            beams.iter_mut().for_each(|w| *w *= s);
        } else {
            let v = C64::new((p_max / (k * n) as f64).sqrt(), 0.0);
            beams = (0..k).map(|_| CVector::from_element(n, v)).collect();
        }
        out.push(beams);
    }
    Ok(out)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic `β_F`, `θ = wrap(raw π + π)`.
pub fn decode_phi(raw: &[f64], layout: &ActionLayout) -> Result<StarBeamMatrix> {
    if raw.len() != layout.phi_dim() {
        return Err(Error::Dimension(format!("passive action of length {} (expected {})", raw.len(), layout.phi_dim())));
    }
    let mut offset = 0;
    let mut panels = Vec::with_capacity(layout.elements.len());
    for &m in &layout.elements {
        let chunk = &raw[offset..offset + 3 * m];
        offset += 3 * m;
        panels.push(PanelBeams {
            beta_f: (0..m).map(|e| logistic(chunk[3 * e])).collect(),
            theta_f: (0..m).map(|e| wrap_phase(chunk[3 * e + 1] * PI + PI)).collect(),
            theta_b: (0..m).map(|e| wrap_phase(chunk[3 * e + 2] * PI + PI)).collect(),
        });
    }
    StarBeamMatrix::new(panels)
}

pub fn decode_actions(raw_omega: &[f64], raw_phi: &[f64], layout: &ActionLayout, p_max: f64) -> Result<BeamformingState> {
    Ok(BeamformingState { omega: decode_omega(raw_omega, layout, p_max)?, star: decode_phi(raw_phi, layout)? })
}

/// Clamp on squashed values so the inverse maps stay finite.
const SQUASH_MARGIN: f64 = 1e-3;

/// A raw active action that decodes to `omega` up to the per-AP power
/// rescale.
pub fn encode_omega(omega: &[Vec<CVector>], layout: &ActionLayout) -> Vec<f64> {
    let mut raw = Vec::with_capacity(layout.omega_dim());
    for (b, &(k, n)) in layout.aps.iter().enumerate() {
        let peak = omega[b].iter().flat_map(|w| w.iter()).fold(0.0f64, |m, c| m.max(c.re.abs()).max(c.im.abs()));
        let s = if peak > 0.0 { 0.5 / peak } else { 0.0 };
        for c in 0..k {
            for i in 0..n {
                let z = omega[b][c][i];
                raw.push((z.re * s).atanh());
                raw.push((z.im * s).atanh());
            }
        }
    }
    raw
}

/// Inverse of [`decode_phi`], with `β_F` clamped away from 0 and 1.
pub fn encode_phi(star: &StarBeamMatrix, layout: &ActionLayout) -> Vec<f64> {
    let mut raw = Vec::with_capacity(layout.phi_dim());
    for (l, &m) in layout.elements.iter().enumerate() {
        for e in 0..m {
            let b = star.beta(l, Face::Forward, e).clamp(SQUASH_MARGIN, 1.0 - SQUASH_MARGIN);
            raw.push((b / (1.0 - b)).ln());
            raw.push(star.theta(l, Face::Forward, e) / PI - 1.0);
            raw.push(star.theta(l, Face::Backward, e) / PI - 1.0);
        }
    }
    raw
}

/// Checks the decoded action against the power, energy-split and phase
/// constraints; returns a description of the first violation.
pub fn action_violation(beams: &BeamformingState, p_max: f64) -> Option<alloc::string::String> {
    for b in 0..beams.omega.len() {
        let p = beams.power(b);
        if (p - p_max).abs() > 1e-9 * p_max {
            return Some(format!("AP {b} radiates {p} W instead of {p_max} W"));
        }
    }
    for (l, panel) in beams.star.panels.iter().enumerate() {
        for e in 0..panel.beta_f.len() {
            let sum = beams.star.beta(l, Face::Forward, e) + beams.star.beta(l, Face::Backward, e);
            if sum != 1.0 {
                return Some(format!("panel {l} element {e}: split sums to {sum}"));
            }
            for t in [panel.theta_f[e], panel.theta_b[e]] {
                if !(0.0..TAU).contains(&t) {
                    return Some(format!("panel {l} element {e}: phase {t} outside [0, 2pi)"));
                }
            }
        }
    }
    None
}

/// Flattened agent observation: α, γ, the previous ω (scaled by `1/√P_max`)
/// and Φ (`β_F`, phases mapped to `[-1, 1)`), and the combined channels under
/// that Φ, normalized to the noise floor and log-compressed.
pub fn observe(channels: &ChannelState, adjacency: &AdjacencyIndicators, assignment: &AssignmentState, beams: &BeamformingState, p_max: f64) -> Vec<f64> {
    let mut obs = Vec::new();
    for row in assignment.alpha() {
        obs.extend(row.iter().map(|&x| x as u8 as f64));
    }
    for ap in assignment.gamma() {
        for row in ap {
            obs.extend(row.iter().map(|&x| x as u8 as f64));
        }
    }
    let inv_p = 1.0 / p_max.sqrt();
    for ap in &beams.omega {
        for w in ap {
            for z in w.iter() {
                obs.push(z.re * inv_p);
                obs.push(z.im * inv_p);
            }
        }
    }
    for p in &beams.star.panels {
        for e in 0..p.beta_f.len() {
            obs.push(p.beta_f[e]);
            obs.push(p.theta_f[e] / PI - 1.0);
            obs.push(p.theta_b[e] / PI - 1.0);
        }
    }
    let h = crate::channel::combined_channel(channels, adjacency, &beams.star);
    let scale = (p_max / channels.noise_power).sqrt();
    let compress = |x: f64| x.signum() * (x.abs() * scale).ln_1p() / 10.0;
    for ap in &h {
        for hu in ap {
            for z in hu.iter() {
                obs.push(compress(z.re));
                obs.push(compress(z.im));
            }
        }
    }
    obs
}

/// Fixed-within-episode quantities.
#[derive(Debug, Clone)]
pub struct Episode {
    pub topology: Topology,
    pub adjacency: AdjacencyIndicators,
    pub channels: ChannelState,
    pub assignment: AssignmentState,
    /// Beams of the previous step (the initialization at step 0).
    pub beams: BeamformingState,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub report: RateReport,
    pub done: bool,
}

/// Minimum UE rate.
pub fn reward(report: &RateReport) -> f64 {
    report.per_ue.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
}

#[derive(Debug, Clone)]
pub struct BeamEnv {
    pub config: ScenarioConfig,
    pub layout: ActionLayout,
    pub episode_len: usize,
    pub matching: MatchingOptions,
    rng: RandomStream,
    episode: Option<Episode>,
    /// Actions handed to the environment and how many broke a constraint.
    pub actions_emitted: usize,
    pub action_violations: usize,
    /// When `Some`, every emitted action is appended for external audits.
    pub action_log: Option<Vec<BeamformingState>>,
}

impl BeamEnv {
    pub fn new(config: ScenarioConfig, episode_len: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if episode_len == 0 {
            return Err(Error::InvalidConfig("episode length must be positive".into()));
        }
        Ok(Self {
            layout: ActionLayout::from_config(&config),
            config,
            episode_len,
            matching: MatchingOptions::default(),
            rng: crate::seeded_rng(seed).substream("env", 0),
            episode: None,
            actions_emitted: 0,
            action_violations: 0,
            action_log: None,
        })
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.episode.as_ref()
    }

    pub fn problem(&self) -> Option<BeamProblem<'_>> {
        self.episode.as_ref().map(|e| BeamProblem { channels: &e.channels, adjacency: &e.adjacency, p_max: self.config.p_max_w, r_min: self.config.r_min })
    }

    /// New UE drop, channels, two-stage matching and initial beams.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let topology = build_topology_with(&self.config, &mut self.rng)?;
        let adjacency = derive_adjacency(&topology);
        let channels = draw_channels(&topology, &adjacency, &self.config, &mut self.rng);
        let star = StarBeamMatrix::random_phases(&self.layout.elements, &mut self.rng);
        let h = crate::channel::combined_channel(&channels, &adjacency, &star);
        let matched = two_stage_matching(&self.config, &h, channels.noise_power, &mut self.rng, &self.matching)?;
        let problem = BeamProblem { channels: &channels, adjacency: &adjacency, p_max: self.config.p_max_w, r_min: self.config.r_min };
        let beams = initial_beams(&problem, &matched.assignment, &mut self.rng);
        let assignment = problem.evaluate(&matched.assignment, &beams).assignment;
        self.episode = Some(Episode { topology, adjacency, channels, assignment, beams, step: 0 });
        Ok(self.observation())
    }

    /// α, γ, previous ω and Φ, and the combined channels under the previous Φ.
    pub fn observation(&self) -> Vec<f64> {
        match &self.episode {
            Some(ep) => observe(&ep.channels, &ep.adjacency, &ep.assignment, &ep.beams, self.config.p_max_w),
            None => Vec::new(),
        }
    }

    pub fn observation_dim(&self) -> usize {
        let u = self.config.n_ues;
        let clusters: usize = self.layout.aps.iter().map(|(k, _)| k).sum();
        let antennas: usize = self.layout.aps.iter().map(|(_, n)| n).sum();
        self.layout.aps.len() * u + clusters * u + self.layout.omega_dim() + self.layout.phi_dim() + 2 * u * antennas
    }

    /// Applies decoded beams for one slot; the reward is the minimum UE rate.
    pub fn step(&mut self, beams: BeamformingState) -> Result<StepResult> {
        self.actions_emitted += 1;
        if action_violation(&beams, self.config.p_max_w).is_some() {
            self.action_violations += 1;
        }
        if let Some(log) = &mut self.action_log {
            log.push(beams.clone());
        }
        let (report, assignment) = {
            let problem = self.problem().ok_or_else(|| Error::InvalidConfig("step before reset".into()))?;
            let ev = problem.evaluate(&self.episode.as_ref().expect("checked").assignment, &beams);
            (ev.report, ev.assignment)
        };
        let ep = self.episode.as_mut().expect("checked");
        ep.assignment = assignment;
        ep.beams = beams;
        ep.step += 1;
        let done = ep.step >= self.episode_len;
        let r = reward(&report);
        Ok(StepResult { observation: self.observation(), reward: r, report, done })
    }
}
