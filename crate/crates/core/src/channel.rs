//! Rician channel synthesis and the combined AP-UE channel through the
//! STAR-RIS panels.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::linalg::{CMatrix, CVector};
use crate::rng::RandomStream;
use crate::scenario::{AdjacencyIndicators, ScenarioConfig, Topology};
use crate::{Error, Result, C64};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// Distances below this are clamped before evaluating path loss.
pub const D_MIN: f64 = 0.5;

/// Indoor path loss in dB. `d` in meters, `f_ghz` in GHz.
pub fn path_loss_db(d: f64, f_ghz: f64, los: bool) -> f64 {
    let d = d.max(D_MIN);
    let slope = if los { 17.3 } else { 31.9 };
    32.4 + slope * d.log10() + 20.0 * f_ghz.log10()
}

/// Whether `path_loss_db` would clamp this distance.
pub fn path_loss_clamped(d: f64) -> bool {
    d < D_MIN
}

/// Amplitude gain `sqrt(10^(-PL/10))`.
pub fn large_scale_amplitude(d: f64, f_ghz: f64, los: bool) -> f64 {
    10f64.powf(-path_loss_db(d, f_ghz, los) / 20.0)
}

/// Planar (or linear, with `n_v == 1`) array with half-wavelength spacing.
/// Element `(i, j)` sits at `origin + i*axis_h + j*axis_v` in half-wavelength
/// units and is stored at index `i * n_v + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub origin: [f64; 3],
    pub axis_h: [f64; 3],
    pub axis_v: [f64; 3],
    pub n_h: usize,
    pub n_v: usize,
}

impl ArrayGeometry {
    pub fn linear(origin: [f64; 3], axis: [f64; 3], n: usize) -> Self {
        Self { origin, axis_h: axis, axis_v: [0.0, 0.0, 1.0], n_h: n, n_v: 1 }
    }

    pub fn len(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn direction(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let n = dot3(d, d).sqrt();
    if n == 0.0 {
        [0.0; 3]
    } else {
        [d[0] / n, d[1] / n, d[2] / n]
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot3(d, d).sqrt()
}

/// Array response toward `rx`: entry phase is `-pi * (i*cos_h + j*cos_v)`.
pub fn los_steering(tx: &ArrayGeometry, rx: [f64; 3]) -> CVector {
    let dir = direction(tx.origin, rx);
    let (ch, cv) = (dot3(tx.axis_h, dir), dot3(tx.axis_v, dir));
    CVector::from_fn(tx.len(), |idx, _| {
        let (i, j) = ((idx / tx.n_v) as f64, (idx % tx.n_v) as f64);
        C64::from_polar(1.0, -PI * (i * ch + j * cv))
    })
}

fn ap_array(topology: &Topology, b: usize) -> ArrayGeometry {
    let ap = &topology.aps[b];
    ArrayGeometry::linear(ap.position, [1.0, 0.0, 0.0], ap.antennas)
}

fn panel_array(topology: &Topology, l: usize) -> ArrayGeometry {
    let p = &topology.panels[l];
    ArrayGeometry { origin: p.center, axis_h: p.wall_axis(), axis_v: [0.0, 0.0, 1.0], n_h: p.m_h, n_v: p.m_v }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `[b][u]`, length `N_b`.
    pub h_direct: Vec<Vec<CVector>>,
    /// `[b][l]`, `N_b x M_l`.
    pub g_ap_ris: Vec<Vec<CMatrix>>,
    /// `[l][u]`, length `M_l`.
    pub g_ris_ue: Vec<Vec<CVector>>,
    pub kappa: f64,
    pub noise_power: f64,
    /// Number of links whose distance was clamped to `D_MIN`.
    pub clamp_warnings: usize,
}

impl ChannelState {
    pub fn n_aps(&self) -> usize {
        self.h_direct.len()
    }

    pub fn n_ues(&self) -> usize {
        self.h_direct.first().map_or(0, Vec::len)
    }

    pub fn n_panels(&self) -> usize {
        self.g_ris_ue.len()
    }

    pub fn antennas(&self, b: usize) -> usize {
        self.g_ap_ris.get(b).and_then(|r| r.first()).map_or_else(|| self.h_direct[b].first().map_or(0, |h| h.len()), |g| g.nrows())
    }

    pub fn elements(&self, l: usize) -> usize {
        self.g_ris_ue[l].first().map_or_else(|| self.g_ap_ris.first().map_or(0, |r| r[l].ncols()), |g| g.len())
    }
}

/// Draws every link as `sqrt(PL) * (sqrt(k/(k+1)) LoS + sqrt(1/(k+1)) NLoS)`
/// with the LoS or NLoS path-loss slope chosen by adjacency.
pub fn draw_channels(topology: &Topology, adjacency: &AdjacencyIndicators, config: &ScenarioConfig, rng: &mut RandomStream) -> ChannelState {
    let kappa = config.rician_linear();
    let w_los = (kappa / (kappa + 1.0)).sqrt();
    let w_nlos = (1.0 / (kappa + 1.0)).sqrt();
    let f = config.carrier_ghz;
    let mut clamps = 0usize;
    let mut amp = |d: f64, los: bool| {
        if path_loss_clamped(d) {
            clamps += 1;
        }
        large_scale_amplitude(d, f, los)
    };

    let n_b = topology.aps.len();
    let n_l = topology.panels.len();
    let n_u = topology.ues.len();

    let mut h_direct = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let arr = ap_array(topology, b);
        let mut row = Vec::with_capacity(n_u);
        for u in 0..n_u {
            let pu = topology.ue_position(u);
            let a = amp(distance(arr.origin, pu), adjacency.ap_ue[b][u]);
            let los = los_steering(&arr, pu);
            row.push(CVector::from_fn(arr.len(), |i, _| (los[i] * w_los + rng.complex_normal() * w_nlos) * a));
        }
        h_direct.push(row);
    }

    let mut g_ap_ris = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let arr = ap_array(topology, b);
        let mut row = Vec::with_capacity(n_l);
        for l in 0..n_l {
            let parr = panel_array(topology, l);
            let a = amp(distance(arr.origin, parr.origin), adjacency.ap_ris[b][l]);
            let tx = los_steering(&arr, parr.origin);
            let rx = los_steering(&parr, arr.origin);
            row.push(CMatrix::from_fn(arr.len(), parr.len(), |i, m| (tx[i] * rx[m] * w_los + rng.complex_normal() * w_nlos) * a));
        }
        g_ap_ris.push(row);
    }

    let mut g_ris_ue = Vec::with_capacity(n_l);
    for l in 0..n_l {
        let parr = panel_array(topology, l);
        let mut row = Vec::with_capacity(n_u);
        for u in 0..n_u {
            let pu = topology.ue_position(u);
            let served = adjacency.ris_forward[l][u] || adjacency.ris_backward[l][u];
            let a = amp(distance(parr.origin, pu), served);
            let los = los_steering(&parr, pu);
            row.push(CVector::from_fn(parr.len(), |m, _| (los[m] * w_los + rng.complex_normal() * w_nlos) * a));
        }
        g_ris_ue.push(row);
    }

    ChannelState { h_direct, g_ap_ris, g_ris_ue, kappa, noise_power: config.noise_power_w(), clamp_warnings: clamps }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Forward,
    Backward,
}

/// Per-panel energy split and phases. `beta_b = 1 - beta_f` is derived, so
/// the split always sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelBeams {
    pub beta_f: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub theta_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarBeamMatrix {
    pub panels: Vec<PanelBeams>,
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta - TAU * (theta / TAU).floor();
    if t >= TAU {
        0.0
    } else {
        t
    }
}

impl StarBeamMatrix {
    /// Validates the split, wraps phases.
    pub fn new(panels: Vec<PanelBeams>) -> Result<Self> {
        let mut panels = panels;
        for (l, p) in panels.iter_mut().enumerate() {
            let m = p.beta_f.len();
            if p.theta_f.len() != m || p.theta_b.len() != m {
                return Err(Error::Dimension(format!("panel {l}: beta/theta lengths differ")));
            }
            if p.beta_f.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(Error::InvalidBeams(format!("panel {l}: beta_f outside [0, 1]")));
            }
            if p.theta_f.iter().chain(&p.theta_b).any(|t| !t.is_finite()) {
                return Err(Error::InvalidBeams(format!("panel {l}: non-finite phase")));
            }
            p.theta_f.iter_mut().chain(p.theta_b.iter_mut()).for_each(|t| *t = wrap_phase(*t));
        }
        Ok(Self { panels })
    }

    /// Every element of every panel set to the same split and phase.
    pub fn uniform(elements: &[usize], beta_f: f64, theta: f64) -> Result<Self> {
        Self::new(
            elements
                .iter()
                .map(|&m| PanelBeams { beta_f: alloc::vec![beta_f; m], theta_f: alloc::vec![theta; m], theta_b: alloc::vec![theta; m] })
                .collect(),
        )
    }

    /// Even split with phases uniform on `[0, 2pi)`.
    pub fn random_phases(elements: &[usize], rng: &mut RandomStream) -> Self {
        let panels = elements
            .iter()
            .map(|&m| PanelBeams {
                beta_f: alloc::vec![0.5; m],
                theta_f: (0..m).map(|_| rng.uniform() * TAU).collect(),
                theta_b: (0..m).map(|_| rng.uniform() * TAU).collect(),
            })
            .collect();
        Self { panels }
    }

    pub fn element_counts(&self) -> Vec<usize> {
        self.panels.iter().map(|p| p.beta_f.len()).collect()
    }

    pub fn total_elements(&self) -> usize {
        self.panels.iter().map(|p| p.beta_f.len()).sum()
    }

    pub fn beta(&self, l: usize, face: Face, m: usize) -> f64 {
        match face {
            Face::Forward => self.panels[l].beta_f[m],
            Face::Backward => 1.0 - self.panels[l].beta_f[m],
        }
    }

    pub fn theta(&self, l: usize, face: Face, m: usize) -> f64 {
        match face {
            Face::Forward => self.panels[l].theta_f[m],
            Face::Backward => self.panels[l].theta_b[m],
        }
    }

    /// Diagonal coefficient `sqrt(beta) e^{j theta}`.
    pub fn coefficient(&self, l: usize, face: Face, m: usize) -> C64 {
        C64::from_polar(self.beta(l, face, m).max(0.0).sqrt(), self.theta(l, face, m))
    }

    /// All coefficients stacked as `(panel, face, element)` with the forward
    /// face first; the layout of [`passive_decomposition`] columns.
    pub fn coefficient_vector(&self) -> CVector {
        let mut v = Vec::with_capacity(2 * self.total_elements());
        for (l, p) in self.panels.iter().enumerate() {
            for face in [Face::Forward, Face::Backward] {
                v.extend((0..p.beta_f.len()).map(|m| self.coefficient(l, face, m)));
            }
        }
        CVector::from_vec(v)
    }

    /// Inverse of [`Self::coefficient_vector`]; `beta_f` is taken as the
    /// forward share of each element's total energy, so any input yields a
    /// valid split.
    pub fn from_coefficient_vector(elements: &[usize], v: &CVector) -> Result<Self> {
        let total: usize = elements.iter().sum();
        if v.len() != 2 * total {
            return Err(Error::Dimension(format!("expected {} coefficients, got {}", 2 * total, v.len())));
        }
        let mut offset = 0;
        let mut panels = Vec::with_capacity(elements.len());
        for &m in elements {
            let (fw, bw) = (&v.as_slice()[offset..offset + m], &v.as_slice()[offset + m..offset + 2 * m]);
            offset += 2 * m;
            let beta_f = fw
                .iter()
                .zip(bw)
                .map(|(f, b)| {
                    let (ef, eb) = (f.norm_sqr(), b.norm_sqr());
                    if ef + eb > 0.0 {
                        ef / (ef + eb)
                    } else {
                        0.5
                    }
                })
                .collect();
            panels.push(PanelBeams {
                beta_f,
                theta_f: fw.iter().map(|c| wrap_phase(c.arg())).collect(),
                theta_b: bw.iter().map(|c| wrap_phase(c.arg())).collect(),
            });
        }
        Ok(Self { panels })
    }
}

/// Diagonal matrix of panel `l` on `face`.
pub fn star_matrix(beams: &StarBeamMatrix, l: usize, face: Face) -> Result<CMatrix> {
    let p = beams.panels.get(l).ok_or_else(|| Error::Dimension(format!("no panel {l}")))?;
    if p.beta_f.iter().any(|b| !(0.0..=1.0).contains(b)) || p.theta_f.iter().chain(&p.theta_b).any(|t| !t.is_finite()) {
        return Err(Error::InvalidBeams(format!("panel {l} violates the energy split or phase range")));
    }
    let m = p.beta_f.len();
    Ok(CMatrix::from_diagonal(&CVector::from_fn(m, |i, _| beams.coefficient(l, face, i))))
}

/// Direct term and the per-coefficient cascade columns of `ĥ(b,u)`:
/// `ĥ = direct + columns * beams.coefficient_vector()`.
pub fn passive_decomposition(channels: &ChannelState, adjacency: &AdjacencyIndicators, b: usize, u: usize) -> (CVector, CMatrix) {
    let n = channels.antennas(b);
    let direct = if adjacency.ap_ue[b][u] { channels.h_direct[b][u].clone() } else { CVector::zeros(n) };
    let total: usize = (0..channels.n_panels()).map(|l| channels.elements(l)).sum();
    let mut cols = CMatrix::zeros(n, 2 * total);
    let mut offset = 0;
    for l in 0..channels.n_panels() {
        let m = channels.elements(l);
        if adjacency.ap_ris[b][l] {
            let g = &channels.g_ap_ris[b][l];
            let glu = &channels.g_ris_ue[l][u];
            for (face_off, on) in [(0, adjacency.ris_forward[l][u]), (m, adjacency.ris_backward[l][u])] {
                if on {
                    for e in 0..m {
                        let col = g.column(e) * glu[e];
                        cols.set_column(offset + face_off + e, &col);
                    }
                }
            }
        }
        offset += 2 * m;
    }
    (direct, cols)
}

/// Combined channels `[b][u]`.
pub type CombinedChannel = Vec<Vec<CVector>>;

/// `ĥ(b,u) = c_bu h + sum_l c_bl (c_lFu g_bl Phi^F g_lu + c_lBu g_bl Phi^B g_lu)`.
pub fn combined_channel(channels: &ChannelState, adjacency: &AdjacencyIndicators, beams: &StarBeamMatrix) -> CombinedChannel {
    (0..channels.n_aps())
        .map(|b| {
            let n = channels.antennas(b);
            (0..channels.n_ues())
                .map(|u| {
                    let mut h = if adjacency.ap_ue[b][u] { channels.h_direct[b][u].clone() } else { CVector::zeros(n) };
                    for l in 0..channels.n_panels() {
                        if !adjacency.ap_ris[b][l] {
                            continue;
                        }
                        let g = &channels.g_ap_ris[b][l];
                        let glu = &channels.g_ris_ue[l][u];
                        for (face, on) in [(Face::Forward, adjacency.ris_forward[l][u]), (Face::Backward, adjacency.ris_backward[l][u])] {
                            if on {
                                let weighted = CVector::from_fn(glu.len(), |m, _| beams.coefficient(l, face, m) * glu[m]);
                                h += g * weighted;
                            }
                        }
                    }
                    h
                })
                .collect()
        })
        .collect()
}
