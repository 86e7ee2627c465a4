//! Indoor world: rooms, walls, APs, wall-mounted STAR-RIS panels and UEs,
//! plus the adjacency indicators derived from that geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::rng::RandomStream;
use crate::{Error, Result};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// UEs are kept this far from room boundaries so "inside exactly one room"
/// holds strictly.
const UE_MARGIN: f64 = 0.1;
const GEOM_EPS: f64 = 1e-9;

/// Axis-aligned rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Room {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Room {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Infinitesimally thin wall segment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Wall {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ApSpec {
    /// `[x, y, height]`, meters.
    pub position: [f64; 3],
    pub antennas: usize,
    /// NOMA clusters formed at this AP (`K_b`).
    pub clusters: usize,
    /// Association quota (`Q_b`), counted per [`QuotaMode`].
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PanelSpec {
    /// Index of the hosting wall.
    pub wall: usize,
    /// `[x, y, height]` of the panel center, meters.
    pub center: [f64; 3],
    /// Horizontal unit normal; the forward face is the half-space it points to.
    pub normal: [f64; 2],
    pub m_h: usize,
    pub m_v: usize,
}

/// What an AP quota counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum QuotaMode {
    #[default]
    Clusters,
    Ues,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioConfig {
    pub aps: Vec<ApSpec>,
    pub panels: Vec<PanelSpec>,
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub n_ues: usize,
    /// Antenna height shared by all UEs, meters.
    pub ue_height: f64,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub rician_db: f64,
    pub p_max_w: f64,
    /// Per-UE minimum rate, bits/s/Hz.
    pub r_min: f64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub quota_mode: QuotaMode,
}

fn wall(a: [f64; 2], b: [f64; 2]) -> Wall {
    Wall { a, b }
}

impl ScenarioConfig {
    /// Four 10 m x 10 m rooms, three 4-antenna APs (none in the upper-right
    /// room), four 26-element panels on the inner walls, 20 UEs.
    pub fn default_layout() -> Self {
        let rooms = vec![
            Room { min: [0.0, 0.0], max: [10.0, 10.0] },
            Room { min: [10.0, 0.0], max: [20.0, 10.0] },
            Room { min: [0.0, 10.0], max: [10.0, 20.0] },
            Room { min: [10.0, 10.0], max: [20.0, 20.0] },
        ];
        let walls = vec![
            wall([0.0, 0.0], [20.0, 0.0]),
            wall([20.0, 0.0], [20.0, 20.0]),
            wall([20.0, 20.0], [0.0, 20.0]),
            wall([0.0, 20.0], [0.0, 0.0]),
            wall([10.0, 0.0], [10.0, 10.0]),
            wall([0.0, 10.0], [10.0, 10.0]),
            wall([10.0, 10.0], [10.0, 20.0]),
            wall([10.0, 10.0], [20.0, 10.0]),
        ];
        let ap = |x, y| ApSpec { position: [x, y, 3.0], antennas: 4, clusters: 4, quota: 4 };
        let panel = |wall, x, y, normal| PanelSpec { wall, center: [x, y, 1.5], normal, m_h: 13, m_v: 2 };
        Self {
            aps: vec![ap(3.0, 3.0), ap(17.0, 3.0), ap(3.0, 17.0)],
            panels: vec![
                panel(4, 10.0, 5.0, [1.0, 0.0]),
                panel(5, 5.0, 10.0, [0.0, 1.0]),
                panel(6, 10.0, 15.0, [1.0, 0.0]),
                panel(7, 15.0, 10.0, [0.0, 1.0]),
            ],
            rooms,
            walls,
            n_ues: 20,
            ue_height: 1.5,
            carrier_ghz: 6.0,
            bandwidth_hz: 10e6,
            noise_dbm_per_hz: -100.0,
            rician_db: 4.0,
            p_max_w: 1.0,
            r_min: 0.0,
            seed: 0,
            quota_mode: QuotaMode::Clusters,
        }
    }

    /// Two 6 m x 6 m rooms, one 2-antenna AP, one 2x2 panel on the shared
    /// wall, four UEs. The reference bandwidth is 1 Hz, so the noise power
    /// equals the density (-100 dBm).
    pub fn tiny() -> Self {
        Self {
            aps: vec![ApSpec { position: [2.0, 3.0, 2.5], antennas: 2, clusters: 2, quota: 2 }],
            panels: vec![PanelSpec { wall: 4, center: [6.0, 3.0, 1.5], normal: [1.0, 0.0], m_h: 2, m_v: 2 }],
            rooms: vec![
                Room { min: [0.0, 0.0], max: [6.0, 6.0] },
                Room { min: [6.0, 0.0], max: [12.0, 6.0] },
            ],
            walls: vec![
                wall([0.0, 0.0], [12.0, 0.0]),
                wall([12.0, 0.0], [12.0, 6.0]),
                wall([12.0, 6.0], [0.0, 6.0]),
                wall([0.0, 6.0], [0.0, 0.0]),
                wall([6.0, 0.0], [6.0, 6.0]),
            ],
            n_ues: 4,
            ue_height: 1.5,
            carrier_ghz: 6.0,
            bandwidth_hz: 1.0,
            noise_dbm_per_hz: -100.0,
            rician_db: 4.0,
            p_max_w: 1.0,
            r_min: 0.0,
            seed: 0,
            quota_mode: QuotaMode::Clusters,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
    }

    /// Noise power in watts: density plus bandwidth, in dB terms.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_dbm_per_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn rician_linear(&self) -> f64 {
        10f64.powf(self.rician_db / 10.0)
    }

    pub fn total_clusters(&self) -> usize {
        self.aps.iter().map(|a| a.clusters).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        let positive = [
            ("carrier_ghz", self.carrier_ghz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_max_w", self.p_max_w),
            ("ue_height", self.ue_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.noise_dbm_per_hz.is_finite() || !self.rician_db.is_finite() {
            return bad("noise density and Rician factor must be finite");
        }
        if !(self.r_min.is_finite() && self.r_min >= 0.0) {
            return bad("r_min must be a finite non-negative rate");
        }
        if self.aps.is_empty() {
            return bad("at least one AP is required");
        }
        for (b, ap) in self.aps.iter().enumerate() {
            if ap.antennas == 0 || ap.clusters == 0 {
                return Err(Error::InvalidConfig(format!("AP {b} needs antennas >= 1 and clusters >= 1")));
            }
            if !ap.position.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!("AP {b} position is not finite")));
            }
        }
        if self.quota_mode == QuotaMode::Clusters {
            let quota: usize = self.aps.iter().map(|a| a.quota).sum();
            if quota < self.total_clusters() {
                return bad("sum of AP quotas is smaller than the number of clusters");
            }
        } else if self.aps.iter().map(|a| a.quota).sum::<usize>() < self.n_ues {
            return bad("sum of AP quotas is smaller than the number of UEs");
        }
        if self.n_ues > 0 && self.rooms.is_empty() {
            return bad("UEs need at least one room");
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if !(r.max[0] - r.min[0] > 2.0 * UE_MARGIN && r.max[1] - r.min[1] > 2.0 * UE_MARGIN) {
                return Err(Error::InvalidConfig(format!("room {i} is degenerate")));
            }
        }
        for i in 0..self.rooms.len() {
            for j in i + 1..self.rooms.len() {
                let (a, b) = (&self.rooms[i], &self.rooms[j]);
                let overlap_x = a.min[0].max(b.min[0]) < a.max[0].min(b.max[0]) - GEOM_EPS;
                let overlap_y = a.min[1].max(b.min[1]) < a.max[1].min(b.max[1]) - GEOM_EPS;
                if overlap_x && overlap_y {
                    return Err(Error::RoomsOverlap(i, j));
                }
            }
        }
        let lambda = self.wavelength();
        for (l, p) in self.panels.iter().enumerate() {
            if p.m_h == 0 || p.m_v == 0 {
                return Err(Error::InvalidConfig(format!("panel {l} needs at least one element")));
            }
            let w = self.walls.get(p.wall).ok_or_else(|| Error::InvalidConfig(format!("panel {l} references missing wall {}", p.wall)))?;
            let norm = (p.normal[0] * p.normal[0] + p.normal[1] * p.normal[1]).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("panel {l} normal is not a unit vector")));
            }
            let dir = sub(w.b, w.a);
            let len = dot(dir, dir).sqrt();
            let t = [dir[0] / len, dir[1] / len];
            let rel = sub([p.center[0], p.center[1]], w.a);
            let along = dot(rel, t);
            let off = cross(t, rel).abs();
            let half_width = 0.5 * p.m_h as f64 * lambda / 2.0;
            if off > 1e-6 || dot(p.normal, t).abs() > 1e-9 || along - half_width < -GEOM_EPS || along + half_width > len + GEOM_EPS {
                return Err(Error::PanelOffWall { panel: l, wall: p.wall });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ap {
    pub position: [f64; 3],
    pub antennas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub wall: usize,
    pub center: [f64; 3],
    pub normal: [f64; 2],
    /// Physical extent along the wall and vertically, meters.
    pub width: f64,
    pub height: f64,
    pub m_h: usize,
    pub m_v: usize,
}

impl Panel {
    pub fn elements(&self) -> usize {
        self.m_h * self.m_v
    }

    /// Horizontal in-wall axis (normal rotated by +90 degrees).
    pub fn wall_axis(&self) -> [f64; 3] {
        [-self.normal[1], self.normal[0], 0.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub aps: Vec<Ap>,
    pub panels: Vec<Panel>,
    /// UE ground positions; the antenna sits at `ue_height`.
    pub ues: Vec<[f64; 2]>,
    pub ue_height: f64,
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub wavelength: f64,
}

impl Topology {
    pub fn ue_position(&self, u: usize) -> [f64; 3] {
        let p = self.ues[u];
        [p[0], p[1], self.ue_height]
    }

    /// Index of the room containing `p`, if exactly one does.
    pub fn room_of(&self, p: [f64; 2]) -> Option<usize> {
        let mut hits = self.rooms.iter().enumerate().filter(|(_, r)| r.contains(p));
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }
}

/// Binary adjacency indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyIndicators {
    /// `[b][u]`: unobstructed AP-UE segment.
    pub ap_ue: Vec<Vec<bool>>,
    /// `[b][l]`: unobstructed AP-panel segment.
    pub ap_ris: Vec<Vec<bool>>,
    /// `[l][u]`: UE on the forward face.
    pub ris_forward: Vec<Vec<bool>>,
    /// `[l][u]`: UE on the backward face.
    pub ris_backward: Vec<Vec<bool>>,
}

/// Builds the topology with UE positions drawn from the config seed.
pub fn build_topology(config: &ScenarioConfig) -> Result<Topology> {
    let mut rng = crate::seeded_rng(config.seed).substream("topology", 0);
    build_topology_with(config, &mut rng)
}

/// Builds the topology drawing UE positions from `rng`: a room is picked with
/// probability proportional to its area, then a uniform point inside it.
pub fn build_topology_with(config: &ScenarioConfig, rng: &mut RandomStream) -> Result<Topology> {
    config.validate()?;
    let lambda = config.wavelength();
    let total_area: f64 = config.rooms.iter().map(Room::area).sum();
    let mut ues = Vec::with_capacity(config.n_ues);
    for _ in 0..config.n_ues {
        let mut pick = rng.uniform() * total_area;
        let mut room = config.rooms[config.rooms.len() - 1];
        for r in &config.rooms {
            if pick < r.area() {
                room = *r;
                break;
            }
            pick -= r.area();
        }
        let x = rng.uniform_range(room.min[0] + UE_MARGIN, room.max[0] - UE_MARGIN);
        let y = rng.uniform_range(room.min[1] + UE_MARGIN, room.max[1] - UE_MARGIN);
        ues.push([x, y]);
    }
    Ok(Topology {
        aps: config.aps.iter().map(|a| Ap { position: a.position, antennas: a.antennas }).collect(),
        panels: config
            .panels
            .iter()
            .map(|p| Panel {
                wall: p.wall,
                center: p.center,
                normal: p.normal,
                width: p.m_h as f64 * lambda / 2.0,
                height: p.m_v as f64 * lambda / 2.0,
                m_h: p.m_h,
                m_v: p.m_v,
            })
            .collect(),
        ues,
        ue_height: config.ue_height,
        rooms: config.rooms.clone(),
        walls: config.walls.clone(),
        wavelength: lambda,
    })
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// True iff segment `p -> q` meets `wall` at a point that is not an endpoint
/// of `p -> q`.
pub fn segment_blocked_by(p: [f64; 2], q: [f64; 2], wall: &Wall) -> bool {
    let r = sub(q, p);
    let s = sub(wall.b, wall.a);
    let denom = cross(r, s);
    if denom.abs() < 1e-12 {
        // Parallel: collinear overlap along the interior counts as blocked.
        if cross(sub(wall.a, p), r).abs() > 1e-9 {
            return false;
        }
        let rr = dot(r, r);
        if rr == 0.0 {
            return false;
        }
        let t0 = dot(sub(wall.a, p), r) / rr;
        let t1 = dot(sub(wall.b, p), r) / rr;
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        return lo < 1.0 - 1e-9 && hi > 1e-9;
    }
    let qp = sub(wall.a, p);
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    t > 1e-9 && t < 1.0 - 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&u)
}

fn line_of_sight(p: [f64; 2], q: [f64; 2], walls: &[Wall]) -> bool {
    !walls.iter().any(|w| segment_blocked_by(p, q, w))
}

pub fn derive_adjacency(topology: &Topology) -> AdjacencyIndicators {
    let xy = |p: [f64; 3]| [p[0], p[1]];
    let ap_ue = topology
        .aps
        .iter()
        .map(|ap| topology.ues.iter().map(|&u| line_of_sight(xy(ap.position), u, &topology.walls)).collect())
        .collect();
    let ap_ris = topology
        .aps
        .iter()
        .map(|ap| topology.panels.iter().map(|pl| line_of_sight(xy(ap.position), xy(pl.center), &topology.walls)).collect())
        .collect();
    let mut ris_forward = vec![vec![false; topology.ues.len()]; topology.panels.len()];
    let mut ris_backward = ris_forward.clone();
    for (l, pl) in topology.panels.iter().enumerate() {
        for (u, &ue) in topology.ues.iter().enumerate() {
            let side = dot(sub(ue, xy(pl.center)), pl.normal);
            if side > 0.0 {
                ris_forward[l][u] = true;
            } else {
                ris_backward[l][u] = true;
            }
        }
    }
    AdjacencyIndicators { ap_ue, ap_ris, ris_forward, ris_backward }
}
