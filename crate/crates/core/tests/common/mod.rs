//! Instance generators and independent oracles shared by the integration
//! tests (and the workspace acceptance suite).
#![allow(dead_code)]

use starnoma_core::association::Matching;
use starnoma_core::camappo::{gaussian_log_prob, Batch, NetworkShape, PolicyNetwork};
use starnoma_core::channel::{draw_channels, ChannelState, CombinedChannel, StarBeamMatrix};
use starnoma_core::scenario::{build_topology, derive_adjacency, AdjacencyIndicators, ScenarioConfig};
use starnoma_core::linalg::CVector;
use starnoma_core::noma::{AssignmentState, BeamformingState};
use starnoma_core::{RandomStream, C64};

pub fn cvec(rng: &mut RandomStream, n: usize, scale: f64) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| rng.complex_normal() * scale))
}

/// Random NOMA instance: up to 2 APs, 3 clusters per AP, 4 UEs per cluster.
pub struct NomaInstance {
    pub h: CombinedChannel,
    pub assignment: AssignmentState,
    pub beams: BeamformingState,
    pub noise: f64,
}

pub fn noma_instance(rng: &mut RandomStream) -> NomaInstance {
    let n_aps = 1 + rng.below(2);
    let antennas: Vec<usize> = (0..n_aps).map(|_| 1 + rng.below(3)).collect();
    let mut next_ue = 0;
    let clusters: Vec<Vec<Vec<usize>>> = (0..n_aps)
        .map(|_| {
            (0..1 + rng.below(3))
                .map(|_| {
                    let size = 1 + rng.below(4);
                    let members: Vec<usize> = (next_ue..next_ue + size).collect();
                    next_ue += size;
                    members
                })
                .collect()
        })
        .collect();
    let n_ues = next_ue;
    // Channel gains spread over several orders of magnitude.
    let h: CombinedChannel = antennas.iter().map(|&n| (0..n_ues).map(|_| {
        let scale = 10f64.powf(rng.uniform_range(-2.0, 1.0));
        cvec(rng, n, scale)
    }).collect()).collect();
    let omega = clusters.iter().zip(&antennas).map(|(ap, &n)| ap.iter().map(|_| cvec(rng, n, 1.0)).collect()).collect();
    let noise = 10f64.powf(rng.uniform_range(-3.0, 0.0));
    NomaInstance { h, assignment: AssignmentState::new(n_ues, clusters).unwrap(), beams: BeamformingState { omega, star: StarBeamMatrix { panels: vec![] } }, noise }
}

fn gain(h: &CVector, w: &CVector) -> f64 {
    h.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
}

/// SINR of `u`'s signal measured at `at`, written out from the definitions:
/// signal `p_b |h_at^H w_k|²`, intra-cluster interference from the members
/// decoded after `u`, inter-cluster interference `sum |C_k'| |h_at^H w_k'|²`.
pub fn sinr_oracle(inst: &NomaInstance, b: usize, k: usize, u: usize, at: usize) -> f64 {
    let members = &inst.assignment.clusters[b][k];
    let load: usize = inst.assignment.clusters[b].iter().map(Vec::len).sum();
    let p = 1.0 / load as f64;
    let pos = members.iter().position(|&x| x == u).unwrap();
    let later = (members.len() - pos - 1) as f64;
    let h = &inst.h[b][at];
    let s = gain(h, &inst.beams.omega[b][k]);
    let inter: f64 = inst.assignment.clusters[b].iter().enumerate().filter(|(k2, _)| *k2 != k).map(|(k2, c)| c.len() as f64 * gain(h, &inst.beams.omega[b][k2])).sum();
    p * s / (p * s * later + inter + inst.noise)
}

/// Every UE can decode the signals of all earlier-decoded members at least
/// as well as their owner does.
pub fn sic_feasible(inst: &NomaInstance) -> bool {
    for (b, ap) in inst.assignment.clusters.iter().enumerate() {
        for (k, members) in ap.iter().enumerate() {
            for (i, &u) in members.iter().enumerate() {
                let own = sinr_oracle(inst, b, k, u, u);
                for &v in &members[i + 1..] {
                    if sinr_oracle(inst, b, k, u, v) < own * (1.0 - 1e-9) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Random cluster-to-AP game with capacity quotas.
pub struct MatchingInstance {
    pub n_aps: usize,
    pub quotas: Vec<usize>,
    pub weights: Vec<usize>,
    pub clusters: Vec<Vec<usize>>,
    pub h: CombinedChannel,
    pub noise: f64,
    pub n_ues: usize,
}

pub fn matching_instance(rng: &mut RandomStream) -> MatchingInstance {
    let n_aps = 1 + rng.below(3);
    let n_clusters = 1 + rng.below(4);
    let mut next = 0;
    let clusters: Vec<Vec<usize>> = (0..n_clusters)
        .map(|_| {
            let s = 1 + rng.below(3);
            next += s;
            (next - s..next).collect()
        })
        .collect();
    let weights: Vec<usize> = if rng.below(2) == 0 { vec![1; n_clusters] } else { clusters.iter().map(Vec::len).collect() };
    let quotas: Vec<usize> = (0..n_aps).map(|_| 1 + rng.below(4)).collect();
    let h = (0..n_aps).map(|_| (0..next).map(|_| {
        let scale = 10f64.powf(rng.uniform_range(-1.0, 1.0));
        cvec(rng, 2, scale)
    }).collect()).collect();
    MatchingInstance { n_aps, quotas, weights, clusters, h, noise: 0.1, n_ues: next }
}

/// Brute-force swap-blocking check, independent of the library's helpers:
/// for every pair of clusters at different APs, swap them, check both quotas
/// directly and compare the four parties' utilities.
pub fn has_blocking_pair(m: &Matching, inst: &MatchingInstance, utility: &dyn Fn(&Matching) -> Vec<f64>) -> bool {
    let tol = |x: f64| 1e-12 * x.abs().max(1.0);
    let u0 = utility(m);
    let ap_util = |m: &Matching, u: &[f64], b: usize| -> f64 { (0..u.len()).filter(|&k| m.cluster_ap[k] == Some(b)).map(|k| u[k]).sum() };
    let n = m.cluster_ap.len();
    for i in 0..n {
        for j in i + 1..n {
            let (Some(bi), Some(bj)) = (m.cluster_ap[i], m.cluster_ap[j]) else { continue };
            if bi == bj {
                continue;
            }
            let mut cluster_ap = m.cluster_ap.clone();
            cluster_ap.swap(i, j);
            let fits = (0..inst.n_aps).all(|b| (0..n).filter(|&k| cluster_ap[k] == Some(b)).map(|k| inst.weights[k]).sum::<usize>() <= inst.quotas[b]);
            if !fits {
                continue;
            }
            let swapped = Matching::from_assignment(cluster_ap, inst.n_aps);
            let u1 = utility(&swapped);
            let before = [u0[i], u0[j], ap_util(m, &u0, bi), ap_util(m, &u0, bj)];
            let after = [u1[i], u1[j], ap_util(&swapped, &u1, bi), ap_util(&swapped, &u1, bj)];
            let weak = before.iter().zip(&after).all(|(b, a)| *a >= b - tol(*b));
            let strict = before.iter().zip(&after).any(|(b, a)| *a > b + tol(*b));
            if weak && strict {
                return true;
            }
        }
    }
    false
}

/// All set partitions of `items` into exactly `k` nonempty blocks.
pub fn partitions(items: &[usize], k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(items: &[usize], k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        let Some((&first, rest)) = items.split_first() else {
            if cur.len() == k {
                out.push(cur.clone());
            }
            return;
        };
        if cur.len() + items.len() < k {
            return;
        }
        for i in 0..cur.len() {
            cur[i].push(first);
            rec(rest, k, cur, out);
            cur[i].pop();
        }
        if cur.len() < k {
            cur.push(vec![first]);
            rec(rest, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, &mut Vec::new(), &mut out);
    out
}

pub fn correlation(a: &CVector, b: &CVector) -> f64 {
    let dot: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    dot.norm() / (a.norm() * b.norm())
}

pub fn within_correlation(clusters: &[Vec<usize>], h: &[CVector]) -> f64 {
    clusters.iter().map(|c| c.iter().enumerate().flat_map(|(i, &u)| c[i + 1..].iter().map(move |&v| (u, v))).map(|(u, v)| correlation(&h[u], &h[v])).sum::<f64>()).sum()
}

/// Toy network and batch for gradient checks. `offset` shifts the old
/// log-probabilities so the likelihood ratios land in a chosen region.
pub fn toy_problem(seed: u64, n: usize, offset: f64) -> (PolicyNetwork, Batch) {
    let mut rng = starnoma_core::seeded_rng(seed);
    let net = PolicyNetwork::new(NetworkShape { obs: 4, hidden: 6, act: 3 }, -0.3, &mut rng);
    let mut b = Batch::default();
    for _ in 0..n {
        let obs: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let fp = net.forward(&obs);
        let a: Vec<f64> = fp.mean.iter().map(|m| m + 0.5 * rng.normal()).collect();
        b.old_log_probs.push(gaussian_log_prob(&a, &fp.mean, net.log_std()) + offset + 0.02 * rng.normal());
        b.actions.push(a);
        b.obs.push(obs);
        b.advantages.push(rng.normal());
        b.returns.push(rng.normal());
        b.targets.push(Some((0..3).map(|_| rng.normal()).collect()));
    }
    (net, b)
}

/// Largest relative error between `analytic` and central differences of `f`.
pub fn fd_max_rel_error(params: &[f64], analytic: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        let h = 1e-5 * params[i].abs().max(1.0);
        p[i] = params[i] + h;
        let up = f(&p);
        p[i] = params[i] - h;
        let down = f(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

/// Scenario instance with channels drawn from the scenario's own seed.
pub fn scenario_instance(config: ScenarioConfig) -> (ScenarioConfig, ChannelState, AdjacencyIndicators) {
    let topology = build_topology(&config).unwrap();
    let adjacency = derive_adjacency(&topology);
    let channels = draw_channels(&topology, &adjacency, &config, &mut starnoma_core::seeded_rng(config.seed).substream("channels", 0));
    (config, channels, adjacency)
}

/// Tiny layout with a 4x2 panel: 2 antennas, 8 elements, 4 UEs.
pub fn sca_config(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::tiny();
    c.panels[0].m_h = 4;
    c.seed = seed;
    c
}

/// One UE served over a direct link only.
pub fn single_ue_direct(h: CVector, noise: f64) -> (ChannelState, AdjacencyIndicators) {
    let ch = ChannelState { h_direct: vec![vec![h]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: noise, clamp_warnings: 0 };
    let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
    (ch, adj)
}
