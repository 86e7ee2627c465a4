//! Many-to-one matching of UE clusters to APs: deferred acceptance followed
//! by swap-blocking-pair elimination, plus the two-stage association and
//! pairing pipeline built on it.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::{CombinedChannel, StarBeamMatrix};
use crate::linalg::CVector;
use crate::noma::{apply_decoding_order, rate_report, AssignmentState, BeamformingState};
use crate::pairing::{kmeans_pairing, KmeansVariant, DEFAULT_MAX_ITERS};
use crate::rng::RandomStream;
use crate::scenario::{QuotaMode, ScenarioConfig};
use crate::{Result, C64};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// Relative slack when comparing utilities.
const UTILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Cluster to AP.
    pub cluster_ap: Vec<Option<usize>>,
    /// AP to clusters, ascending.
    pub ap_clusters: Vec<Vec<usize>>,
}

impl Matching {
    pub fn empty(n_clusters: usize, n_aps: usize) -> Self {
        Self { cluster_ap: vec![None; n_clusters], ap_clusters: vec![Vec::new(); n_aps] }
    }

    pub fn from_assignment(cluster_ap: Vec<Option<usize>>, n_aps: usize) -> Self {
        let mut m = Self::empty(cluster_ap.len(), n_aps);
        for (k, b) in cluster_ap.iter().enumerate() {
            if let Some(b) = *b {
                m.assign(k, b);
            }
        }
        m
    }

    pub fn assign(&mut self, k: usize, b: usize) {
        self.unassign(k);
        self.cluster_ap[k] = Some(b);
        let list = &mut self.ap_clusters[b];
        let pos = list.partition_point(|&x| x < k);
        list.insert(pos, k);
    }

    pub fn unassign(&mut self, k: usize) {
        if let Some(b) = self.cluster_ap[k].take() {
            self.ap_clusters[b].retain(|&x| x != k);
        }
    }

    /// Load of AP `b` counted with `weights`.
    pub fn load(&self, b: usize, weights: &[usize]) -> usize {
        self.ap_clusters[b].iter().map(|&k| weights[k]).sum()
    }

    /// Both directions agree and no AP exceeds its quota.
    pub fn is_valid(&self, quotas: &[usize], weights: &[usize]) -> bool {
        let consistent = self.cluster_ap.iter().enumerate().all(|(k, b)| b.is_none_or(|b| self.ap_clusters[b].contains(&k)))
            && self.ap_clusters.iter().enumerate().all(|(b, ks)| ks.iter().all(|&k| self.cluster_ap[k] == Some(b)));
        consistent && (0..self.ap_clusters.len()).all(|b| self.load(b, weights) <= quotas[b])
    }

    /// Exchange the APs of clusters `i` and `j`.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let mut m = self.clone();
        let (bi, bj) = (self.cluster_ap[i], self.cluster_ap[j]);
        m.unassign(i);
        m.unassign(j);
        if let Some(b) = bj {
            m.assign(i, b);
        }
        if let Some(b) = bi {
            m.assign(j, b);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceProfile {
    /// Per cluster, APs from most to least preferred.
    pub lists: Vec<Vec<usize>>,
}

/// Sum of the member rates.
pub fn cluster_utility(members: &[usize], rate: impl Fn(usize) -> f64) -> f64 {
    members.iter().map(|&u| rate(u)).sum()
}

/// Ranks APs for each cluster by `sum_u ‖ĥ(b,u)‖²`, descending; ties go to the
/// lower AP index.
pub fn build_preferences(clusters: &[Vec<usize>], h: &CombinedChannel) -> PreferenceProfile {
    let lists = clusters
        .iter()
        .map(|members| {
            let mut scored: Vec<(f64, usize)> =
                (0..h.len()).map(|b| (members.iter().map(|&u| h[b][u].norm_squared()).sum(), b)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().map(|(_, b)| b).collect()
        })
        .collect();
    PreferenceProfile { lists }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaOutcome {
    pub matching: Matching,
    pub proposals: usize,
}

/// Gale-Shapley with clusters proposing. APs hold their best proposers by
/// `ap_score(b, k)` (higher first, lower cluster index on ties) as long as
/// the weighted load fits the quota, and reject the rest.
pub fn deferred_acceptance(prefs: &PreferenceProfile, quotas: &[usize], weights: &[usize], ap_score: impl Fn(usize, usize) -> f64) -> DaOutcome {
    let n_clusters = prefs.lists.len();
    let mut matching = Matching::empty(n_clusters, quotas.len());
    let mut next = vec![0usize; n_clusters];
    let mut proposals = 0;
    loop {
        let free: Vec<usize> = (0..n_clusters).filter(|&k| matching.cluster_ap[k].is_none() && next[k] < prefs.lists[k].len()).collect();
        if free.is_empty() {
            break;
        }
        let mut touched = vec![false; quotas.len()];
        for k in free {
            let b = prefs.lists[k][next[k]];
            next[k] += 1;
            proposals += 1;
            matching.assign(k, b);
            touched[b] = true;
        }
        for (b, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
            let mut held: Vec<(f64, usize)> = matching.ap_clusters[b].iter().map(|&k| (ap_score(b, k), k)).collect();
            held.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let mut load = 0;
            for (_, k) in held {
                if load + weights[k] <= quotas[b] {
                    load += weights[k];
                } else {
                    matching.unassign(k);
                }
            }
        }
    }
    DaOutcome { matching, proposals }
}

fn ap_utilities(matching: &Matching, cluster_utils: &[f64]) -> Vec<f64> {
    matching.ap_clusters.iter().map(|ks| ks.iter().map(|&k| cluster_utils[k]).sum()).collect()
}

fn weakly_better(after: f64, before: f64) -> bool {
    after >= before - UTILITY_TOL * before.abs().max(1.0)
}

fn strictly_better(after: f64, before: f64) -> bool {
    after > before + UTILITY_TOL * before.abs().max(1.0)
}

/// Utilities of the four parties `[i, j, AP of i, AP of j]`.
pub type PartyUtilities = [f64; 4];

/// Before/after utilities of swapping `i` and `j`, if that swap is allowed
/// (both matched, different APs, quotas still met).
pub fn swap_utilities(
    matching: &Matching,
    quotas: &[usize],
    weights: &[usize],
    i: usize,
    j: usize,
    utility: &impl Fn(&Matching) -> Vec<f64>,
    current: &[f64],
) -> Option<(PartyUtilities, PartyUtilities)> {
    let (n, m) = match (matching.cluster_ap[i], matching.cluster_ap[j]) {
        (Some(n), Some(m)) if n != m => (n, m),
        _ => return None,
    };
    let swapped = matching.swapped(i, j);
    if !swapped.is_valid(quotas, weights) {
        return None;
    }
    let after = utility(&swapped);
    let (ap_before, ap_after) = (ap_utilities(matching, current), ap_utilities(&swapped, &after));
    Some(([current[i], current[j], ap_before[n], ap_before[m]], [after[i], after[j], ap_after[n], ap_after[m]]))
}

/// All four parties weakly gain and at least one strictly gains.
pub fn is_blocking(before: &PartyUtilities, after: &PartyUtilities) -> bool {
    before.iter().zip(after).all(|(b, a)| weakly_better(*a, *b)) && before.iter().zip(after).any(|(b, a)| strictly_better(*a, *b))
}

/// First swap-blocking pair in ascending `(i, j)` order. `utility` maps a
/// matching to per-cluster utilities (0 for unmatched clusters).
pub fn find_swap_blocking_pair(matching: &Matching, quotas: &[usize], weights: &[usize], utility: &impl Fn(&Matching) -> Vec<f64>) -> Option<(usize, usize)> {
    let current = utility(matching);
    let n = matching.cluster_ap.len();
    for i in 0..n {
        for j in i + 1..n {
            if let Some((before, after)) = swap_utilities(matching, quotas, weights, i, j, utility, &current) {
                if is_blocking(&before, &after) {
                    return Some((i, j));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapRecord {
    pub i: usize,
    pub j: usize,
    pub before: PartyUtilities,
    pub after: PartyUtilities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub matching: Matching,
    pub swaps: Vec<SwapRecord>,
    /// False when `max_iters` swaps ran without reaching stability.
    pub converged: bool,
}

pub fn default_swap_iters(n_clusters: usize) -> usize {
    10 * n_clusters * n_clusters
}

/// Executes swap-blocking pairs until none remain or `max_iters` swaps ran.
pub fn swap_stabilize(matching: Matching, quotas: &[usize], weights: &[usize], utility: &impl Fn(&Matching) -> Vec<f64>, max_iters: usize) -> SwapOutcome {
    let mut matching = matching;
    let mut swaps = Vec::new();
    for _ in 0..max_iters {
        let Some((i, j)) = find_swap_blocking_pair(&matching, quotas, weights, utility) else {
            return SwapOutcome { matching, swaps, converged: true };
        };
        let current = utility(&matching);
        let (before, after) = swap_utilities(&matching, quotas, weights, i, j, utility, &current).expect("blocking pair is swappable");
        assert!(is_blocking(&before, &after), "executed swap must be blocking");
        matching = matching.swapped(i, j);
        swaps.push(SwapRecord { i, j, before, after });
    }
    let converged = find_swap_blocking_pair(&matching, quotas, weights, utility).is_none();
    SwapOutcome { matching, swaps, converged }
}

/// `α(b,u)` from a cluster matching, plus the UEs of unmatched clusters.
pub fn matching_to_alpha(matching: &Matching, clusters: &[Vec<usize>], n_ues: usize) -> (Vec<Vec<bool>>, Vec<usize>) {
    let mut alpha = vec![vec![false; n_ues]; matching.ap_clusters.len()];
    let mut unmatched = Vec::new();
    for (k, members) in clusters.iter().enumerate() {
        match matching.cluster_ap[k] {
            Some(b) => members.iter().for_each(|&u| alpha[b][u] = true),
            None => unmatched.extend_from_slice(members),
        }
    }
    unmatched.sort_unstable();
    (alpha, unmatched)
}

/// MRT toward the member with the strongest channel, scaled to `power`.
pub fn mrt_beam(h_b: &[CVector], members: &[usize], antennas: usize, power: f64) -> CVector {
    let strongest = members.iter().copied().max_by(|&a, &b| h_b[a].norm_squared().total_cmp(&h_b[b].norm_squared()).then(b.cmp(&a)));
    match strongest {
        Some(s) if h_b[s].norm() > 0.0 => &h_b[s] * C64::new(power.sqrt() / h_b[s].norm(), 0.0),
        _ => CVector::from_element(antennas, C64::new((power / antennas as f64).sqrt(), 0.0)),
    }
}

/// Per-cluster utilities when every matched cluster is served by MRT toward
/// its strongest member with an equal share of its AP's budget, members in
/// ascending-gain order.
pub fn mrt_utilities(matching: &Matching, clusters: &[Vec<usize>], h: &CombinedChannel, noise: f64, p_max: f64, n_ues: usize) -> Vec<f64> {
    let mut slots = Vec::with_capacity(matching.ap_clusters.len());
    let mut omega = Vec::with_capacity(matching.ap_clusters.len());
    for (b, ks) in matching.ap_clusters.iter().enumerate() {
        let n_b = h[b].first().map_or(1, |v| v.len());
        let share = if ks.is_empty() { 0.0 } else { p_max / ks.len() as f64 };
        slots.push(ks.iter().map(|&k| clusters[k].clone()).collect::<Vec<_>>());
        omega.push(ks.iter().map(|&k| mrt_beam(&h[b], &clusters[k], n_b, share)).collect::<Vec<_>>());
    }
    let mut assignment = AssignmentState::new(n_ues, slots).expect("clusters are disjoint");
    let beams = BeamformingState { omega, star: StarBeamMatrix { panels: Vec::new() } };
    apply_decoding_order(h, &mut assignment, &beams, noise);
    let report = rate_report(h, &assignment, &beams, noise);
    let mut out = vec![0.0; clusters.len()];
    for &k in matching.ap_clusters.iter().flatten() {
        out[k] = cluster_utility(&clusters[k], |u| report.per_ue[u]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingOptions {
    pub kmeans_variant: KmeansVariant,
    pub kmeans_max_iters: usize,
    /// Defaults to `10 * clusters²` when `None`.
    pub swap_max_iters: Option<usize>,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        Self { kmeans_variant: KmeansVariant::Reseed, kmeans_max_iters: DEFAULT_MAX_ITERS, swap_max_iters: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingOutcome {
    /// Final clusters, members in UE order; apply the decoding order once
    /// beams are known.
    pub assignment: AssignmentState,
    /// Clusters that played the matching game.
    pub provisional_clusters: Vec<Vec<usize>>,
    pub matching: Matching,
    pub da_proposals: usize,
    pub swaps: usize,
    pub swap_converged: bool,
    pub kmeans_converged: bool,
    /// UEs whose cluster found no AP and were placed on the least loaded AP
    /// regardless of quota.
    pub forced_ues: Vec<usize>,
}

/// Provisional association, per-AP pairing, cluster-to-AP matching, then
/// re-pairing of each AP's UEs into its configured number of clusters.
pub fn two_stage_matching(config: &ScenarioConfig, h: &CombinedChannel, noise: f64, rng: &mut RandomStream, options: &MatchingOptions) -> Result<MatchingOutcome> {
    let n_aps = config.aps.len();
    let n_ues = config.n_ues;
    let mut kmeans_converged = true;

    // Strongest AP per UE; the UE-count quota applies when that is the mode.
    let ue_cap: Vec<usize> = config.aps.iter().map(|a| if config.quota_mode == QuotaMode::Ues { a.quota } else { usize::MAX }).collect();
    let mut provisional: Vec<Vec<usize>> = vec![Vec::new(); n_aps];
    let mut order: Vec<(f64, usize)> = (0..n_ues).map(|u| ((0..n_aps).map(|b| h[b][u].norm_squared()).fold(0.0, f64::max), u)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, u) in &order {
        let mut ranked: Vec<usize> = (0..n_aps).collect();
        ranked.sort_by(|&a, &b| h[b][u].norm_squared().total_cmp(&h[a][u].norm_squared()).then(a.cmp(&b)));
        let b = ranked.iter().copied().find(|&b| provisional[b].len() < ue_cap[b]).unwrap_or(ranked[0]);
        provisional[b].push(u);
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (b, ues) in provisional.iter_mut().enumerate() {
        if ues.is_empty() {
            continue;
        }
        ues.sort_unstable();
        let k = config.aps[b].clusters.min(ues.len());
        let cs = kmeans_pairing(ues, k, &h[b], rng, options.kmeans_max_iters, options.kmeans_variant)?;
        kmeans_converged &= cs.converged;
        clusters.extend(cs.clusters);
    }

    let weights: Vec<usize> = match config.quota_mode {
        QuotaMode::Clusters => vec![1; clusters.len()],
        QuotaMode::Ues => clusters.iter().map(Vec::len).collect(),
    };
    let quotas: Vec<usize> = config.aps.iter().map(|a| a.quota).collect();
    let p_max = config.p_max_w;
    let utility = |m: &Matching| mrt_utilities(m, &clusters, h, noise, p_max, n_ues);
    let prefs = build_preferences(&clusters, h);
    let da = deferred_acceptance(&prefs, &quotas, &weights, |b, k| {
        let mut alone = Matching::empty(clusters.len(), n_aps);
        alone.assign(k, b);
        utility(&alone)[k]
    });
    let max_swaps = options.swap_max_iters.unwrap_or_else(|| default_swap_iters(clusters.len()));
    let stable = swap_stabilize(da.matching, &quotas, &weights, &utility, max_swaps);

    let (alpha, unmatched) = matching_to_alpha(&stable.matching, &clusters, n_ues);
    let mut served: Vec<Vec<usize>> = alpha.iter().map(|row| (0..n_ues).filter(|&u| row[u]).collect()).collect();
    for &u in &unmatched {
        let b = (0..n_aps).min_by_key(|&b| (served[b].len(), b)).expect("at least one AP");
        served[b].push(u);
    }

    let (assignment, paired) = pair_served_ues(config, &served, h, rng, options)?;
    kmeans_converged &= paired;

    Ok(MatchingOutcome {
        assignment,
        provisional_clusters: clusters,
        matching: stable.matching,
        da_proposals: da.proposals,
        swaps: stable.swaps.len(),
        swap_converged: stable.converged,
        kmeans_converged,
        forced_ues: unmatched,
    })
}

/// K-means pairing of each AP's served UEs into its configured number of
/// cluster slots (fewer clusters when it serves fewer UEs; the rest stay
/// empty). Returns the assignment and whether every K-means run converged.
pub fn pair_served_ues(config: &ScenarioConfig, served: &[Vec<usize>], h: &CombinedChannel, rng: &mut RandomStream, options: &MatchingOptions) -> Result<(AssignmentState, bool)> {
    let mut converged = true;
    let mut slots = Vec::with_capacity(served.len());
    for (b, ues) in served.iter().enumerate() {
        let mut ues = ues.clone();
        ues.sort_unstable();
        let k_b = config.aps[b].clusters;
        let mut ap_slots = vec![Vec::new(); k_b];
        if !ues.is_empty() {
            let cs = kmeans_pairing(&ues, k_b.min(ues.len()), &h[b], rng, options.kmeans_max_iters, options.kmeans_variant)?;
            converged &= cs.converged;
            for (slot, c) in ap_slots.iter_mut().zip(cs.clusters) {
                *slot = c;
            }
        }
        slots.push(ap_slots);
    }
    Ok((AssignmentState::new(config.n_ues, slots)?, converged))
}
