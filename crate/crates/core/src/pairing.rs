//! Correlation-based K-means grouping of an AP's UEs into NOMA clusters.

use alloc::vec::Vec;

use crate::linalg::CVector;
use crate::rng::RandomStream;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 100;

/// How clusters carry over between K-means rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KmeansVariant {
    /// Every round restarts from the representatives alone.
    #[default]
    Reseed,
    /// UEs keep their cluster unless another representative is strictly
    /// more correlated.
    Persistent,
}

/// Clusters of one AP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSet {
    /// Members in ascending UE order.
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// `|a^H b| / (‖a‖‖b‖)` and whether either vector was zero (then 0).
pub fn channel_correlation_checked(a: &CVector, b: &CVector) -> (f64, bool) {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return (0.0, true);
    }
    ((a.dotc(b).norm() / (na * nb)).min(1.0), false)
}

pub fn channel_correlation(a: &CVector, b: &CVector) -> f64 {
    channel_correlation_checked(a, b).0
}

/// Sum of correlations between `u` and every member of the other clusters.
/// `h` is indexed by UE.
pub fn cross_cluster_correlation(u: usize, clusters: &[Vec<usize>], h: &[CVector]) -> f64 {
    clusters
        .iter()
        .filter(|c| !c.contains(&u))
        .flatten()
        .map(|&v| channel_correlation(&h[u], &h[v]))
        .sum()
}

/// Member of `clusters[k]` least correlated with the other clusters; ties go
/// to the lower UE index.
pub fn update_representative(k: usize, clusters: &[Vec<usize>], h: &[CVector]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &u in &clusters[k] {
        let c = cross_cluster_correlation(u, clusters, h);
        if c < best.0 || (c == best.0 && u < best.1) {
            best = (c, u);
        }
    }
    best.1
}

fn argmax_rep(u: usize, reps: &[usize], h: &[CVector]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, &r) in reps.iter().enumerate() {
        let c = channel_correlation(&h[u], &h[r]);
        if c > best.0 {
            best = (c, k);
        }
    }
    best.1
}

/// Assigns every non-representative UE to its most correlated representative
/// (lowest cluster index on ties); representatives stay in their own cluster.
pub fn assign_to_representatives(ues: &[usize], reps: &[usize], h: &[CVector]) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = reps.iter().map(|&r| alloc::vec![r]).collect();
    for &u in ues {
        if !reps.contains(&u) {
            clusters[argmax_rep(u, reps, h)].push(u);
        }
    }
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters
}

fn assign_persistent(previous: &[Vec<usize>], reps: &[usize], h: &[CVector]) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = reps.iter().map(|&r| alloc::vec![r]).collect();
    for (k_old, members) in previous.iter().enumerate() {
        for &u in members {
            if reps.contains(&u) {
                continue;
            }
            let stay = channel_correlation(&h[u], &h[reps[k_old]]);
            let best = argmax_rep(u, reps, h);
            let target = if channel_correlation(&h[u], &h[reps[best]]) > stay { best } else { k_old };
            clusters[target].push(u);
        }
    }
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters
}

/// Groups `ues` into `k` clusters. `h` is indexed by UE and holds the
/// combined channels toward the serving AP.
pub fn kmeans_pairing(ues: &[usize], k: usize, h: &[CVector], rng: &mut RandomStream, max_iters: usize, variant: KmeansVariant) -> Result<ClusterSet> {
    if k == 0 || ues.len() < k {
        return Err(Error::TooFewUes { clusters: k, ues: ues.len() });
    }
    let mut pool = ues.to_vec();
    rng.shuffle(&mut pool);
    let mut reps: Vec<usize> = pool[..k].to_vec();
    let mut clusters = assign_to_representatives(ues, &reps, h);
    for it in 1..=max_iters {
        let next: Vec<usize> = (0..k).map(|c| update_representative(c, &clusters, h)).collect();
        if next == reps {
            return Ok(ClusterSet { clusters, representatives: reps, iterations: it, converged: true });
        }
        reps = next;
        clusters = match variant {
            KmeansVariant::Reseed => assign_to_representatives(ues, &reps, h),
            KmeansVariant::Persistent => assign_persistent(&clusters, &reps, h),
        };
    }
    Ok(ClusterSet { clusters, representatives: reps, iterations: max_iters, converged: false })
}

/// Sum of pairwise correlations inside each cluster.
pub fn within_cluster_correlation(clusters: &[Vec<usize>], h: &[CVector]) -> f64 {
    clusters
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for (i, &u) in c.iter().enumerate() {
                for &v in &c[i + 1..] {
                    s += channel_correlation(&h[u], &h[v]);
                }
            }
            s
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use alloc::vec;

    fn v(x: &[(f64, f64)]) -> CVector {
        CVector::from_iterator(x.len(), x.iter().map(|&(r, i)| C64::new(r, i)))
    }

    #[test]
    fn correlation_examples() {
        let a = v(&[(1.0, 0.0), (0.0, 2.0)]);
        assert!((channel_correlation(&a, &a) - 1.0).abs() < 1e-15);
        assert_eq!(channel_correlation(&v(&[(1.0, 0.0), (0.0, 0.0)]), &v(&[(0.0, 0.0), (1.0, 0.0)])), 0.0);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let c = channel_correlation(&v(&[(1.0, 0.0), (0.0, 0.0)]), &v(&[(s, 0.0), (s, 0.0)]));
        assert!((c - 0.5f64.sqrt()).abs() < 1e-15);
        let (z, flag) = channel_correlation_checked(&v(&[(0.0, 0.0)]), &v(&[(1.0, 0.0)]));
        assert_eq!(z, 0.0);
        assert!(flag);
    }

    #[test]
    fn cross_correlation_examples() {
        let h = vec![v(&[(1.0, 0.0), (0.0, 0.0)]), v(&[(0.5, 0.0), (0.75f64.sqrt(), 0.0)])];
        assert_eq!(cross_cluster_correlation(0, &[vec![0, 1]], &h), 0.0);
        let two = [vec![0], vec![1]];
        assert!((cross_cluster_correlation(0, &two, &h) - 0.5).abs() < 1e-15);
        assert!((cross_cluster_correlation(1, &two, &h) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn representative_examples() {
        let e0 = v(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let e1 = v(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        let e2 = v(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let mix = v(&[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        // UE 0 is orthogonal to the other cluster {3}, UE 1 is not.
        let h = vec![e2.clone(), mix, e0.clone(), e1.clone()];
        assert_eq!(update_representative(0, &[vec![0, 1], vec![3]], &h), 0);
        assert_eq!(update_representative(1, &[vec![0, 1], vec![3]], &h), 3);
        let same = vec![e0.clone(), e0.clone(), e0];
        assert_eq!(update_representative(0, &[vec![1, 2], vec![0]], &same), 1);
    }

    fn parallel_pairs() -> Vec<CVector> {
        vec![
            v(&[(1.0, 0.0), (0.0, 0.0)]),
            v(&[(0.0, 2.0), (0.0, 0.0)]),
            v(&[(0.0, 0.0), (1.0, 0.0)]),
            v(&[(0.0, 0.0), (-3.0, 1.0)]),
        ]
    }

    #[test]
    fn parallel_pairs_are_grouped() {
        let h = parallel_pairs();
        for seed in 0..20 {
            let mut rng = crate::seeded_rng(seed);
            let mut cs = kmeans_pairing(&[0, 1, 2, 3], 2, &h, &mut rng, DEFAULT_MAX_ITERS, KmeansVariant::Reseed).unwrap();
            cs.clusters.sort();
            assert_eq!(cs.clusters, vec![vec![0, 1], vec![2, 3]], "seed {seed}");
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let h = parallel_pairs();
        let mut rng = crate::seeded_rng(4);
        let mut cs = kmeans_pairing(&[0, 1, 2, 3], 4, &h, &mut rng, DEFAULT_MAX_ITERS, KmeansVariant::Reseed).unwrap();
        cs.clusters.sort();
        assert_eq!(cs.clusters, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(cs.converged);
    }

    #[test]
    fn too_few_ues_rejected() {
        let mut rng = crate::seeded_rng(0);
        assert_eq!(
            kmeans_pairing(&[0], 2, &parallel_pairs(), &mut rng, 10, KmeansVariant::Reseed),
            Err(Error::TooFewUes { clusters: 2, ues: 1 })
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = crate::seeded_rng(7);
        let h: Vec<CVector> = (0..6).map(|_| CVector::from_fn(3, |_, _| rng.complex_normal())).collect();
        let ues: Vec<usize> = (0..6).collect();
        for variant in [KmeansVariant::Reseed, KmeansVariant::Persistent] {
            let a = kmeans_pairing(&ues, 3, &h, &mut crate::seeded_rng(1), 100, variant).unwrap();
            let b = kmeans_pairing(&ues, 3, &h, &mut crate::seeded_rng(1), 100, variant).unwrap();
            assert_eq!(a, b);
        }
    }
}
