//! SCA beamforming: the active (AP beams) and passive (STAR-RIS) convex
//! subproblems, rank-one recovery, and the alternating outer loop.
//!
//! Both subproblems lift their vectors to PSD matrices and maximize the sum
//! of first-order Taylor lower bounds of the UE rates. The slack variables
//! `ζ = 1/(p_b |ĥω|²)` and `η = interference + noise` are eliminated at their
//! tight values, which keeps every rate bound concave in the lifted
//! variable. All quantities inside the solver are normalized so the noise
//! power and each AP budget equal one.
//!
//! The passive variable is one joint matrix `V = v v^H` over
//! `v = [coefficients of every (panel, face, element); 1]`, whose diagonal
//! blocks are the per-panel, per-face matrices `Φ Φ^H`. The trailing
//! coordinate carries the direct path.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LOG2_E;

use crate::channel::{combined_channel, passive_decomposition, ChannelState, CombinedChannel, StarBeamMatrix};
use crate::convex::{self, Affine, Constraint, ConvexProblem, Layout, LinearTerm, Point, SmoothFunction, SolverOptions, Status, TraceBudget};
use crate::linalg::{hermitian_eigen, outer, quad_form, CMatrix, CVector};
use crate::noma::{apply_decoding_order, power_coefficient, rate_report, AssignmentState, BeamformingState, RateReport};
use crate::rng::RandomStream;
use crate::scenario::AdjacencyIndicators;
use crate::association::mrt_beam;
use crate::{Error, Result, C64};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// `log2(1 + 1/(ζη))` linearized around `(ζ_n, η_n)`.
pub fn taylor_lower_bound(zeta: f64, eta: f64, zeta_n: f64, eta_n: f64) -> Result<f64> {
    for (name, v) in [("zeta", zeta), ("eta", eta), ("zeta_n", zeta_n), ("eta_n", eta_n)] {
        if !(v > 0.0) {
            return Err(Error::NonPositive(name));
        }
    }
    Ok(taylor_unchecked(zeta, eta, zeta_n, eta_n))
}

fn taylor_coefficients(zeta_n: f64, eta_n: f64) -> (f64, f64, f64) {
    let base = (1.0 + 1.0 / (zeta_n * eta_n)).log2();
    let a = LOG2_E / (zeta_n + zeta_n * zeta_n * eta_n);
    let c = LOG2_E / (eta_n + eta_n * eta_n * zeta_n);
    (base, a, c)
}

fn taylor_unchecked(zeta: f64, eta: f64, zeta_n: f64, eta_n: f64) -> f64 {
    let (base, a, c) = taylor_coefficients(zeta_n, eta_n);
    base - a * (zeta - zeta_n) - c * (eta - eta_n)
}

/// `weight * q^H X_block q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTerm {
    pub block: usize,
    pub q: CVector,
    pub weight: f64,
}

impl QuadTerm {
    fn value(&self, x: &Point) -> f64 {
        self.weight * quad_form(&x.mats[self.block], &self.q)
    }

    fn add_gradient(&self, scale: f64, out: &mut Point) {
        let w = C64::new(scale * self.weight, 0.0);
        let m = &mut out.mats[self.block];
        for j in 0..self.q.len() {
            let qj = self.q[j].conj() * w;
            for i in 0..self.q.len() {
                m[(i, j)] += self.q[i] * qj;
            }
        }
    }
}

/// One UE's rate bound in lifted form: `ζ = 1/signal`, `η = 1 + interference`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerm {
    pub ue: usize,
    pub signal: Vec<QuadTerm>,
    pub interference: Vec<QuadTerm>,
    pub zeta_n: f64,
    pub eta_n: f64,
}

impl RateTerm {
    fn parts(&self, x: &Point) -> (f64, f64) {
        let s: f64 = self.signal.iter().map(|t| t.value(x)).sum();
        let j: f64 = 1.0 + self.interference.iter().map(|t| t.value(x)).sum::<f64>();
        (s, j)
    }

    /// Taylor bound at `x`; `-inf` where the signal vanishes.
    pub fn lower_bound(&self, x: &Point) -> f64 {
        let (s, j) = self.parts(x);
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        taylor_unchecked(1.0 / s, j, self.zeta_n, self.eta_n)
    }

    /// `out += scale * grad(lower_bound)`.
    fn add_gradient(&self, x: &Point, scale: f64, out: &mut Point) {
        let (s, _) = self.parts(x);
        if !(s > 0.0) {
            return;
        }
        let (_, a, c) = taylor_coefficients(self.zeta_n, self.eta_n);
        let ds = a / (s * s);
        for t in &self.signal {
            t.add_gradient(scale * ds, out);
        }
        for t in &self.interference {
            t.add_gradient(-scale * c, out);
        }
    }
}

/// `-sum of rate bounds`, minimized by the solver.
struct NegSumRate<'a>(&'a [RateTerm]);

impl SmoothFunction for NegSumRate<'_> {
    fn value(&self, x: &Point) -> f64 {
        let mut total = 0.0;
        for t in self.0 {
            let v = t.lower_bound(x);
            if !v.is_finite() {
                return f64::INFINITY;
            }
            total -= v;
        }
        total
    }

    fn add_gradient(&self, x: &Point, weight: f64, out: &mut Point) {
        for t in self.0 {
            t.add_gradient(x, -weight, out);
        }
    }
}

/// `r_min - rate bound <= 0`.
struct RateFloor<'a> {
    term: &'a RateTerm,
    r_min: f64,
}

impl SmoothFunction for RateFloor<'_> {
    fn value(&self, x: &Point) -> f64 {
        let v = self.term.lower_bound(x);
        if v.is_finite() {
            self.r_min - v
        } else {
            f64::INFINITY
        }
    }

    fn add_gradient(&self, x: &Point, weight: f64, out: &mut Point) {
        self.term.add_gradient(x, -weight, out);
    }
}

/// Tight slack values of one UE, in noise-power units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackEntry {
    pub ap: usize,
    pub cluster: usize,
    pub ue: usize,
    /// Inverse desired-signal power `1/(p_b |ĥω|²)`.
    pub zeta: f64,
    /// Interference plus noise.
    pub eta: f64,
}

/// Slack variables at a given state. The same pair serves as `(ν, ξ)` in the
/// passive step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlackState {
    pub entries: Vec<SlackEntry>,
}

impl SlackState {
    /// Evaluates `ζ` and `η` from the state; `ζ` is infinite for UEs whose
    /// desired signal vanishes.
    pub fn from_state(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, noise: f64) -> Self {
        let mut entries = Vec::new();
        for (b, ap) in assignment.clusters.iter().enumerate() {
            let p_b = power_coefficient(assignment, b).value;
            for (k, members) in ap.iter().enumerate() {
                for &u in members {
                    let (intra, inter) = crate::noma::interference(h, assignment, beams, b, k, u, None).expect("member of its own cluster");
                    let x = crate::noma::beam_gain(h, beams, b, k, u) * p_b / noise;
                    entries.push(SlackEntry { ap: b, cluster: k, ue: u, zeta: 1.0 / x, eta: (intra + inter) / noise + 1.0 });
                }
            }
        }
        Self { entries }
    }

    /// Sum of `log2(1 + 1/(ζη))`, i.e. the sum rate these slacks certify.
    pub fn implied_sum_rate(&self) -> f64 {
        self.entries.iter().map(|e| (1.0 + 1.0 / (e.zeta * e.eta)).log2()).sum()
    }
}

/// Best rank-one factor of a PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    /// Principal eigenvector scaled by `sqrt(λ_max)`.
    pub vector: CVector,
    /// `λ_max / tr`, 1 for an exactly rank-one matrix.
    pub ratio: f64,
}

pub fn extract_rank_one(m: &CMatrix) -> RankOne {
    let (vals, vecs) = hermitian_eigen(m);
    let n = vals.len();
    if n == 0 {
        return RankOne { vector: CVector::zeros(0), ratio: 1.0 };
    }
    let lmax = vals[n - 1].max(0.0);
    let trace: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let ratio = if trace > 0.0 { lmax / trace } else { 1.0 };
    RankOne { vector: vecs.column(n - 1).into_owned() * C64::new(lmax.sqrt(), 0.0), ratio }
}

/// Passive rank-one recovery: the factor normalized so its trailing entry is
/// one, mapped to a valid energy split.
pub fn extract_passive(v_matrix: &CMatrix, elements: &[usize]) -> Result<(StarBeamMatrix, f64)> {
    let r = extract_rank_one(v_matrix);
    Ok((coefficients_to_beams(&r.vector, elements)?, r.ratio))
}

fn coefficients_to_beams(v: &CVector, elements: &[usize]) -> Result<StarBeamMatrix> {
    let d = v.len();
    let last = v[d - 1];
    let scaled = if last.norm() > 1e-300 { v.rows(0, d - 1) / last } else { v.rows(0, d - 1).into_owned() };
    StarBeamMatrix::from_coefficient_vector(elements, &scaled)
}

/// Everything that stays fixed while beams are optimized.
#[derive(Debug, Clone, Copy)]
pub struct BeamProblem<'a> {
    pub channels: &'a ChannelState,
    pub adjacency: &'a AdjacencyIndicators,
    pub p_max: f64,
    pub r_min: f64,
}

/// Sum rate of a state after refreshing the decoding order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub xi: f64,
    pub report: RateReport,
    pub assignment: AssignmentState,
}

impl BeamProblem<'_> {
    pub fn noise(&self) -> f64 {
        self.channels.noise_power
    }

    pub fn combined(&self, star: &StarBeamMatrix) -> CombinedChannel {
        combined_channel(self.channels, self.adjacency, star)
    }

    pub fn evaluate_with(&self, h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState) -> Evaluation {
        let mut a = assignment.clone();
        apply_decoding_order(h, &mut a, beams, self.noise());
        let report = rate_report(h, &a, beams, self.noise());
        Evaluation { xi: report.sum_rate, report, assignment: a }
    }

    pub fn evaluate(&self, assignment: &AssignmentState, beams: &BeamformingState) -> Evaluation {
        self.evaluate_with(&self.combined(&beams.star), assignment, beams)
    }
}

/// MRT toward each cluster's strongest member with `P_max / K_b` each; empty
/// clusters get a zero beam.
pub fn mrt_initial_omega(h: &CombinedChannel, assignment: &AssignmentState, antennas: &[usize], p_max: f64) -> Vec<Vec<CVector>> {
    assignment
        .clusters
        .iter()
        .enumerate()
        .map(|(b, ap)| {
            let share = p_max / ap.len().max(1) as f64;
            ap.iter()
                .map(|members| if members.is_empty() { CVector::zeros(antennas[b]) } else { mrt_beam(&h[b], members, antennas[b], share) })
                .collect()
        })
        .collect()
}

/// `ω(0)` by MRT at equal power, `Φ(0)` with an even split and random phases.
pub fn initial_beams(problem: &BeamProblem, assignment: &AssignmentState, rng: &mut RandomStream) -> BeamformingState {
    let elements: Vec<usize> = (0..problem.channels.n_panels()).map(|l| problem.channels.elements(l)).collect();
    let star = StarBeamMatrix::random_phases(&elements, rng);
    let h = problem.combined(&star);
    let antennas: Vec<usize> = (0..problem.channels.n_aps()).map(|b| problem.channels.antennas(b)).collect();
    BeamformingState { omega: mrt_initial_omega(&h, assignment, &antennas, problem.p_max), star }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop when the sum rate changes by at most this much (bits/s/Hz).
    pub epsilon: f64,
    pub max_outer: usize,
    pub solver: SolverOptions,
    /// Gaussian randomization kicks in below this rank-one ratio.
    pub randomization_threshold: f64,
    pub randomization_samples: usize,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_outer: 50, solver: SolverOptions::default(), randomization_threshold: 0.9, randomization_samples: 50 }
    }
}

/// Result of one convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemOutcome {
    pub beams: BeamformingState,
    pub slack: SlackState,
    /// Sum of rate bounds at the returned lifted point (bits/s/Hz).
    pub objective: f64,
    /// Same bound at the expansion point, i.e. the true sum rate there.
    pub expansion_objective: f64,
    /// Worst solver status over the solves involved.
    pub status: Status,
    /// Smallest rank-one ratio among the lifted matrices.
    pub rank_one_ratio: f64,
    pub randomized: bool,
    /// Some solve was infeasible (e.g. an unreachable rate floor); the
    /// affected beams were left at the expansion point.
    pub infeasible: bool,
}

fn worse(a: Status, b: Status) -> Status {
    match (a, b) {
        (Status::Infeasible, _) | (_, Status::Infeasible) => Status::Infeasible,
        (Status::MaxIter, _) | (_, Status::MaxIter) => Status::MaxIter,
        _ => Status::Optimal,
    }
}

/// Rate terms of AP `b` for the active step, blocks indexed by the position
/// of each nonempty cluster in `blocks`.
fn active_terms(h: &CombinedChannel, assignment: &AssignmentState, beams: &BeamformingState, b: usize, scale: f64, noise: f64, blocks: &[usize]) -> Vec<RateTerm> {
    let p_b = power_coefficient(assignment, b).value;
    let slack = SlackState::from_state(h, assignment, beams, noise);
    let mut terms = Vec::new();
    for (bi, &k) in blocks.iter().enumerate() {
        let members = &assignment.clusters[b][k];
        for (pos, &u) in members.iter().enumerate() {
            let entry = slack.entries.iter().find(|e| e.ue == u).expect("slack for every member");
            if !(entry.zeta.is_finite() && entry.zeta > 0.0) {
                continue;
            }
            let hq = &h[b][u] * C64::new(scale, 0.0);
            let later = (members.len() - pos - 1) as f64;
            let mut interference = Vec::new();
            if later > 0.0 {
                interference.push(QuadTerm { block: bi, q: hq.clone(), weight: p_b * later });
            }
            for (bj, &k2) in blocks.iter().enumerate() {
                if k2 != k {
                    interference.push(QuadTerm { block: bj, q: hq.clone(), weight: assignment.clusters[b][k2].len() as f64 });
                }
            }
            terms.push(RateTerm { ue: u, signal: vec![QuadTerm { block: bi, q: hq, weight: p_b }], interference, zeta_n: entry.zeta, eta_n: entry.eta });
        }
    }
    terms
}

fn floor_constraints<'a>(terms: &'a [RateTerm], r_min: f64) -> Vec<Constraint<'a>> {
    if r_min > 0.0 {
        terms.iter().map(|t| Constraint::less_eq(RateFloor { term: t, r_min })).collect()
    } else {
        Vec::new()
    }
}

fn sum_bound(terms: &[RateTerm], x: &Point) -> f64 {
    terms.iter().map(|t| t.lower_bound(x)).sum()
}

fn candidate_from_gaussian(vectors: &CMatrix, vals: &[f64], rng: &mut RandomStream) -> CVector {
    let n = vals.len();
    let mut z = CVector::zeros(n);
    for (k, &lam) in vals.iter().enumerate() {
        let w = rng.complex_normal() * lam.max(0.0).sqrt();
        z += vectors.column(k) * w;
    }
    z
}

/// Active step: per AP, maximize the sum of rate bounds over the
/// lifted beams `W_k` under the power budget, then recover rank-one beams.
pub fn active_subproblem(problem: &BeamProblem, assignment: &AssignmentState, beams: &BeamformingState, options: &ScaOptions, rng: &mut RandomStream) -> SubproblemOutcome {
    let noise = problem.noise();
    let h = problem.combined(&beams.star);
    let scale = problem.p_max.sqrt() / noise.sqrt();
    let to_norm = C64::new(1.0 / problem.p_max.sqrt(), 0.0);
    let to_phys = C64::new(problem.p_max.sqrt(), 0.0);
    let mut omega = beams.omega.clone();
    let mut status = Status::Optimal;
    let mut ratio: f64 = 1.0;
    let mut randomized = false;
    let mut infeasible = false;
    let mut objective = 0.0;
    let mut expansion_objective = 0.0;

    for b in 0..assignment.n_aps() {
        let blocks: Vec<usize> = (0..assignment.clusters[b].len()).filter(|&k| !assignment.clusters[b][k].is_empty()).collect();
        if blocks.is_empty() {
            continue;
        }
        let terms = active_terms(&h, assignment, beams, b, scale, noise, &blocks);
        let n_b = problem.channels.antennas(b);
        let layout = Layout { matrix_dims: vec![n_b; blocks.len()], psd: vec![true; blocks.len()], n_scalars: 0 };
        let cvx = ConvexProblem {
            layout: layout.clone(),
            scalar_bounds: vec![],
            trace_budgets: vec![TraceBudget { blocks: (0..blocks.len()).collect(), cap: 1.0, exact: false }],
            objective: Box::new(NegSumRate(&terms)),
            constraints: floor_constraints(&terms, problem.r_min),
        };
        let x0 = Point { mats: blocks.iter().map(|&k| outer(&(&beams.omega[b][k] * to_norm))).collect(), scalars: vec![] };
        let start = sum_bound(&terms, &x0);
        expansion_objective += start;
        let sol = convex::solve(&cvx, x0, &options.solver);
        status = worse(status, sol.status);
        if sol.status == Status::Infeasible {
            infeasible = true;
            objective += start;
            continue;
        }
        objective += sum_bound(&terms, &sol.x);

        let factors: Vec<RankOne> = sol.x.mats.iter().map(extract_rank_one).collect();
        let ap_ratio = factors.iter().map(|f| f.ratio).fold(1.0, f64::min);
        ratio = ratio.min(ap_ratio);
        let principal: Vec<CVector> = factors.into_iter().map(|f| f.vector * to_phys).collect();
        let mut chosen = principal.clone();
        if ap_ratio < options.randomization_threshold {
            randomized = true;
            let decomps: Vec<(Vec<f64>, CMatrix)> = sol.x.mats.iter().map(hermitian_eigen).collect();
            let traces: Vec<f64> = sol.x.mats.iter().map(|m| m.trace().re.max(0.0)).collect();
            let ap_rate = |cand: &[CVector]| {
                let mut trial = beams.clone();
                trial.omega = omega.clone();
                for (&k, w) in blocks.iter().zip(cand) {
                    trial.omega[b][k] = w.clone();
                }
                let ev = problem.evaluate_with(&h, assignment, &trial);
                ev.report.entries.iter().filter(|e| e.ap == b).map(|e| e.rate).sum::<f64>()
            };
            let mut best = ap_rate(&principal);
            for _ in 0..options.randomization_samples {
                let cand: Vec<CVector> = decomps
                    .iter()
                    .zip(&traces)
                    .map(|((vals, vecs), &tr)| {
                        let z = candidate_from_gaussian(vecs, vals, rng);
                        let nz = z.norm();
                        if nz > 0.0 {
                            z * C64::new(tr.sqrt() / nz * problem.p_max.sqrt(), 0.0)
                        } else {
                            z
                        }
                    })
                    .collect();
                let r = ap_rate(&cand);
                if r > best {
                    best = r;
                    chosen = cand;
                }
            }
        }
        for (&k, w) in blocks.iter().zip(chosen) {
            omega[b][k] = w;
        }
    }

    let out = BeamformingState { omega, star: beams.star.clone() };
    let slack = SlackState::from_state(&h, assignment, &out, noise);
    SubproblemOutcome { beams: out, slack, objective, expansion_objective, status, rank_one_ratio: ratio, randomized, infeasible }
}

/// Rate terms for the passive step over the joint lifted matrix (block 0).
fn passive_terms(problem: &BeamProblem, assignment: &AssignmentState, beams: &BeamformingState, h: &CombinedChannel) -> Vec<RateTerm> {
    let noise = problem.noise();
    let inv_sigma = C64::new(1.0 / noise.sqrt(), 0.0);
    let slack = SlackState::from_state(h, assignment, beams, noise);
    let mut terms = Vec::new();
    for (b, ap) in assignment.clusters.iter().enumerate() {
        let p_b = power_coefficient(assignment, b).value;
        for (k, members) in ap.iter().enumerate() {
            for (pos, &u) in members.iter().enumerate() {
                let entry = slack.entries.iter().find(|e| e.ue == u).expect("slack for every member");
                if !(entry.zeta.is_finite() && entry.zeta > 0.0) {
                    continue;
                }
                let (d, cols) = passive_decomposition(problem.channels, problem.adjacency, b, u);
                let q_for = |w: &CVector| {
                    let head = cols.adjoint() * w;
                    let mut q = CVector::zeros(head.len() + 1);
                    q.rows_mut(0, head.len()).copy_from(&head);
                    q[head.len()] = d.dotc(w);
                    q * inv_sigma
                };
                let q_own = q_for(&beams.omega[b][k]);
                let later = (members.len() - pos - 1) as f64;
                let mut interference = Vec::new();
                if later > 0.0 {
                    interference.push(QuadTerm { block: 0, q: q_own.clone(), weight: p_b * later });
                }
                for (k2, other) in ap.iter().enumerate() {
                    if k2 != k && !other.is_empty() {
                        interference.push(QuadTerm { block: 0, q: q_for(&beams.omega[b][k2]), weight: other.len() as f64 });
                    }
                }
                terms.push(RateTerm { ue: u, signal: vec![QuadTerm { block: 0, q: q_own, weight: p_b }], interference, zeta_n: entry.zeta, eta_n: entry.eta });
            }
        }
    }
    terms
}

/// Passive step: semidefinite relaxation over the joint lifted
/// matrix of all panel coefficients with the energy split and the
/// homogenizing entry pinned, then rank-one recovery.
pub fn passive_subproblem(problem: &BeamProblem, assignment: &AssignmentState, beams: &BeamformingState, options: &ScaOptions, rng: &mut RandomStream) -> SubproblemOutcome {
    let noise = problem.noise();
    let h = problem.combined(&beams.star);
    let elements = beams.star.element_counts();
    let total: usize = elements.iter().sum();
    let expansion_slack = SlackState::from_state(&h, assignment, beams, noise);
    if total == 0 {
        let xi = expansion_slack.implied_sum_rate();
        return SubproblemOutcome {
            beams: beams.clone(),
            slack: expansion_slack,
            objective: xi,
            expansion_objective: xi,
            status: Status::Optimal,
            rank_one_ratio: 1.0,
            randomized: false,
            infeasible: false,
        };
    }
    let dim = 2 * total + 1;
    let terms = passive_terms(problem, assignment, beams, &h);

    let mut constraints = floor_constraints(&terms, problem.r_min);
    let mut offset = 0;
    for &m in &elements {
        for e in 0..m {
            constraints.push(Constraint::equal(Affine::new(
                vec![
                    LinearTerm::Diagonal { block: 0, index: offset + e, coeff: 1.0 },
                    LinearTerm::Diagonal { block: 0, index: offset + m + e, coeff: 1.0 },
                ],
                -1.0,
            )));
        }
        offset += 2 * m;
    }
    constraints.push(Constraint::equal(Affine::new(vec![LinearTerm::Diagonal { block: 0, index: dim - 1, coeff: 1.0 }], -1.0)));
    let cvx = ConvexProblem {
        layout: Layout { matrix_dims: vec![dim], psd: vec![true], n_scalars: 0 },
        scalar_bounds: vec![],
        trace_budgets: vec![TraceBudget { blocks: vec![0], cap: (total + 1) as f64, exact: true }],
        objective: Box::new(NegSumRate(&terms)),
        constraints,
    };
    let mut v0 = CVector::zeros(dim);
    v0.rows_mut(0, dim - 1).copy_from(&beams.star.coefficient_vector());
    v0[dim - 1] = C64::new(1.0, 0.0);
    let x0 = Point { mats: vec![outer(&v0)], scalars: vec![] };
    let start = sum_bound(&terms, &x0);
    let sol = convex::solve(&cvx, x0, &options.solver);
    if sol.status == Status::Infeasible {
        return SubproblemOutcome {
            beams: beams.clone(),
            slack: expansion_slack,
            objective: start,
            expansion_objective: start,
            status: Status::Infeasible,
            rank_one_ratio: 1.0,
            randomized: false,
            infeasible: true,
        };
    }
    let objective = sum_bound(&terms, &sol.x);
    let principal = extract_rank_one(&sol.x.mats[0]);
    let ratio = principal.ratio;
    let mut star = coefficients_to_beams(&principal.vector, &elements).unwrap_or_else(|_| beams.star.clone());
    let mut randomized = false;
    if ratio < options.randomization_threshold {
        randomized = true;
        let (vals, vecs) = hermitian_eigen(&sol.x.mats[0]);
        let rate_of = |s: &StarBeamMatrix| {
            let trial = BeamformingState { omega: beams.omega.clone(), star: s.clone() };
            problem.evaluate(assignment, &trial).xi
        };
        let mut best = rate_of(&star);
        for _ in 0..options.randomization_samples {
            let z = candidate_from_gaussian(&vecs, &vals, rng);
            if let Ok(cand) = coefficients_to_beams(&z, &elements) {
                let r = rate_of(&cand);
                if r > best {
                    best = r;
                    star = cand;
                }
            }
        }
    }
    let out = BeamformingState { omega: beams.omega.clone(), star };
    let h_out = problem.combined(&out.star);
    let slack = SlackState::from_state(&h_out, assignment, &out, noise);
    SubproblemOutcome { beams: out, slack, objective, expansion_objective: start, status: sol.status, rank_one_ratio: ratio, randomized, infeasible: false }
}

/// One outer SCA iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaIteration {
    pub iteration: usize,
    /// Sum rate after this iteration.
    pub xi: f64,
    pub active_status: Status,
    pub passive_status: Status,
    pub active_rank_one: f64,
    pub passive_rank_one: f64,
    /// Whether each step's candidate was kept (it must not lower the sum rate).
    pub active_committed: bool,
    pub passive_committed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub beams: BeamformingState,
    /// Decoding order refreshed for the returned beams.
    pub assignment: AssignmentState,
    pub xi: f64,
    /// Sum rate of the initialization.
    pub initial_xi: f64,
    pub trace: Vec<ScaIteration>,
    pub converged: bool,
}

impl ScaOutcome {
    /// Initial sum rate followed by the sum rate after every iteration.
    pub fn xi_sequence(&self) -> Vec<f64> {
        core::iter::once(self.initial_xi).chain(self.trace.iter().map(|t| t.xi)).collect()
    }
}

/// Alternates active and passive steps until the sum rate changes by at most
/// `ε` or `max_outer` iterations ran. A sweep runs only while the last change
/// exceeds `ε`, where the objective before initialization counts as zero. A
/// step's candidate is committed only if it does not lower the sum rate, so
/// the recorded sequence never decreases.
pub fn sca_optimize(problem: &BeamProblem, assignment: &AssignmentState, beams: &BeamformingState, options: &ScaOptions, rng: &mut RandomStream) -> Result<ScaOutcome> {
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("SCA epsilon must be positive, got {}", options.epsilon)));
    }
    beams.check_power(problem.p_max, 1e-9 * problem.p_max)?;
    let mut current = beams.clone();
    let mut ev = problem.evaluate(assignment, &current);
    let initial_xi = ev.xi;
    let mut trace = Vec::new();
    let mut previous = 0.0;
    let mut converged = (ev.xi - previous).abs() <= options.epsilon;
    let mut iteration = 0;
    while !converged && iteration < options.max_outer {
        iteration += 1;
        previous = ev.xi;

        let act = active_subproblem(problem, &ev.assignment, &current, options, rng);
        let cand = problem.evaluate(&ev.assignment, &act.beams);
        let active_committed = cand.xi >= ev.xi;
        if active_committed {
            current = act.beams;
            ev = cand;
        }

        let pas = passive_subproblem(problem, &ev.assignment, &current, options, rng);
        let cand = problem.evaluate(&ev.assignment, &pas.beams);
        let passive_committed = cand.xi >= ev.xi;
        if passive_committed {
            current = pas.beams;
            ev = cand;
        }

        trace.push(ScaIteration {
            iteration,
            xi: ev.xi,
            active_status: act.status,
            passive_status: pas.status,
            active_rank_one: act.rank_one_ratio,
            passive_rank_one: pas.rank_one_ratio,
            active_committed,
            passive_committed,
        });
        converged = (ev.xi - previous).abs() <= options.epsilon;
    }
    Ok(ScaOutcome { beams: current, assignment: ev.assignment, xi: ev.xi, initial_xi, trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{wrap_phase, PanelBeams};
    use core::f64::consts::{PI, TAU};

    #[test]
    fn taylor_at_expansion_point() {
        let v = taylor_lower_bound(0.7, 1.3, 0.7, 1.3).unwrap();
        assert!((v - (1.0 + 1.0 / (0.7 * 1.3f64)).log2()).abs() < 1e-15);
    }

    #[test]
    fn taylor_hand_value() {
        let v = taylor_lower_bound(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (1.0 - LOG2_E / 2.0)).abs() < 1e-12);
        assert!((v - 0.2787).abs() < 1e-4);
    }

    #[test]
    fn taylor_rejects_nonpositive() {
        assert_eq!(taylor_lower_bound(0.0, 1.0, 1.0, 1.0), Err(Error::NonPositive("zeta")));
        assert_eq!(taylor_lower_bound(1.0, 1.0, 1.0, -1.0), Err(Error::NonPositive("eta_n")));
    }

    #[test]
    fn rank_one_examples() {
        let v = CVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3), C64::new(0.0, 1.0)]);
        let r = extract_rank_one(&outer(&v));
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert!((r.vector.dotc(&v).norm() - v.norm_squared()).abs() < 1e-9);
        let id = extract_rank_one(&CMatrix::identity(4, 4));
        assert!((id.ratio - 0.25).abs() < 1e-12);
    }

    fn single_link(direct: Option<C64>, n_elements: usize, g: C64, glu: C64, forward: bool) -> (ChannelState, AdjacencyIndicators) {
        let ch = ChannelState {
            h_direct: vec![vec![CVector::from_element(1, direct.unwrap_or(C64::new(0.0, 0.0)))]],
            g_ap_ris: vec![vec![CMatrix::from_element(1, n_elements, g)]],
            g_ris_ue: vec![vec![CVector::from_element(n_elements, glu)]],
            kappa: 1.0,
            noise_power: 1.0,
            clamp_warnings: 0,
        };
        let adj = AdjacencyIndicators {
            ap_ue: vec![vec![direct.is_some()]],
            ap_ris: vec![vec![true]],
            ris_forward: vec![vec![forward]],
            ris_backward: vec![vec![!forward]],
        };
        (ch, adj)
    }

    fn one_ue() -> AssignmentState {
        AssignmentState::new(1, vec![vec![vec![0]]]).unwrap()
    }

    #[test]
    fn active_mrt_single_ue() {
        let h = CVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.05, -0.4)]);
        let ch = ChannelState { h_direct: vec![vec![h.clone()]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: 0.01, clamp_warnings: 0 };
        let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 2.0, r_min: 0.0 };
        let beams = BeamformingState {
            omega: vec![vec![CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, 0.5), C64::new(0.1, 0.1)])]],
            star: StarBeamMatrix { panels: vec![] },
        };
        let mut rng = crate::seeded_rng(0);
        let out = active_subproblem(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut rng);
        let analytic = (1.0 + 2.0 * h.norm_squared() / 0.01).log2();
        let got = problem.evaluate(&one_ue(), &out.beams).xi;
        assert!((got - analytic).abs() <= 0.01 * analytic);
        assert!(out.objective >= out.expansion_objective);
        assert!((out.beams.power(0) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn active_fixed_point() {
        let h = CVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5)]);
        let ch = ChannelState { h_direct: vec![vec![h.clone()]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: 0.1, clamp_warnings: 0 };
        let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 0.0 };
        let mrt = &h * C64::new(1.0 / h.norm(), 0.0);
        let beams = BeamformingState { omega: vec![vec![mrt]], star: StarBeamMatrix { panels: vec![] } };
        let out = active_subproblem(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut crate::seeded_rng(0));
        assert!((out.objective - out.expansion_objective).abs() <= 1e-5 * out.expansion_objective);
    }

    #[test]
    fn active_unreachable_floor_flagged() {
        let h = CVector::from_vec(vec![C64::new(0.3, 0.1)]);
        let ch = ChannelState { h_direct: vec![vec![h]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: 0.1, clamp_warnings: 0 };
        let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 1e3 };
        let beams = BeamformingState { omega: vec![vec![CVector::from_element(1, C64::new(0.5, 0.0))]], star: StarBeamMatrix { panels: vec![] } };
        let out = active_subproblem(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut crate::seeded_rng(0));
        assert!(out.infeasible);
        assert_eq!(out.status, Status::Infeasible);
        assert_eq!(out.beams, beams);
    }

    fn star(beta_f: f64, theta: f64) -> StarBeamMatrix {
        StarBeamMatrix::new(vec![PanelBeams { beta_f: vec![beta_f], theta_f: vec![theta], theta_b: vec![theta] }]).unwrap()
    }

    fn unit_beam() -> Vec<Vec<CVector>> {
        vec![vec![CVector::from_element(1, C64::new(1.0, 0.0))]]
    }

    #[test]
    fn passive_ris_only_is_phase_invariant() {
        let (ch, adj) = single_link(None, 1, C64::new(0.8, 0.1), C64::new(0.2, -0.7), true);
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 0.0 };
        let rates: Vec<f64> = (0..8)
            .map(|i| problem.evaluate(&one_ue(), &BeamformingState { omega: unit_beam(), star: star(1.0, i as f64 * 0.7) }).xi)
            .collect();
        assert!(rates.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        let beams = BeamformingState { omega: unit_beam(), star: star(0.5, 1.0) };
        let out = passive_subproblem(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut crate::seeded_rng(0));
        let got = problem.evaluate(&one_ue(), &out.beams).xi;
        assert!(got >= rates[0] - 1e-4 * rates[0]);
        assert!(out.beams.star.panels[0].beta_f[0] > 0.99);
    }

    #[test]
    fn passive_aligns_with_direct_path() {
        let (ch, adj) = single_link(Some(C64::from_polar(0.6, 1.1)), 1, C64::from_polar(0.9, -0.4), C64::from_polar(0.5, 2.0), true);
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 0.0 };
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..360 {
            let theta = i as f64 * TAU / 360.0;
            let xi = problem.evaluate(&one_ue(), &BeamformingState { omega: unit_beam(), star: star(1.0, theta) }).xi;
            if xi > best.0 {
                best = (xi, theta);
            }
        }
        let beams = BeamformingState { omega: unit_beam(), star: star(0.5, 0.0) };
        let out = passive_subproblem(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut crate::seeded_rng(0));
        let theta = out.beams.star.panels[0].theta_f[0];
        let diff = wrap_phase(theta - best.1);
        let diff = diff.min(TAU - diff);
        assert!(diff <= 2.0 * PI / 180.0, "theta {theta} grid {}", best.1);
    }

    #[test]
    fn passive_forward_users_take_all_energy() {
        let (ch, adj) = single_link(Some(C64::from_polar(0.3, 0.2)), 3, C64::from_polar(0.9, -0.4), C64::from_polar(0.5, 2.0), true);
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 0.0 };
        let beams = BeamformingState {
            omega: unit_beam(),
            star: StarBeamMatrix::new(vec![PanelBeams { beta_f: vec![0.5; 3], theta_f: vec![0.3, 1.0, 2.0], theta_b: vec![0.0; 3] }]).unwrap(),
        };
        let mut state = beams;
        for _ in 0..3 {
            state = passive_subproblem(&problem, &one_ue(), &state, &ScaOptions::default(), &mut crate::seeded_rng(0)).beams;
        }
        for &b in &state.star.panels[0].beta_f {
            assert!(b > 0.99, "beta_f {b}");
        }
    }

    #[test]
    fn sca_converges_to_mrt() {
        let h = CVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5)]);
        let ch = ChannelState { h_direct: vec![vec![h.clone()]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: 0.05, clamp_warnings: 0 };
        let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.5, r_min: 0.0 };
        let beams = BeamformingState { omega: vec![vec![CVector::from_element(2, C64::new(0.5, 0.0))]], star: StarBeamMatrix { panels: vec![] } };
        let out = sca_optimize(&problem, &one_ue(), &beams, &ScaOptions::default(), &mut crate::seeded_rng(0)).unwrap();
        let analytic = (1.0 + 1.5 * h.norm_squared() / 0.05).log2();
        assert!((out.xi - analytic).abs() <= 0.01 * analytic);
        assert!(out.trace.len() <= 5);
        assert!(out.converged);
    }

    #[test]
    fn sca_huge_epsilon_returns_initialization() {
        let h = CVector::from_vec(vec![C64::new(0.3, 0.1)]);
        let ch = ChannelState { h_direct: vec![vec![h]], g_ap_ris: vec![vec![]], g_ris_ue: vec![], kappa: 1.0, noise_power: 0.05, clamp_warnings: 0 };
        let adj = AdjacencyIndicators { ap_ue: vec![vec![true]], ap_ris: vec![vec![]], ris_forward: vec![], ris_backward: vec![] };
        let problem = BeamProblem { channels: &ch, adjacency: &adj, p_max: 1.0, r_min: 0.0 };
        let beams = BeamformingState { omega: vec![vec![CVector::from_element(1, C64::new(0.1, 0.0))]], star: StarBeamMatrix { panels: vec![] } };
        let opts = ScaOptions { epsilon: 1e9, ..ScaOptions::default() };
        let out = sca_optimize(&problem, &one_ue(), &beams, &opts, &mut crate::seeded_rng(0)).unwrap();
        assert_eq!(out.beams, beams);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn slack_matches_definitions() {
        let h = vec![vec![CVector::from_element(1, C64::new(1.0, 0.0)), CVector::from_element(1, C64::new(2.0, 0.0))]];
        let a = AssignmentState::new(2, vec![vec![vec![0, 1]]]).unwrap();
        let beams = BeamformingState { omega: vec![vec![CVector::from_element(1, C64::new(1.0, 0.0))]], star: StarBeamMatrix { panels: vec![] } };
        let s = SlackState::from_state(&h, &a, &beams, 0.5);
        // UE0: X = 1 * 0.5 / 0.5 = 1, intra = 1*0.5*1 -> eta = 0.5/0.5 + 1 = 2
        assert_eq!(s.entries[0].zeta, 1.0);
        assert_eq!(s.entries[0].eta, 2.0);
        let report = rate_report(&h, &a, &beams, 0.5);
        assert!((s.implied_sum_rate() - report.sum_rate).abs() < 1e-12);
    }
}
