//! First-order solver for small convex programs over Hermitian matrix and
//! scalar variables.
//!
//! The solver minimizes a smooth convex objective subject to smooth convex
//! inequalities `g(x) <= 0` and affine equalities `h(x) = 0`. PSD cones,
//! trace budgets and scalar boxes are handled by projection; everything else
//! goes through an augmented Lagrangian whose subproblems are solved by
//! monotone accelerated projected gradient with backtracking. Maximization
//! problems negate their objective.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{from_eigen, frob_inner, hermitian_eigen, hermitian_part, project_capped_simplex, project_simplex, CMatrix};
use crate::C64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// A point in the product space of matrix blocks and scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub mats: Vec<CMatrix>,
    pub scalars: Vec<f64>,
}

impl Point {
    pub fn zeros(layout: &Layout) -> Self {
        Self { mats: layout.matrix_dims.iter().map(|&n| CMatrix::zeros(n, n)).collect(), scalars: vec![0.0; layout.n_scalars] }
    }

    pub fn zeros_like(&self) -> Self {
        Self { mats: self.mats.iter().map(|m| CMatrix::zeros(m.nrows(), m.ncols())).collect(), scalars: vec![0.0; self.scalars.len()] }
    }

    /// Real inner product `sum Re tr(A^H B) + s.t`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.mats.iter().zip(&other.mats).map(|(a, b)| frob_inner(a, b)).sum::<f64>()
            + self.scalars.iter().zip(&other.scalars).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        let ca = C64::new(a, 0.0);
        for (m, o) in self.mats.iter_mut().zip(&other.mats) {
            *m += o * ca;
        }
        for (s, o) in self.scalars.iter_mut().zip(&other.scalars) {
            *s += a * o;
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn scale(&mut self, a: f64) {
        let ca = C64::new(a, 0.0);
        self.mats.iter_mut().for_each(|m| *m *= ca);
        self.scalars.iter_mut().for_each(|s| *s *= a);
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|c| c.re.is_finite() && c.im.is_finite())) && self.scalars.iter().all(|s| s.is_finite())
    }
}

/// Differentiable real function of a [`Point`]. For a matrix block `X` the
/// gradient `G` is Hermitian with `df = Re tr(G dX)`.
pub trait SmoothFunction {
    /// May return `+inf` outside the function's domain.
    fn value(&self, x: &Point) -> f64;
    /// `out += weight * grad(x)`.
    fn add_gradient(&self, x: &Point, weight: f64, out: &mut Point);
}

/// One term of an affine function.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearTerm {
    /// `Re tr(C X_block)` for Hermitian `C`.
    Matrix { block: usize, coeff: CMatrix },
    /// `coeff * X_block[i, i]`.
    Diagonal { block: usize, index: usize, coeff: f64 },
    /// `coeff * s_i`.
    Scalar { index: usize, coeff: f64 },
}

/// `constant + sum of terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub terms: Vec<LinearTerm>,
    pub constant: f64,
}

impl Affine {
    pub fn new(terms: Vec<LinearTerm>, constant: f64) -> Self {
        Self { terms, constant }
    }

    /// `sign * (tr(X_block) - rhs)`.
    pub fn trace(block: usize, dim: usize, sign: f64, rhs: f64) -> Self {
        Self::new((0..dim).map(|i| LinearTerm::Diagonal { block, index: i, coeff: sign }).collect(), -sign * rhs)
    }
}

impl SmoothFunction for Affine {
    fn value(&self, x: &Point) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| match t {
                    LinearTerm::Matrix { block, coeff } => frob_inner(coeff, &x.mats[*block]),
                    LinearTerm::Diagonal { block, index, coeff } => coeff * x.mats[*block][(*index, *index)].re,
                    LinearTerm::Scalar { index, coeff } => coeff * x.scalars[*index],
                })
                .sum::<f64>()
    }

    fn add_gradient(&self, _x: &Point, weight: f64, out: &mut Point) {
        for t in &self.terms {
            match t {
                LinearTerm::Matrix { block, coeff } => out.mats[*block] += coeff * C64::new(weight, 0.0),
                LinearTerm::Diagonal { block, index, coeff } => out.mats[*block][(*index, *index)] += C64::new(weight * coeff, 0.0),
                LinearTerm::Scalar { index, coeff } => out.scalars[*index] += weight * coeff,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `f(x) <= 0`, `f` convex.
    LessEq,
    /// `f(x) = 0`, `f` affine.
    Equal,
}

pub struct Constraint<'a> {
    pub kind: ConstraintKind,
    pub f: Box<dyn SmoothFunction + 'a>,
}

impl<'a> Constraint<'a> {
    pub fn less_eq(f: impl SmoothFunction + 'a) -> Self {
        Self { kind: ConstraintKind::LessEq, f: Box::new(f) }
    }

    pub fn equal(f: impl SmoothFunction + 'a) -> Self {
        Self { kind: ConstraintKind::Equal, f: Box::new(f) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub matrix_dims: Vec<usize>,
    /// Per block: constrained to the PSD cone.
    pub psd: Vec<bool>,
    pub n_scalars: usize,
}

/// `sum_{blocks} tr(X) <= cap`, or `= cap` when `exact`. Blocks must be PSD
/// and may belong to at most one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBudget {
    pub blocks: Vec<usize>,
    pub cap: f64,
    pub exact: bool,
}

pub struct ConvexProblem<'a> {
    pub layout: Layout,
    /// Per scalar `(lo, hi)`; infinite bounds allowed.
    pub scalar_bounds: Vec<(f64, f64)>,
    pub trace_budgets: Vec<TraceBudget>,
    /// Minimized.
    pub objective: Box<dyn SmoothFunction + 'a>,
    pub constraints: Vec<Constraint<'a>>,
}

impl ConvexProblem<'_> {
    /// Euclidean projection onto the PSD, trace-budget and box constraints.
    pub fn project(&self, x: &mut Point) {
        for m in x.mats.iter_mut() {
            *m = hermitian_part(m);
        }
        let mut budgeted = vec![false; x.mats.len()];
        for tb in &self.trace_budgets {
            let decomp: Vec<(Vec<f64>, CMatrix)> = tb.blocks.iter().map(|&b| hermitian_eigen(&x.mats[b])).collect();
            let mut all: Vec<f64> = decomp.iter().flat_map(|(v, _)| v.iter().copied()).collect();
            if tb.exact {
                project_simplex(&mut all, tb.cap);
            } else {
                project_capped_simplex(&mut all, tb.cap);
            }
            let mut offset = 0;
            for (&b, (vals, vecs)) in tb.blocks.iter().zip(&decomp) {
                x.mats[b] = from_eigen(&all[offset..offset + vals.len()], vecs);
                offset += vals.len();
                budgeted[b] = true;
            }
        }
        for (b, m) in x.mats.iter_mut().enumerate() {
            if self.layout.psd[b] && !budgeted[b] {
                *m = psd_project(m);
            }
        }
        for (s, &(lo, hi)) in x.scalars.iter_mut().zip(&self.scalar_bounds) {
            *s = s.clamp(lo, hi);
        }
    }

    fn violation(&self, x: &Point) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let v = c.f.value(x);
                match c.kind {
                    ConstraintKind::LessEq => v.max(0.0),
                    ConstraintKind::Equal => v.abs(),
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped.
pub fn psd_project(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    from_eigen(&clipped, &vecs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Objective / stationarity tolerance.
    pub tol: f64,
    /// Absolute constraint-violation tolerance.
    pub feas_tol: f64,
    /// Budget of inner projected-gradient iterations.
    pub max_iter: usize,
    /// Outer rounds without violation progress before declaring infeasible.
    pub patience: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-5, feas_tol: 1e-6, max_iter: 5000, patience: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Point,
    /// Objective at `x` (as minimized).
    pub objective: f64,
    pub status: Status,
    /// Largest constraint violation at `x`.
    pub violation: f64,
    /// Norm of the last projected-gradient step, scaled by the step length.
    pub stationarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Augmented-Lagrangian value after every inner iteration, one list per
    /// outer round; each list is non-increasing.
    pub merit: Vec<Vec<f64>>,
}

struct Multipliers {
    lambda: Vec<f64>,
    rho: f64,
}

fn al_value(problem: &ConvexProblem, mult: &Multipliers, x: &Point) -> f64 {
    let f = problem.objective.value(x);
    if !f.is_finite() {
        return f64::INFINITY;
    }
    let rho = mult.rho;
    let mut total = f;
    for (c, &l) in problem.constraints.iter().zip(&mult.lambda) {
        let g = c.f.value(x);
        if !g.is_finite() {
            return f64::INFINITY;
        }
        total += match c.kind {
            ConstraintKind::LessEq => {
                let t = (l / rho + g).max(0.0);
                0.5 * rho * (t * t - (l / rho) * (l / rho))
            }
            ConstraintKind::Equal => l * g + 0.5 * rho * g * g,
        };
    }
    total
}

fn al_gradient(problem: &ConvexProblem, mult: &Multipliers, x: &Point) -> Point {
    let mut g = x.zeros_like();
    problem.objective.add_gradient(x, 1.0, &mut g);
    for (c, &l) in problem.constraints.iter().zip(&mult.lambda) {
        let v = c.f.value(x);
        let w = match c.kind {
            ConstraintKind::LessEq => (l + mult.rho * v).max(0.0),
            ConstraintKind::Equal => l + mult.rho * v,
        };
        if w != 0.0 {
            c.f.add_gradient(x, w, &mut g);
        }
    }
    for m in g.mats.iter_mut() {
        *m = hermitian_part(m);
    }
    g
}

struct InnerResult {
    x: Point,
    iterations: usize,
    stationarity: f64,
    step: f64,
    converged: bool,
}

/// Monotone FISTA with backtracking on the augmented Lagrangian.
fn inner_solve(problem: &ConvexProblem, mult: &Multipliers, x0: Point, eps: f64, budget: usize, step0: f64, merit: &mut Vec<f64>) -> InnerResult {
    let mut x = x0;
    let mut fx = al_value(problem, mult, &x);
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut lip = 1.0 / step0;
    let mut stationarity = f64::INFINITY;
    for it in 0..budget {
        let mut fy = al_value(problem, mult, &y);
        if !fy.is_finite() {
            y = x.clone();
            fy = fx;
            t = 1.0;
        }
        let grad = al_gradient(problem, mult, &y);
        let (z, fz) = loop {
            let mut z = y.clone();
            z.axpy(-1.0 / lip, &grad);
            problem.project(&mut z);
            let d = z.sub(&y);
            let fz = al_value(problem, mult, &z);
            let model = fy + grad.dot(&d) + 0.5 * lip * d.dot(&d);
            if fz.is_finite() && fz <= model + 1e-12 * fy.abs().max(1.0) {
                break (z, fz);
            }
            lip *= 2.0;
            if lip > 1e300 {
                break (y.clone(), fy);
            }
        };
        stationarity = z.sub(&y).norm() * lip;
        let t_next: f64 = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        merit.push(fx);
        // Momentum from the monotone iterate, with restart on failure.
        let mut y_next = x.clone();
        let coef_z = t / t_next;
        let coef_x = (t - 1.0) / t_next;
        let mut dz = z.sub(&x);
        dz.scale(coef_z);
        let mut dx = x.sub(&x_prev);
        dx.scale(coef_x);
        y_next.axpy(1.0, &dz);
        y_next.axpy(1.0, &dx);
        if fz > fx {
            y_next = x.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        y = y_next;
        lip = (lip / 1.2).max(1e-12);
        if stationarity <= eps {
            return InnerResult { x, iterations: it + 1, stationarity, step: 1.0 / lip, converged: true };
        }
    }
    InnerResult { x, iterations: budget, stationarity, step: 1.0 / lip, converged: false }
}

/// Solves `problem` from `x0` (projected first).
pub fn solve(problem: &ConvexProblem, x0: Point, options: &SolverOptions) -> Solution {
    let mut x = x0;
    problem.project(&mut x);
    let mut mult = Multipliers { lambda: vec![0.0; problem.constraints.len()], rho: 10.0 };
    let mut merit_log = Vec::new();
    let mut used = 0;
    let mut outer = 0;
    let mut step = 1.0;
    let mut prev_violation = problem.violation(&x);
    let mut best_violation = prev_violation;
    let mut stall = 0;
    let mut prev_objective = problem.objective.value(&x);
    let mut stationarity = f64::INFINITY;
    let mut eps = 1e-2_f64.max(options.tol);
    let status = loop {
        if used >= options.max_iter {
            break Status::MaxIter;
        }
        outer += 1;
        let mut merit = Vec::new();
        // Stationarity is judged relative to the size of the penalty weights.
        let scale = 1.0 + mult.lambda.iter().fold(0.0f64, |a, l| a.max(l.abs())) + mult.rho * prev_violation;
        let res = inner_solve(problem, &mult, x, eps * scale, options.max_iter - used, step, &mut merit);
        merit_log.push(merit);
        used += res.iterations;
        x = res.x;
        step = res.step;
        stationarity = res.stationarity;

        let violation = problem.violation(&x);
        let objective = problem.objective.value(&x);
        for (c, l) in problem.constraints.iter().zip(mult.lambda.iter_mut()) {
            let v = c.f.value(&x);
            *l = match c.kind {
                ConstraintKind::LessEq => (*l + mult.rho * v).max(0.0),
                ConstraintKind::Equal => *l + mult.rho * v,
            };
        }
        let settled = (objective - prev_objective).abs() <= options.tol * objective.abs().max(1.0);
        if violation <= options.feas_tol && res.converged && eps <= options.tol && settled {
            break Status::Optimal;
        }
        if violation > 0.25 * prev_violation && violation > options.feas_tol {
            mult.rho = (mult.rho * 10.0).min(1e10);
        }
        if violation < best_violation * (1.0 - 1e-3) || violation <= options.feas_tol {
            best_violation = best_violation.min(violation);
            stall = 0;
        } else if res.converged {
            stall += 1;
            if stall >= options.patience {
                break Status::Infeasible;
            }
        }
        prev_violation = violation;
        prev_objective = objective;
        eps = (eps * 0.1).max(options.tol);
    };
    let objective = problem.objective.value(&x);
    let violation = problem.violation(&x);
    Solution { x, objective, status, violation, stationarity, outer_iterations: outer, inner_iterations: used, merit: merit_log }
}
