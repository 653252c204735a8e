//! Exact solution of the encoded program by branch and bound over the
//! allocation variables, bounded by linear relaxations.
//!
//! Branching only touches `z`. Once a node fixes `z` values, selector
//! columns whose pattern contradicts them are bounded to zero, and a unit
//! whose whole neighborhood is fixed has its realized selector fixed to one.
//!
//! The relaxation solved at each node replaces the per-selector linking rows
//! with their aggregated form `sum_{j: e_jk = 1} h_ij = z_{N(i)_k}`, which
//! implies every linking row, and bounds to zero each selector whose pattern
//! alone violates a privilege row. Both are valid for every binary point of
//! the program, so node values remain upper bounds, and the privilege rows
//! become redundant.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolution, LpStatus, Simplex};
use crate::milp::{MilpProgram, Sense, INTEGRALITY_TOL};
use crate::problem::FEASIBILITY_TOL;
use crate::scalar::Scalar;

/// Relative tolerance under which two objective values count as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Most fractional `z`, ties to the lowest index.
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub abs_gap_tol: f64,
    pub node_limit: usize,
    pub time_limit_seconds: Option<f64>,
    pub branch_rule: BranchRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { abs_gap_tol: 1e-6, node_limit: 10_000_000, time_limit_seconds: None, branch_rule: BranchRule::MostFractional }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    LimitReached,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::LimitReached => "LimitReached",
        }
    }
}

/// Outcome of a solve. `z`, `objective` and `per_unit_gaps` are present when
/// an incumbent exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub status: SolveStatus,
    pub z: Option<Vec<bool>>,
    pub objective: Option<T>,
    /// Best proven upper bound (`-inf` when infeasible).
    pub bound: T,
    /// `per_unit_gaps[i][a]` at the incumbent.
    pub per_unit_gaps: Option<Vec<Vec<T>>>,
    pub nodes_explored: usize,
}

impl<T: Scalar> Solution<T> {
    pub fn budget_used(&self) -> Option<usize> {
        self.z.as_ref().map(|z| z.iter().filter(|&&b| b).count())
    }

    pub fn infeasible(nodes_explored: usize) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            z: None,
            objective: None,
            bound: T::neg_infinity(),
            per_unit_gaps: None,
            nodes_explored,
        }
    }
}

/// One explored node, as reported to observers.
#[derive(Debug, Clone)]
pub struct NodeEvent<'a, T> {
    pub id: usize,
    /// Relaxation value, `None` when the relaxation is infeasible.
    pub bound: Option<T>,
    pub incumbent: Option<T>,
    pub depth: usize,
    /// `(z index, value)` fixings that define the node.
    pub fixed: &'a [(usize, bool)],
}

impl<T: Scalar> NodeEvent<'_, T> {
    /// `node_id bound incumbent depth fixed_count`; missing values print as `-`.
    pub fn log_line(&self) -> String {
        let show = |v: Option<T>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        format!("{} {} {} {} {}", self.id, show(self.bound), show(self.incumbent), self.depth, self.fixed.len())
    }
}

fn program_bounds<T: Scalar>(program: &MilpProgram<T>, fixed: &[(usize, bool)]) -> Result<(Vec<T>, Vec<T>)> {
    let n = program.n_vars();
    let mut lower = vec![T::zero(); n];
    let mut upper = vec![T::one(); n];
    let mut seen = vec![false; n];
    for &(v, val) in fixed {
        if v >= n {
            return Err(Error::VariableCount { got: v + 1, expected: n });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::DuplicateFix(v));
        }
        let b = if val { T::one() } else { T::zero() };
        lower[v] = b;
        upper[v] = b;
    }
    Ok((lower, upper))
}

/// Linear relaxation of `program` exactly as encoded (binaries relaxed to
/// `[0, 1]`), with the given variables fixed.
pub fn solve_lp<T: Scalar>(program: &MilpProgram<T>, fixed: &[(usize, bool)]) -> Result<LpSolution<T>> {
    let (lower, upper) = program_bounds(program, fixed)?;
    let mut lp = LinearProgram::new(program.objective().to_vec(), lower, upper);
    for row in program.constraints() {
        lp.add_row(row.coeffs.clone(), row.sense, row.rhs);
    }
    crate::lp::solve(&lp)
}

/// Selectors whose pattern violates a privilege row on its own.
fn forbidden_patterns<T: Scalar>(program: &MilpProgram<T>) -> Vec<Vec<bool>> {
    let tau = program.tau();
    let tol = T::tolerance(FEASIBILITY_TOL);
    (0..program.n_units())
        .map(|i| {
            let table = program.gap_table(i);
            (0..program.pattern_count(i))
                .map(|j| tau.is_finite() && table.iter().any(|row| row[j] > tau + tol))
                .collect()
        })
        .collect()
}

/// Aggregated-linking relaxation used by the search.
fn search_relaxation<T: Scalar>(program: &MilpProgram<T>, forbidden: &[Vec<bool>]) -> LinearProgram<T> {
    let n_vars = program.n_vars();
    let mut upper = vec![T::one(); n_vars];
    for (i, row) in forbidden.iter().enumerate() {
        for (j, &f) in row.iter().enumerate() {
            if f {
                upper[program.h_index(i, j)] = T::zero();
            }
        }
    }
    let mut lp = LinearProgram::new(program.objective().to_vec(), vec![T::zero(); n_vars], upper);
    for i in 0..program.n_units() {
        let nb = program.neighbors(i);
        let d = nb.len();
        let count = program.pattern_count(i);
        for (slot, &z) in nb.iter().enumerate() {
            let mut coeffs: Vec<(usize, T)> = (0..count)
                .filter(|j| (j >> (d - 1 - slot)) & 1 == 1)
                .map(|j| (program.h_index(i, j), T::one()))
                .collect();
            coeffs.push((z, -T::one()));
            lp.add_row(coeffs, Sense::Eq, T::zero());
        }
        lp.add_row((0..count).map(|j| (program.h_index(i, j), T::one())).collect(), Sense::Eq, T::one());
    }
    lp.add_row(
        (0..program.n_units()).map(|i| (i, T::one())).collect(),
        Sense::Le,
        T::of(program.budget() as f64),
    );
    lp
}

struct Node<T> {
    id: usize,
    depth: usize,
    bound: T,
    fixed: Vec<(usize, bool)>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // max-heap: larger bound first, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent<T> {
    z: Vec<bool>,
    objective: T,
}

fn lex_less(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, _)| !*x)
}

/// Search state for one branch-and-bound run.
struct Search<'p, T> {
    program: &'p MilpProgram<T>,
    root_upper: Vec<T>,
    incumbent: Option<Incumbent<T>>,
    closed_bound: T,
    gap_tol: T,
}

impl<T: Scalar> Search<'_, T> {
    fn tie_tol(&self, value: T) -> T {
        T::tolerance(TIE_TOL) * value.abs().max(T::one())
    }

    fn lexmin(&self, fixed: &[(usize, bool)]) -> Vec<bool> {
        let mut z = vec![false; self.program.n_units()];
        for &(v, val) in fixed {
            z[v] = val;
        }
        z
    }

    /// Whether a node with this bound and fixings can still beat or
    /// lexicographically improve the incumbent.
    fn worth_exploring(&self, bound: T, fixed: &[(usize, bool)]) -> bool {
        let Some(inc) = &self.incumbent else {
            return true;
        };
        if bound > inc.objective + self.gap_tol {
            return true;
        }
        bound >= inc.objective - self.tie_tol(inc.objective) && lex_less(&self.lexmin(fixed), &inc.z)
    }

    fn apply_node(&self, lp: &mut Simplex<T>, fixed: &[(usize, bool)]) {
        let program = self.program;
        let n = program.n_units();
        let mut zfix: Vec<Option<bool>> = vec![None; n];
        for &(v, val) in fixed {
            zfix[v] = Some(val);
        }
        for (v, f) in zfix.iter().enumerate() {
            match f {
                Some(true) => lp.set_bounds(v, T::one(), T::one()),
                Some(false) => lp.set_bounds(v, T::zero(), T::zero()),
                None => lp.set_bounds(v, T::zero(), T::one()),
            }
        }
        for i in 0..n {
            let nb = program.neighbors(i);
            let d = nb.len();
            let all_fixed = nb.iter().all(|&j| zfix[j].is_some());
            for p in 0..program.pattern_count(i) {
                let h = program.h_index(i, p);
                let conflicts = nb.iter().enumerate().any(|(slot, &j)| {
                    zfix[j].is_some_and(|val| val != ((p >> (d - 1 - slot)) & 1 == 1))
                });
                let hi = if conflicts { T::zero() } else { self.root_upper[h] };
                let lo = if all_fixed && !conflicts && hi > T::zero() { T::one() } else { T::zero() };
                lp.set_bounds(h, lo, hi);
            }
        }
    }

    fn offer(&mut self, z: Vec<bool>) {
        let program = self.program;
        let tol = T::tolerance(FEASIBILITY_TOL);
        if z.iter().filter(|&&b| b).count() > program.budget() {
            return;
        }
        if program.tau().is_finite() && program.gaps_at(&z).iter().flatten().any(|&g| g > program.tau() + tol) {
            return;
        }
        let objective = program.objective_at(&z);
        let replace = match &self.incumbent {
            None => true,
            Some(inc) => {
                let tie = self.tie_tol(inc.objective);
                objective > inc.objective + tie || (objective >= inc.objective - tie && lex_less(&z, &inc.z))
            }
        };
        if replace {
            self.incumbent = Some(Incumbent { z, objective });
        }
    }
}

pub fn branch_and_bound<T: Scalar>(program: &MilpProgram<T>, config: &SolverConfig) -> Result<Solution<T>> {
    branch_and_bound_observed(program, config, &mut |_| {})
}

/// [`branch_and_bound`] reporting every explored node to `observer`.
pub fn branch_and_bound_observed<T: Scalar>(
    program: &MilpProgram<T>,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&NodeEvent<'_, T>),
) -> Result<Solution<T>> {
    if config.abs_gap_tol.is_nan() || config.abs_gap_tol < 0.0 {
        return Err(Error::InvalidProblem(format!("abs_gap_tol must be non-negative, got {}", config.abs_gap_tol)));
    }
    let started = Instant::now();
    let n = program.n_units();
    let forbidden = forbidden_patterns(program);
    let relaxation = search_relaxation(program, &forbidden);
    let root_upper = relaxation.upper.clone();
    let mut lp = Simplex::new(&relaxation)?;
    let mut search = Search {
        program,
        root_upper,
        incumbent: None,
        closed_bound: T::neg_infinity(),
        gap_tol: T::of(config.abs_gap_tol),
    };
    let int_tol = T::of(INTEGRALITY_TOL);

    let mut heap = BinaryHeap::new();
    heap.push(Node { id: 0, depth: 0, bound: T::infinity(), fixed: Vec::new() });
    let mut next_id = 1;
    let mut explored = 0usize;
    let mut limited = false;

    while let Some(node) = heap.pop() {
        if !search.worth_exploring(node.bound, &node.fixed) {
            search.closed_bound = search.closed_bound.max(node.bound);
            continue;
        }
        let over_time = config.time_limit_seconds.is_some_and(|t| started.elapsed().as_secs_f64() >= t);
        if explored >= config.node_limit || over_time {
            heap.push(node);
            limited = true;
            break;
        }
        explored += 1;

        search.apply_node(&mut lp, &node.fixed);
        let relaxed = if node.id == 0 { lp.solve()? } else { lp.reoptimize()? };
        let event_bound = (relaxed.status == LpStatus::Optimal).then_some(relaxed.objective);
        observer(&NodeEvent {
            id: node.id,
            bound: event_bound,
            incumbent: search.incumbent.as_ref().map(|inc| inc.objective),
            depth: node.depth,
            fixed: &node.fixed,
        });
        let Some(bound) = event_bound else {
            continue;
        };
        let bound = bound.min(node.bound);
        if !search.worth_exploring(bound, &node.fixed) {
            search.closed_bound = search.closed_bound.max(bound);
            continue;
        }

        let z_values = &relaxed.x[..n];
        let fixed_mask = {
            let mut mask = vec![false; n];
            for &(v, _) in &node.fixed {
                mask[v] = true;
            }
            mask
        };
        let fractional = z_values
            .iter()
            .enumerate()
            .filter(|(v, x)| !fixed_mask[*v] && x.min(T::one() - **x) > int_tol)
            .min_by(|a, b| {
                let da = (*a.1 - T::of(0.5)).abs();
                let db = (*b.1 - T::of(0.5)).abs();
                da.partial_cmp(&db).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
            })
            .map(|(v, _)| v);

        let branch_var = match fractional {
            Some(v) => Some(v),
            None => {
                let z: Vec<bool> = z_values.iter().map(|&x| x > T::of(0.5)).collect();
                search.offer(z.clone());
                search.closed_bound = search.closed_bound.max(bound);
                // a lexicographically smaller tie can only hide under a free z set to one
                (0..n).find(|&v| !fixed_mask[v] && z[v])
            }
        };
        if let Some(v) = branch_var {
            for val in [false, true] {
                let mut fixed = node.fixed.clone();
                fixed.push((v, val));
                heap.push(Node { id: next_id, depth: node.depth + 1, bound, fixed });
                next_id += 1;
            }
        }
    }

    let Some(inc) = search.incumbent.take() else {
        if limited {
            let open = heap.iter().map(|n| n.bound).fold(search.closed_bound, T::max);
            return Ok(Solution {
                status: SolveStatus::LimitReached,
                z: None,
                objective: None,
                bound: open,
                per_unit_gaps: None,
                nodes_explored: explored,
            });
        }
        return Ok(Solution::infeasible(explored));
    };
    let mut bound = search.closed_bound.max(inc.objective);
    if limited {
        bound = heap.iter().map(|n| n.bound).fold(bound, T::max);
    }
    let status = if limited && bound - inc.objective > search.gap_tol {
        SolveStatus::LimitReached
    } else {
        SolveStatus::Optimal
    };
    Ok(Solution {
        status,
        per_unit_gaps: Some(program.gaps_at(&inc.z)),
        objective: Some(inc.objective),
        z: Some(inc.z),
        bound,
        nodes_explored: explored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{brute_force, tau_bracket};
    use crate::milp::encode;
    use crate::synth::{additive_infeasible, housing, random_instance, RandomModel, RandomOptions};

    fn exact() -> SolverConfig {
        SolverConfig { abs_gap_tol: 0.0, ..SolverConfig::default() }
    }

    #[test]
    fn housing_treats_the_white_unit() {
        let p = housing(60.0, 80.0, false).unwrap().problem(f64::INFINITY).unwrap();
        let s = branch_and_bound(&encode(&p).unwrap(), &exact()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.z, Some(vec![false, true]));
        assert_eq!(s.objective, Some(290.0));
    }

    #[test]
    fn additive_threshold() {
        let inst = additive_infeasible(1).unwrap();
        for (tau, status) in [(0.5, SolveStatus::Infeasible), (0.99, SolveStatus::Infeasible), (1.0, SolveStatus::Optimal)] {
            let s = branch_and_bound(&encode(&inst.problem(tau).unwrap()).unwrap(), &exact()).unwrap();
            assert_eq!(s.status, status, "tau {tau}");
        }
    }

    #[test]
    fn agrees_with_enumeration() {
        for seed in 0..40u64 {
            let opts = RandomOptions {
                n: 6 + (seed % 5) as usize,
                k: 1 + (seed % 3) as usize,
                budget: 1 + (seed % 4) as usize,
                n_groups: 2 + (seed % 2) as usize,
                model: if seed % 2 == 0 { RandomModel::Linear } else { RandomModel::Max },
                include_self: seed % 5 != 0,
                tau: f64::INFINITY,
            };
            let inst = random_instance(seed, &opts).unwrap();
            let free = inst.problem(f64::INFINITY).unwrap();
            let bracket = tau_bracket(&free).unwrap();
            for tau in [f64::INFINITY, bracket.vacuous_from * 0.5, bracket.infeasible_below + 0.1] {
                if !(tau > 0.0) {
                    continue;
                }
                let p = free.with_tau(tau).unwrap();
                let want = brute_force(&p).unwrap();
                let got = branch_and_bound(&encode(&p).unwrap(), &exact()).unwrap();
                assert_eq!(got.status, want.status, "seed {seed} tau {tau}");
                assert_eq!(got.z, want.z, "seed {seed} tau {tau}");
                if let (Some(a), Some(b)) = (got.objective, want.objective) {
                    assert!((a - b).abs() <= 1e-9, "seed {seed}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn node_bounds_dominate_the_optimum() {
        let inst = random_instance(11, &RandomOptions { n: 10, budget: 3, ..RandomOptions::default() }).unwrap();
        let p = inst.problem(f64::INFINITY).unwrap();
        let optimum = brute_force(&p).unwrap().objective.unwrap();
        let mut root = None;
        let s = branch_and_bound_observed(&encode(&p).unwrap(), &exact(), &mut |e| {
            if e.id == 0 {
                root = e.bound;
            }
        })
        .unwrap();
        assert!(root.unwrap() >= optimum - 1e-9);
        assert!(s.bound >= optimum - 1e-9);
        assert!(s.nodes_explored >= 1);
    }

    #[test]
    fn node_limit_reports_limit() {
        let inst = random_instance(4, &RandomOptions { n: 12, budget: 4, ..RandomOptions::default() }).unwrap();
        let p = inst.problem(f64::INFINITY).unwrap();
        let config = SolverConfig { node_limit: 0, ..SolverConfig::default() };
        let s = branch_and_bound(&encode(&p).unwrap(), &config).unwrap();
        assert_eq!(s.status, SolveStatus::LimitReached);
        assert!(s.z.is_none());
    }

    #[test]
    fn rejects_negative_gap() {
        let p = housing(60.0, 80.0, false).unwrap().problem(1.0).unwrap();
        let config = SolverConfig { abs_gap_tol: -1.0, ..SolverConfig::default() };
        assert!(branch_and_bound(&encode(&p).unwrap(), &config).is_err());
    }
}
