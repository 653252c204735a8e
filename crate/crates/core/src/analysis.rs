//! Exhaustive oracle, tau solution paths and allocation summaries.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bnb::{branch_and_bound, Solution, SolveStatus, SolverConfig, TIE_TOL};
use crate::error::{Error, Result};
use crate::milp::encode;
use crate::outcome::OutcomeModel;
use crate::problem::AllocationProblem;
use crate::scalar::Scalar;

/// Largest population the oracle enumerates.
pub const ORACLE_MAX_UNITS: usize = 22;
/// Largest number of candidate allocations the oracle enumerates.
pub const ORACLE_MAX_CANDIDATES: u64 = 10_000_000;

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of allocations with at most `budget` treated units.
pub fn candidate_count(n: usize, budget: usize) -> u64 {
    (0..=budget.min(n)).map(|b| binomial(n as u64, b as u64)).fold(0u64, u64::saturating_add)
}

/// Enumerates every allocation within budget, scoring each through direct
/// policy evaluation only, and returns the lexicographically smallest
/// maximizer among the feasible ones.
pub fn brute_force<T: Scalar>(problem: &AllocationProblem<T>) -> Result<Solution<T>> {
    let n = problem.n();
    let candidates = candidate_count(n, problem.budget());
    if n > ORACLE_MAX_UNITS || candidates > ORACLE_MAX_CANDIDATES {
        return Err(Error::EnumerationGuard(format!(
            "{n} units with budget {} give {candidates} candidates (limits: {ORACLE_MAX_UNITS} units, {ORACLE_MAX_CANDIDATES} candidates)",
            problem.budget()
        )));
    }
    let mut best: Option<(Vec<bool>, T, Vec<Vec<T>>)> = None;
    let mut visited = 0usize;
    // z[0] is the most significant bit, so increasing masks are in lexicographic order
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize > problem.budget() {
            continue;
        }
        visited += 1;
        let z: Vec<bool> = (0..n).map(|i| (mask >> (n - 1 - i)) & 1 == 1).collect();
        let report = problem.evaluate_policy(&z)?;
        if !report.feasible {
            continue;
        }
        let improves = match &best {
            None => true,
            Some((_, obj, _)) => report.total > *obj + T::tolerance(TIE_TOL) * obj.abs().max(T::one()),
        };
        if improves {
            best = Some((z, report.total, report.gaps));
        }
    }
    Ok(match best {
        None => Solution::infeasible(visited),
        Some((z, objective, gaps)) => Solution {
            status: SolveStatus::Optimal,
            z: Some(z),
            objective: Some(objective),
            bound: objective,
            per_unit_gaps: Some(gaps),
            nodes_explored: visited,
        },
    })
}

/// Encodes and solves one problem.
pub fn solve<T: Scalar>(problem: &AllocationProblem<T>, config: &SolverConfig) -> Result<Solution<T>> {
    branch_and_bound(&encode(problem)?, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint<T> {
    pub tau: T,
    pub solution: Solution<T>,
}

/// Solutions of one problem over an increasing sequence of `tau` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath<T> {
    pub points: Vec<PathPoint<T>>,
    pub budget: usize,
    pub fingerprint: String,
}

impl<T: Scalar> SolutionPath<T> {
    pub fn taus(&self) -> Vec<T> {
        self.points.iter().map(|p| p.tau).collect()
    }

    /// Objectives of the optimal points, in path order.
    pub fn optimal_objectives(&self) -> Vec<(T, T)> {
        self.points
            .iter()
            .filter(|p| p.solution.status == SolveStatus::Optimal)
            .filter_map(|p| p.solution.objective.map(|o| (p.tau, o)))
            .collect()
    }
}

pub fn validate_taus<T: Scalar>(taus: &[T]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::TauGrid("empty tau list".into()));
    }
    if let Some(t) = taus.iter().find(|t| t.is_nan() || **t <= T::zero()) {
        return Err(Error::TauGrid(format!("tau values must be positive, got {t}")));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::TauGrid("tau values must be strictly increasing".into()));
    }
    Ok(())
}

/// Solves `problem` once per `tau` (each solve starts cold).
pub fn solution_path<T: Scalar>(problem: &AllocationProblem<T>, taus: &[T], config: &SolverConfig) -> Result<SolutionPath<T>> {
    validate_taus(taus)?;
    let points = taus
        .iter()
        .map(|&tau| {
            let solution = solve(&problem.with_tau(tau)?, config)?;
            Ok(PathPoint { tau, solution })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionPath { points, budget: problem.budget(), fingerprint: fingerprint(problem) })
}

/// `count` values from `low` to `high`, evenly spaced on a log scale.
pub fn geometric_tau_grid<T: Scalar>(low: T, high: T, count: usize) -> Result<Vec<T>> {
    if !(low > T::zero() && high > low && high.is_finite()) || count < 2 {
        return Err(Error::TauGrid(format!("need 0 < low < high < inf and at least 2 points, got [{low}, {high}] x {count}")));
    }
    let ratio = (high / low).ln();
    let last = T::of((count - 1) as f64);
    let mut grid: Vec<T> = (0..count).map(|k| low * (ratio * T::of(k as f64) / last).exp()).collect();
    grid[count - 1] = high;
    Ok(grid)
}

/// Interval bracketing the privilege bound's effect on `problem`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBracket<T> {
    /// Below this no allocation is feasible: some unit has no pattern whose
    /// gaps all stay within it.
    pub infeasible_below: T,
    /// At or above this every pattern satisfies every privilege row, so the
    /// constraints are vacuous.
    pub vacuous_from: T,
    /// Smallest bound under which the idle allocation is feasible.
    pub idle_feasible_from: T,
}

pub fn tau_bracket<T: Scalar>(problem: &AllocationProblem<T>) -> Result<TauBracket<T>> {
    let program = encode(&problem.with_tau(T::infinity())?)?;
    let mut infeasible_below = T::neg_infinity();
    let mut vacuous_from = T::neg_infinity();
    let mut idle = T::neg_infinity();
    for i in 0..program.n_units() {
        let table = program.gap_table(i);
        let worst = |j: usize| table.iter().map(|row| row[j]).fold(T::neg_infinity(), T::max);
        let per_pattern: Vec<T> = (0..program.pattern_count(i)).map(worst).collect();
        let best_pattern = per_pattern.iter().copied().fold(T::infinity(), T::min);
        infeasible_below = infeasible_below.max(best_pattern);
        vacuous_from = vacuous_from.max(per_pattern.iter().copied().fold(T::neg_infinity(), T::max));
        idle = idle.max(per_pattern[0]);
    }
    Ok(TauBracket { infeasible_below, vacuous_from, idle_feasible_from: idle })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatedUnit<T> {
    pub id: String,
    pub group: String,
    pub coords: Option<[T; 2]>,
}

/// Who receives the interventions, by group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAllocationSummary<T> {
    pub groups: Vec<String>,
    pub treated_counts: Vec<usize>,
    /// Sum of expected outcomes of each group's units under the allocation.
    pub outcome_totals: Vec<T>,
    pub objective: T,
    pub treated: Vec<TreatedUnit<T>>,
}

pub fn group_allocation_summary<T: Scalar>(
    problem: &AllocationProblem<T>,
    solution: &Solution<T>,
) -> Result<GroupAllocationSummary<T>> {
    let z = solution.z.as_ref().ok_or(Error::NoIncumbent)?;
    let report = problem.evaluate_policy(z)?;
    let groups = problem.groups();
    let mut treated_counts = vec![0; groups.len()];
    let mut outcome_totals = vec![T::zero(); groups.len()];
    let mut treated = Vec::new();
    for (i, unit) in problem.units().iter().enumerate() {
        outcome_totals[unit.group] += report.outcomes[i];
        if z[i] {
            treated_counts[unit.group] += 1;
            treated.push(TreatedUnit { id: unit.id.clone(), group: groups.label(unit.group)?.to_string(), coords: unit.coords });
        }
    }
    Ok(GroupAllocationSummary {
        groups: groups.labels().to_vec(),
        treated_counts,
        outcome_totals,
        objective: report.total,
        treated,
    })
}

#[derive(Serialize)]
struct FingerprintView<'a, T> {
    ids: Vec<&'a str>,
    groups: Vec<usize>,
    features: Vec<&'a [T]>,
    prec: Vec<&'a [bool]>,
    coords: Vec<Option<[T; 2]>>,
    neighbors: Vec<&'a [usize]>,
    similarities: Vec<&'a [T]>,
    labels: &'a [String],
    objective_model: &'a OutcomeModel<T>,
    privilege_model: &'a OutcomeModel<T>,
    budget: usize,
}

/// SHA-256 of the problem's inputs, excluding `tau`.
pub fn fingerprint<T: Scalar>(problem: &AllocationProblem<T>) -> String {
    let units = problem.units();
    let graph = problem.graph();
    let view = FingerprintView {
        ids: units.iter().map(|u| u.id.as_str()).collect(),
        groups: units.iter().map(|u| u.group).collect(),
        features: units.iter().map(|u| u.features.as_slice()).collect(),
        prec: units.iter().map(|u| u.prec_mask.as_slice()).collect(),
        coords: units.iter().map(|u| u.coords).collect(),
        neighbors: (0..graph.len()).map(|i| graph.neighbors(i)).collect(),
        similarities: (0..graph.len()).map(|i| graph.similarities(i)).collect(),
        labels: problem.groups().labels(),
        objective_model: problem.objective_model(),
        privilege_model: problem.privilege_model(),
        budget: problem.budget(),
    };
    let bytes = serde_json::to_vec(&view).expect("problem inputs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_counts() {
        assert_eq!(candidate_count(4, 2), 1 + 4 + 6);
        assert_eq!(candidate_count(3, 5), 8);
        assert_eq!(candidate_count(22, 22), 1 << 22);
    }

    #[test]
    fn geometric_grid() {
        let g = geometric_tau_grid(0.01f64, 1.0, 3).unwrap();
        assert!((g[1] - 0.1).abs() < 1e-12);
        assert_eq!(g[2], 1.0);
        assert!(geometric_tau_grid(0.0f64, 1.0, 3).is_err());
        assert!(geometric_tau_grid(1.0f64, 1.0, 3).is_err());
    }

    #[test]
    fn tau_validation() {
        assert!(validate_taus(&[0.1f64, 0.2, f64::INFINITY]).is_ok());
        assert!(validate_taus(&[0.2f64, 0.2]).is_err());
        assert!(validate_taus(&[-0.1f64]).is_err());
        assert!(validate_taus::<f64>(&[]).is_err());
    }
}
