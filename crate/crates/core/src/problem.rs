//! The budgeted allocation problem with counterfactual privilege constraints.

use crate::error::{Error, Result};
use crate::graph::InterferenceGraph;
use crate::outcome::{OutcomeModel, Population, StructuralOutcomeModel};
use crate::scalar::Scalar;
use crate::units::{GroupDomain, NeighborPattern, Unit};

/// Absolute tolerance for privilege and budget rows.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Everything needed to pose one allocation: the population, its interference
/// graph, the outcome model used in the objective, the restricted model used
/// for privilege gaps, the budget and the privilege bound `tau`.
///
/// `tau = +inf` drops the privilege constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem<T> {
    units: Vec<Unit<T>>,
    graph: InterferenceGraph<T>,
    objective_model: OutcomeModel<T>,
    privilege_model: OutcomeModel<T>,
    groups: GroupDomain,
    budget: usize,
    tau: T,
}

/// Direct evaluation of one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReport<T> {
    pub total: T,
    pub outcomes: Vec<T>,
    /// `gaps[i][a]`: privilege of unit `i` over counterfactual group `a`.
    pub gaps: Vec<Vec<T>>,
    pub budget_used: usize,
    pub within_budget: bool,
    pub within_tau: bool,
    pub feasible: bool,
}

impl<T: Scalar> AllocationProblem<T> {
    pub fn new(
        units: Vec<Unit<T>>,
        graph: InterferenceGraph<T>,
        objective_model: OutcomeModel<T>,
        privilege_model: OutcomeModel<T>,
        groups: GroupDomain,
        budget: usize,
        tau: T,
    ) -> Result<Self> {
        let problem = Self { units, graph, objective_model, privilege_model, groups, budget, tau };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let n = self.units.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no units".into()));
        }
        if self.graph.len() != n {
            return Err(Error::InvalidProblem(format!("graph has {} units, problem has {n}", self.graph.len())));
        }
        if self.budget > n {
            return Err(Error::InvalidProblem(format!("budget {} exceeds the {n} units", self.budget)));
        }
        if self.tau.is_nan() || self.tau <= T::zero() {
            return Err(Error::InvalidProblem(format!("tau must be positive, got {}", self.tau)));
        }
        for unit in &self.units {
            unit.validate(&self.groups)?;
        }
        for (name, model) in [("objective", &self.objective_model), ("privilege", &self.privilege_model)] {
            if model.n_groups() != self.groups.len() {
                return Err(Error::InvalidProblem(format!(
                    "{name} model has {} groups, domain has {}",
                    model.n_groups(),
                    self.groups.len()
                )));
            }
            if let OutcomeModel::Tabular(t) = model {
                t.validate_against(&self.graph)?;
            }
        }
        for f in self.privilege_model.features_read() {
            if let Some(unit) = self.units.iter().find(|u| u.prec_feature(f).is_none()) {
                return Err(Error::InvalidProblem(format!(
                    "privilege model reads feature {f}, which is not a non-descendant feature of unit {}",
                    unit.id
                )));
            }
        }
        let pop = self.population();
        for i in 0..n {
            let d = self.graph.degree(i);
            for pattern in [NeighborPattern::zeros(d), NeighborPattern::new(vec![true; d])] {
                for a in 0..self.groups.len() {
                    for model in [&self.objective_model, &self.privilege_model] {
                        let y = model.expected_outcome(pop, i, a, &pattern)?;
                        if !y.is_finite() {
                            return Err(Error::InvalidProblem(format!("non-finite outcome for unit {i}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn population(&self) -> Population<'_, T> {
        Population::new(&self.units, &self.graph)
    }

    pub fn units(&self) -> &[Unit<T>] {
        &self.units
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn graph(&self) -> &InterferenceGraph<T> {
        &self.graph
    }

    pub fn groups(&self) -> &GroupDomain {
        &self.groups
    }

    pub fn objective_model(&self) -> &OutcomeModel<T> {
        &self.objective_model
    }

    pub fn privilege_model(&self) -> &OutcomeModel<T> {
        &self.privilege_model
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn is_constrained(&self) -> bool {
        self.tau.is_finite()
    }

    pub fn with_tau(&self, tau: T) -> Result<Self> {
        let mut out = self.clone();
        out.tau = tau;
        if tau.is_nan() || tau <= T::zero() {
            return Err(Error::InvalidProblem(format!("tau must be positive, got {tau}")));
        }
        Ok(out)
    }

    pub fn with_budget(&self, budget: usize) -> Result<Self> {
        if budget > self.n() {
            return Err(Error::InvalidProblem(format!("budget {budget} exceeds the {} units", self.n())));
        }
        let mut out = self.clone();
        out.budget = budget;
        Ok(out)
    }

    /// Expected outcome of unit `i` under the objective model.
    pub fn expected_outcome(&self, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T> {
        self.objective_model.expected_outcome(self.population(), i, group, pattern)
    }

    /// `E[Y_i(a_i, z)] - E[Y_i(a', z)]` under the restricted model, holding
    /// the non-descendant features and the pattern fixed.
    pub fn privilege_gap(&self, i: usize, a_prime: usize, pattern: &NeighborPattern) -> Result<T> {
        let unit = self.units.get(i).ok_or(Error::UnitOutOfRange { index: i, n: self.n() })?;
        self.groups.check(a_prime)?;
        if a_prime == unit.group {
            // still validates the pattern
            self.privilege_model.expected_outcome(self.population(), i, a_prime, pattern)?;
            return Ok(T::zero());
        }
        let pop = self.population();
        let factual = self.privilege_model.expected_outcome(pop, i, unit.group, pattern)?;
        let counterfactual = self.privilege_model.expected_outcome(pop, i, a_prime, pattern)?;
        Ok(factual - counterfactual)
    }

    /// Objective, outcomes, gaps and feasibility of a fixed allocation.
    pub fn evaluate_policy(&self, z: &[bool]) -> Result<PolicyReport<T>> {
        if z.len() != self.n() {
            return Err(Error::AllocationLength { got: z.len(), expected: self.n() });
        }
        let tol = T::tolerance(FEASIBILITY_TOL);
        let mut outcomes = Vec::with_capacity(self.n());
        let mut gaps = Vec::with_capacity(self.n());
        let mut within_tau = true;
        for (i, unit) in self.units.iter().enumerate() {
            let pattern = self.graph.neighbor_pattern(z, i)?;
            outcomes.push(self.expected_outcome(i, unit.group, &pattern)?);
            let row = (0..self.groups.len())
                .map(|a| self.privilege_gap(i, a, &pattern))
                .collect::<Result<Vec<T>>>()?;
            if self.is_constrained() && row.iter().any(|&g| g > self.tau + tol) {
                within_tau = false;
            }
            gaps.push(row);
        }
        let budget_used = z.iter().filter(|&&b| b).count();
        let within_budget = budget_used <= self.budget;
        Ok(PolicyReport {
            total: outcomes.iter().copied().sum(),
            outcomes,
            gaps,
            budget_used,
            within_budget,
            within_tau,
            feasible: within_budget && within_tau,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::LinearInterferenceModel;

    const B: usize = 0;
    const W: usize = 1;

    fn housing(x1: f64, x2: f64, tau: f64) -> AllocationProblem<f64> {
        let units = vec![Unit::new("1", B, vec![x1]), Unit::new("2", W, vec![x2])];
        let model: OutcomeModel<f64> =
            LinearInterferenceModel::direct(vec![(0, 1.0)], vec![0.0, 0.0], vec![100.0, 150.0]).unwrap().into();
        AllocationProblem::new(
            units,
            InterferenceGraph::isolated(2),
            model.clone(),
            model,
            GroupDomain::new(["b", "w"]).unwrap(),
            1,
            tau,
        )
        .unwrap()
    }

    fn additive(groups: &[usize], tau: f64) -> AllocationProblem<f64> {
        let units = groups.iter().enumerate().map(|(i, &g)| Unit::new(i.to_string(), g, vec![])).collect();
        let model: OutcomeModel<f64> = LinearInterferenceModel::direct(vec![], vec![0.0, 1.0], vec![1.0, 1.0]).unwrap().into();
        AllocationProblem::new(
            units,
            InterferenceGraph::isolated(groups.len()),
            model.clone(),
            model,
            GroupDomain::new(["b", "w"]).unwrap(),
            1,
            tau,
        )
        .unwrap()
    }

    #[test]
    fn gap_against_own_group_is_zero() {
        let p = housing(60.0, 80.0, 1.0);
        for i in 0..2 {
            for bit in [false, true] {
                let pat = NeighborPattern::new(vec![bit]);
                assert_eq!(p.privilege_gap(i, p.units()[i].group, &pat).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn housing_privilege_of_treated_majority_unit() {
        let p = housing(60.0, 80.0, 1.0);
        assert_eq!(p.privilege_gap(1, B, &NeighborPattern::new(vec![true])).unwrap(), 50.0);
        assert_eq!(p.privilege_gap(1, B, &NeighborPattern::new(vec![false])).unwrap(), 0.0);
        assert_eq!(p.privilege_gap(0, W, &NeighborPattern::new(vec![true])).unwrap(), -50.0);
    }

    #[test]
    fn additive_gap_is_one_under_any_pattern() {
        let p = additive(&[W, B], 1.0);
        for bit in [false, true] {
            assert_eq!(p.privilege_gap(0, B, &NeighborPattern::new(vec![bit])).unwrap(), 1.0);
        }
        assert!(p.privilege_gap(0, 2, &NeighborPattern::zeros(1)).is_err());
    }

    #[test]
    fn idle_policy_scores_the_baseline() {
        let p = housing(60.0, 80.0, 1.0);
        let r = p.evaluate_policy(&[false, false]).unwrap();
        assert_eq!(r.budget_used, 0);
        assert_eq!(r.total, 140.0);
        assert!(r.feasible);
    }

    #[test]
    fn housing_prefers_the_privileged_unit() {
        let p = housing(60.0, 80.0, f64::INFINITY);
        let a = p.evaluate_policy(&[true, false]).unwrap();
        let b = p.evaluate_policy(&[false, true]).unwrap();
        assert!(b.total > a.total);
        // 50 units more qualified is still not enough
        let p = housing(129.0, 80.0, f64::INFINITY);
        assert!(p.evaluate_policy(&[false, true]).unwrap().total > p.evaluate_policy(&[true, false]).unwrap().total);
    }

    #[test]
    fn over_budget_is_infeasible() {
        let p = housing(60.0, 80.0, f64::INFINITY);
        let r = p.evaluate_policy(&[true, true]).unwrap();
        assert!(!r.within_budget && !r.feasible);
        assert!(p.evaluate_policy(&[true]).is_err());
    }

    #[test]
    fn tau_bound_uses_tolerance() {
        let p = additive(&[W, B], 1.0 - 5e-10);
        assert!(p.evaluate_policy(&[false, false]).unwrap().feasible);
        let p = additive(&[W, B], 0.99);
        assert!(!p.evaluate_policy(&[false, false]).unwrap().feasible);
    }

    #[test]
    fn construction_errors() {
        let p = housing(60.0, 80.0, 1.0);
        assert!(p.with_budget(3).is_err());
        assert!(p.with_tau(0.0).is_err());
        let bad_mask = vec![Unit::new("1", B, vec![1.0]).with_prec_mask(vec![false]), Unit::new("2", W, vec![1.0])];
        let model: OutcomeModel<f64> =
            LinearInterferenceModel::direct(vec![(0, 1.0)], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap().into();
        let err = AllocationProblem::new(
            bad_mask,
            InterferenceGraph::isolated(2),
            model.clone(),
            model,
            GroupDomain::new(["b", "w"]).unwrap(),
            1,
            1.0,
        );
        assert!(matches!(err, Err(Error::InvalidProblem(_))));
    }
}
