//! Structural outcome models: expected outcome of a unit given its group and
//! the interventions received by its neighborhood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InterferenceGraph;
use crate::scalar::Scalar;
use crate::units::{NeighborPattern, Unit};

/// Read-only view of the population a model is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct Population<'a, T> {
    pub units: &'a [Unit<T>],
    pub graph: &'a InterferenceGraph<T>,
}

impl<'a, T: Scalar> Population<'a, T> {
    pub fn new(units: &'a [Unit<T>], graph: &'a InterferenceGraph<T>) -> Self {
        Self { units, graph }
    }

    fn check(&self, i: usize, pattern: &NeighborPattern) -> Result<()> {
        if i >= self.units.len() || i >= self.graph.len() {
            return Err(Error::UnitOutOfRange { index: i, n: self.units.len() });
        }
        let expected = self.graph.degree(i);
        if pattern.len() != expected {
            return Err(Error::PatternLength { unit: i, got: pattern.len(), expected });
        }
        Ok(())
    }
}

/// Evaluator of `E[Y_i | group, features, z_{N(i)}]`.
///
/// The group argument may differ from the unit's factual group; evaluation
/// then re-indexes the group-specific terms while holding features and the
/// pattern fixed.
pub trait StructuralOutcomeModel<T: Scalar> {
    fn n_groups(&self) -> usize;

    fn expected_outcome(&self, pop: Population<'_, T>, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T>;

    /// Feature indices the model reads from any unit.
    fn features_read(&self) -> Vec<usize>;
}

/// Per-group coefficients of the max-interference equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    pub theta: Vec<T>,
}

impl<T: Scalar> SemParams<T> {
    pub fn zeros(n_groups: usize) -> Self {
        Self {
            alpha: vec![T::zero(); n_groups],
            beta: vec![T::zero(); n_groups],
            gamma: vec![T::zero(); n_groups],
            theta: vec![T::zero(); n_groups],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.alpha.len()
    }

    /// `[alpha, beta, gamma, theta]` for one group.
    pub fn group(&self, a: usize) -> [T; 4] {
        [self.alpha[a], self.beta[a], self.gamma[a], self.theta[a]]
    }

    pub fn set_group(&mut self, a: usize, values: [T; 4]) {
        self.alpha[a] = values[0];
        self.beta[a] = values[1];
        self.gamma[a] = values[2];
        self.theta[a] = values[3];
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        if n == 0 || self.beta.len() != n || self.gamma.len() != n || self.theta.len() != n {
            return Err(Error::InvalidModel("alpha, beta, gamma and theta must have one entry per group".into()));
        }
        let all = self.alpha.iter().chain(&self.beta).chain(&self.gamma).chain(&self.theta);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Outcome driven by the closest treated neighbor:
///
/// `alpha[a] * max_{j in N(i), z_j = 1} s(i,j) + beta[a] * max_{j in N(i)} s(i,j) p_j + gamma[a] * f_i + theta[a]`
///
/// where `p` and `f` are the features bound by `ap_feature` and
/// `counselor_feature`. An unbound feature drops its term. The first maximum
/// is zero when no neighbor is treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxInterferenceModel<T> {
    pub params: SemParams<T>,
    pub ap_feature: Option<usize>,
    pub counselor_feature: Option<usize>,
}

impl<T: Scalar> MaxInterferenceModel<T> {
    pub fn new(params: SemParams<T>, ap_feature: Option<usize>, counselor_feature: Option<usize>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, ap_feature, counselor_feature })
    }

    /// Largest similarity among treated neighbors, zero if none is treated.
    pub fn treated_term(graph: &InterferenceGraph<T>, i: usize, pattern: &NeighborPattern) -> T {
        graph
            .similarities(i)
            .iter()
            .zip(&pattern.bits)
            .filter(|(_, &on)| on)
            .map(|(s, _)| *s)
            .fold(T::zero(), T::max)
    }

    fn ap_term(&self, pop: Population<'_, T>, i: usize) -> Result<T> {
        let Some(p) = self.ap_feature else {
            return Ok(T::zero());
        };
        let mut best: Option<T> = None;
        for (&j, &s) in pop.graph.neighbors(i).iter().zip(pop.graph.similarities(i)) {
            let pj = feature(&pop.units[j], p)?;
            let v = s * pj;
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        Ok(best.unwrap_or_else(T::zero))
    }
}

fn feature<T: Scalar>(unit: &Unit<T>, index: usize) -> Result<T> {
    unit.features
        .get(index)
        .copied()
        .ok_or_else(|| Error::InvalidModel(format!("unit {} has no feature {index}", unit.id)))
}

impl<T: Scalar> StructuralOutcomeModel<T> for MaxInterferenceModel<T> {
    fn n_groups(&self) -> usize {
        self.params.n_groups()
    }

    fn expected_outcome(&self, pop: Population<'_, T>, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T> {
        pop.check(i, pattern)?;
        check_group(group, self.n_groups())?;
        let [alpha, beta, gamma, theta] = self.params.group(group);
        let treated = Self::treated_term(pop.graph, i, pattern);
        let ap = self.ap_term(pop, i)?;
        let counselors = match self.counselor_feature {
            Some(f) => feature(&pop.units[i], f)?,
            None => T::zero(),
        };
        Ok(alpha * treated + beta * ap + gamma * counselors + theta)
    }

    fn features_read(&self) -> Vec<usize> {
        self.ap_feature.into_iter().chain(self.counselor_feature).collect()
    }
}

/// Linear outcome with optional spillovers:
///
/// `intercept[a] + sum_f c_f x_f + own[a] z_i
///   + sum_{j in N(i), j != i} (neighbor[a][a_j] z_j + idle_neighbor[a][a_j] (1 - z_i) z_j)`
///
/// The unit's own intervention is read from its self slot in `N(i)`; a unit
/// outside its own neighborhood counts as untreated. Neighbor groups `a_j`
/// are always factual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearInterferenceModel<T> {
    pub feature_coefs: Vec<(usize, T)>,
    pub intercept: Vec<T>,
    pub own_effect: Vec<T>,
    pub neighbor_effect: Vec<Vec<T>>,
    pub idle_neighbor_effect: Vec<Vec<T>>,
}

impl<T: Scalar> LinearInterferenceModel<T> {
    /// Model without spillover terms.
    pub fn direct(feature_coefs: Vec<(usize, T)>, intercept: Vec<T>, own_effect: Vec<T>) -> Result<Self> {
        let g = intercept.len();
        Self::new(feature_coefs, intercept, own_effect, vec![vec![T::zero(); g]; g], vec![vec![T::zero(); g]; g])
    }

    pub fn new(
        feature_coefs: Vec<(usize, T)>,
        intercept: Vec<T>,
        own_effect: Vec<T>,
        neighbor_effect: Vec<Vec<T>>,
        idle_neighbor_effect: Vec<Vec<T>>,
    ) -> Result<Self> {
        let model = Self { feature_coefs, intercept, own_effect, neighbor_effect, idle_neighbor_effect };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.intercept.len();
        let square = |m: &Vec<Vec<T>>| m.len() == g && m.iter().all(|r| r.len() == g);
        if g == 0 || self.own_effect.len() != g || !square(&self.neighbor_effect) || !square(&self.idle_neighbor_effect) {
            return Err(Error::InvalidModel("linear model coefficient shapes do not match the group count".into()));
        }
        let finite = self
            .feature_coefs
            .iter()
            .map(|(_, c)| c)
            .chain(&self.intercept)
            .chain(&self.own_effect)
            .chain(self.neighbor_effect.iter().flatten())
            .chain(self.idle_neighbor_effect.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Copy that keeps only the feature terms `keep` accepts.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = self.clone();
        out.feature_coefs.retain(|(f, _)| keep(*f));
        out
    }
}

impl<T: Scalar> StructuralOutcomeModel<T> for LinearInterferenceModel<T> {
    fn n_groups(&self) -> usize {
        self.intercept.len()
    }

    fn expected_outcome(&self, pop: Population<'_, T>, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T> {
        pop.check(i, pattern)?;
        check_group(group, self.n_groups())?;
        let unit = &pop.units[i];
        let mut y = self.intercept[group];
        for &(f, c) in &self.feature_coefs {
            y += c * feature(unit, f)?;
        }
        let nb = pop.graph.neighbors(i);
        let own = nb
            .iter()
            .zip(&pattern.bits)
            .any(|(&j, &on)| j == i && on);
        if own {
            y += self.own_effect[group];
        }
        for (&j, &on) in nb.iter().zip(&pattern.bits) {
            if j == i || !on {
                continue;
            }
            let gj = pop.units[j].group;
            check_group(gj, self.n_groups())?;
            y += self.neighbor_effect[group][gj];
            if !own {
                y += self.idle_neighbor_effect[group][gj];
            }
        }
        Ok(y)
    }

    fn features_read(&self) -> Vec<usize> {
        self.feature_coefs.iter().map(|(f, _)| *f).collect()
    }
}

/// Explicit table of expected outcomes indexed by `[unit][group][pattern index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel<T> {
    pub values: Vec<Vec<Vec<T>>>,
    pub n_groups: usize,
}

impl<T: Scalar> TabularModel<T> {
    pub fn new(values: Vec<Vec<Vec<T>>>, n_groups: usize) -> Result<Self> {
        for (i, per_group) in values.iter().enumerate() {
            if per_group.len() != n_groups {
                return Err(Error::InvalidModel(format!("unit {i}: table has {} groups, expected {n_groups}", per_group.len())));
            }
            if per_group.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("unit {i}: non-finite table entry")));
            }
        }
        Ok(Self { values, n_groups })
    }

    /// Checks every unit has one entry per neighbor pattern.
    pub fn validate_against(&self, graph: &InterferenceGraph<T>) -> Result<()> {
        if self.values.len() != graph.len() {
            return Err(Error::InvalidModel(format!("table covers {} units, graph has {}", self.values.len(), graph.len())));
        }
        for (i, per_group) in self.values.iter().enumerate() {
            let expected = 1usize << graph.degree(i);
            if per_group.iter().any(|row| row.len() != expected) {
                return Err(Error::InvalidModel(format!("unit {i}: table rows must have {expected} patterns")));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> StructuralOutcomeModel<T> for TabularModel<T> {
    fn n_groups(&self) -> usize {
        self.n_groups
    }

    fn expected_outcome(&self, pop: Population<'_, T>, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T> {
        pop.check(i, pattern)?;
        check_group(group, self.n_groups)?;
        self.values
            .get(i)
            .and_then(|g| g.get(group))
            .and_then(|row| row.get(pattern.index()))
            .copied()
            .ok_or_else(|| Error::InvalidModel(format!("no table entry for unit {i}, group {group}, pattern {}", pattern.index())))
    }

    fn features_read(&self) -> Vec<usize> {
        Vec::new()
    }
}

fn check_group(group: usize, size: usize) -> Result<()> {
    if group < size {
        Ok(())
    } else {
        Err(Error::GroupOutOfRange { index: group, size })
    }
}

/// Closed set of the model families the crate ships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeModel<T> {
    MaxInterference(MaxInterferenceModel<T>),
    LinearInterference(LinearInterferenceModel<T>),
    Tabular(TabularModel<T>),
}

impl<T: Scalar> StructuralOutcomeModel<T> for OutcomeModel<T> {
    fn n_groups(&self) -> usize {
        match self {
            OutcomeModel::MaxInterference(m) => m.n_groups(),
            OutcomeModel::LinearInterference(m) => m.n_groups(),
            OutcomeModel::Tabular(m) => m.n_groups(),
        }
    }

    fn expected_outcome(&self, pop: Population<'_, T>, i: usize, group: usize, pattern: &NeighborPattern) -> Result<T> {
        match self {
            OutcomeModel::MaxInterference(m) => m.expected_outcome(pop, i, group, pattern),
            OutcomeModel::LinearInterference(m) => m.expected_outcome(pop, i, group, pattern),
            OutcomeModel::Tabular(m) => m.expected_outcome(pop, i, group, pattern),
        }
    }

    fn features_read(&self) -> Vec<usize> {
        match self {
            OutcomeModel::MaxInterference(m) => m.features_read(),
            OutcomeModel::LinearInterference(m) => m.features_read(),
            OutcomeModel::Tabular(m) => m.features_read(),
        }
    }
}

impl<T> From<MaxInterferenceModel<T>> for OutcomeModel<T> {
    fn from(m: MaxInterferenceModel<T>) -> Self {
        OutcomeModel::MaxInterference(m)
    }
}

impl<T> From<LinearInterferenceModel<T>> for OutcomeModel<T> {
    fn from(m: LinearInterferenceModel<T>) -> Self {
        OutcomeModel::LinearInterference(m)
    }
}

impl<T> From<TabularModel<T>> for OutcomeModel<T> {
    fn from(m: TabularModel<T>) -> Self {
        OutcomeModel::Tabular(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: usize = 0;
    const W: usize = 1;

    fn housing() -> LinearInterferenceModel<f64> {
        LinearInterferenceModel::direct(vec![(0, 1.0)], vec![0.0, 0.0], vec![100.0, 150.0]).unwrap()
    }

    fn single(x: f64, group: usize) -> (Vec<Unit<f64>>, InterferenceGraph<f64>) {
        (vec![Unit::new("1", group, vec![x])], InterferenceGraph::isolated(1))
    }

    #[test]
    fn housing_treated_minority_unit() {
        let (units, graph) = single(60.0, B);
        let pop = Population::new(&units, &graph);
        let y = housing().expected_outcome(pop, 0, B, &NeighborPattern::new(vec![true])).unwrap();
        assert_eq!(y, 160.0);
    }

    #[test]
    fn untreated_outcome_is_the_feature() {
        for (x, g) in [(60.0, B), (80.0, W), (-3.5, W)] {
            let (units, graph) = single(x, g);
            let pop = Population::new(&units, &graph);
            for a in [B, W] {
                assert_eq!(housing().expected_outcome(pop, 0, a, &NeighborPattern::zeros(1)).unwrap(), x);
            }
        }
    }

    #[test]
    fn max_model_without_interference_terms() {
        let params = SemParams { alpha: vec![0.0, 0.0], beta: vec![0.0, 0.0], gamma: vec![0.5, 0.25], theta: vec![0.1, 0.2] };
        let model = MaxInterferenceModel::new(params, Some(1), Some(0)).unwrap();
        let units = vec![
            Unit::new("a", 0, vec![2.0, 1.0]).with_coords(0.0, 0.0),
            Unit::new("b", 1, vec![4.0, 0.0]).with_coords(1.0, 0.0),
        ];
        let graph = InterferenceGraph::complete(2);
        let pop = Population::new(&units, &graph);
        for idx in 0..4 {
            let p = NeighborPattern::from_index(idx, 2);
            assert_eq!(model.expected_outcome(pop, 0, 0, &p).unwrap(), 0.5 * 2.0 + 0.1);
            assert_eq!(model.expected_outcome(pop, 0, 1, &p).unwrap(), 0.25 * 2.0 + 0.2);
            assert_eq!(model.expected_outcome(pop, 1, 1, &p).unwrap(), 0.25 * 4.0 + 0.2);
        }
    }

    #[test]
    fn max_model_terms() {
        let params = SemParams { alpha: vec![2.0], beta: vec![3.0], gamma: vec![0.0], theta: vec![1.0] };
        let model = MaxInterferenceModel::new(params, Some(0), None).unwrap();
        let units = vec![Unit::new("a", 0, vec![0.0]), Unit::new("b", 0, vec![1.0]), Unit::new("c", 0, vec![1.0])];
        let graph = InterferenceGraph::from_lists(vec![vec![0, 1, 2], vec![1], vec![2]], vec![vec![4.0, 0.5, 0.25], vec![1.0], vec![1.0]], 3)
            .unwrap();
        let pop = Population::new(&units, &graph);
        // ap term: max(4*0, 0.5*1, 0.25*1) = 0.5
        let none = NeighborPattern::new(vec![false, false, false]);
        assert_eq!(model.expected_outcome(pop, 0, 0, &none).unwrap(), 3.0 * 0.5 + 1.0);
        let far = NeighborPattern::new(vec![false, true, true]);
        assert_eq!(model.expected_outcome(pop, 0, 0, &far).unwrap(), 2.0 * 0.5 + 1.5 + 1.0);
        let all = NeighborPattern::new(vec![true, true, true]);
        assert_eq!(model.expected_outcome(pop, 0, 0, &all).unwrap(), 2.0 * 4.0 + 1.5 + 1.0);
    }

    #[test]
    fn evaluation_errors() {
        let (units, graph) = single(1.0, B);
        let pop = Population::new(&units, &graph);
        assert!(matches!(
            housing().expected_outcome(pop, 0, B, &NeighborPattern::zeros(2)),
            Err(Error::PatternLength { .. })
        ));
        assert!(matches!(
            housing().expected_outcome(pop, 0, 2, &NeighborPattern::zeros(1)),
            Err(Error::GroupOutOfRange { .. })
        ));
    }

    #[test]
    fn tabular_lookup() {
        let table = TabularModel::new(vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]], 2).unwrap();
        let (units, graph) = single(0.0, B);
        table.validate_against(&graph).unwrap();
        let pop = Population::new(&units, &graph);
        assert_eq!(table.expected_outcome(pop, 0, 1, &NeighborPattern::new(vec![true])).unwrap(), 4.0);
    }
}
