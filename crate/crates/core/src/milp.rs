//! Exact mixed-integer linear encoding of the allocation problem.
//!
//! Variables are the allocation `z` (one per unit) followed by one selector
//! block `h_i` per unit, with one binary per possible neighbor pattern.
//! Linking rows tie each selector to the `z` values of the unit's neighbors,
//! so for any binary `z` the selectors are forced to pick exactly the
//! realized pattern.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::problem::AllocationProblem;
use crate::scalar::Scalar;
use crate::units::NeighborPattern;

/// Largest neighborhood the encoder enumerates patterns for.
pub const MAX_PATTERN_BITS: usize = 12;

/// Tolerance used when reading binary values back from a solver.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// All `k`-bit vectors in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternMatrix {
    k: usize,
    rows: Vec<Vec<bool>>,
}

impl PatternMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn enumerate_patterns(k: usize) -> Result<PatternMatrix> {
    if k > MAX_PATTERN_BITS {
        return Err(Error::PatternCap { k, cap: MAX_PATTERN_BITS });
    }
    let rows = (0..1usize << k).map(|j| NeighborPattern::from_index(j, k).bits).collect();
    Ok(PatternMatrix { k, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Z { unit: usize },
    H { unit: usize, pattern: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Link { unit: usize, pattern: usize, slot: usize },
    OneHot { unit: usize },
    Budget,
    Privilege { unit: usize, group: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn activity(&self, values: &[T]) -> T {
        self.coeffs.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn is_satisfied(&self, values: &[T], tol: T) -> bool {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// Encoded program: maximize `objective . x` subject to `constraints`,
/// all variables binary.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpProgram<T> {
    unit_ids: Vec<String>,
    unit_groups: Vec<usize>,
    n_groups: usize,
    neighbors: Vec<Vec<usize>>,
    h_offset: Vec<usize>,
    objective: Vec<T>,
    constraints: Vec<Constraint<T>>,
    gaps: Vec<Vec<Vec<T>>>,
    budget: usize,
    tau: T,
}

/// Allocation and pattern selection read back from a variable vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub z: Vec<bool>,
    /// Selected pattern index per unit (the nonzero column of each row of H).
    pub selected: Vec<usize>,
}

impl Decoded {
    /// One-hot matrix form of the selection, one row per unit.
    pub fn h_matrix(&self, pattern_counts: &[usize]) -> Vec<Vec<bool>> {
        self.selected
            .iter()
            .zip(pattern_counts)
            .map(|(&s, &count)| (0..count).map(|j| j == s).collect())
            .collect()
    }
}

/// Builds the program for `problem`. Units with fewer than `K` neighbors get
/// `2^{|N(i)|}` selector variables; privilege rows against a unit's own group
/// are omitted, and all privilege rows are omitted when `tau` is infinite.
pub fn encode<T: Scalar>(problem: &AllocationProblem<T>) -> Result<MilpProgram<T>> {
    let n = problem.n();
    let graph = problem.graph();
    let n_groups = problem.groups().len();
    let mut h_offset = Vec::with_capacity(n);
    let mut next = n;
    for i in 0..n {
        let d = graph.degree(i);
        if d > MAX_PATTERN_BITS {
            return Err(Error::PatternCap { k: d, cap: MAX_PATTERN_BITS });
        }
        h_offset.push(next);
        next += 1 << d;
    }
    let n_vars = next;

    let mut objective = vec![T::zero(); n_vars];
    let mut gaps = Vec::with_capacity(n);
    let mut constraints = Vec::new();
    for (i, unit) in problem.units().iter().enumerate() {
        let nb = graph.neighbors(i);
        let d = nb.len();
        let count = 1usize << d;
        let mut unit_gaps = vec![vec![T::zero(); count]; n_groups];
        for j in 0..count {
            let pattern = NeighborPattern::from_index(j, d);
            let wrap = |e: Error| Error::ModelEvaluation { unit: i, pattern: j, reason: e.to_string() };
            let value = problem.expected_outcome(i, unit.group, &pattern).map_err(wrap)?;
            if !value.is_finite() {
                return Err(wrap(Error::InvalidModel("non-finite outcome".into())));
            }
            objective[h_offset[i] + j] = value;
            for (a, row) in unit_gaps.iter_mut().enumerate() {
                if a != unit.group {
                    row[j] = problem.privilege_gap(i, a, &pattern).map_err(wrap)?;
                }
            }
        }

        for j in 0..count {
            let h = h_offset[i] + j;
            for (slot, &bit) in NeighborPattern::from_index(j, d).bits.iter().enumerate() {
                let kind = RowKind::Link { unit: i, pattern: j, slot };
                let z = nb[slot];
                constraints.push(if bit {
                    Constraint { kind, coeffs: vec![(h, T::one()), (z, -T::one())], sense: Sense::Le, rhs: T::zero() }
                } else {
                    Constraint { kind, coeffs: vec![(h, T::one()), (z, T::one())], sense: Sense::Le, rhs: T::one() }
                });
            }
        }
        constraints.push(Constraint {
            kind: RowKind::OneHot { unit: i },
            coeffs: (0..count).map(|j| (h_offset[i] + j, T::one())).collect(),
            sense: Sense::Eq,
            rhs: T::one(),
        });
        if problem.is_constrained() {
            for (a, row) in unit_gaps.iter().enumerate() {
                if a == unit.group {
                    continue;
                }
                constraints.push(Constraint {
                    kind: RowKind::Privilege { unit: i, group: a },
                    coeffs: row.iter().enumerate().map(|(j, &g)| (h_offset[i] + j, g)).collect(),
                    sense: Sense::Le,
                    rhs: problem.tau(),
                });
            }
        }
        gaps.push(unit_gaps);
    }
    constraints.push(Constraint {
        kind: RowKind::Budget,
        coeffs: (0..n).map(|i| (i, T::one())).collect(),
        sense: Sense::Le,
        rhs: T::of(problem.budget() as f64),
    });

    Ok(MilpProgram {
        unit_ids: problem.units().iter().map(|u| u.id.clone()).collect(),
        unit_groups: problem.units().iter().map(|u| u.group).collect(),
        n_groups,
        neighbors: (0..n).map(|i| graph.neighbors(i).to_vec()).collect(),
        h_offset,
        objective,
        constraints,
        gaps,
        budget: problem.budget(),
        tau: problem.tau(),
    })
}

impl<T: Scalar> MilpProgram<T> {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_z(&self) -> usize {
        self.n_units()
    }

    pub fn n_h(&self) -> usize {
        self.objective.len() - self.n_units()
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn unit_groups(&self) -> &[usize] {
        &self.unit_groups
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn pattern_count(&self, i: usize) -> usize {
        1 << self.neighbors[i].len()
    }

    pub fn pattern_counts(&self) -> Vec<usize> {
        (0..self.n_units()).map(|i| self.pattern_count(i)).collect()
    }

    /// Index of selector `h_{i,j}` in the variable vector.
    pub fn h_index(&self, i: usize, pattern: usize) -> usize {
        self.h_offset[i] + pattern
    }

    pub fn variable(&self, index: usize) -> Variable {
        if index < self.n_units() {
            return Variable::Z { unit: index };
        }
        let unit = self.h_offset.partition_point(|&off| off <= index) - 1;
        Variable::H { unit, pattern: index - self.h_offset[unit] }
    }

    pub fn variable_name(&self, index: usize) -> String {
        match self.variable(index) {
            Variable::Z { unit } => format!("z_{}", self.unit_ids[unit]),
            Variable::H { unit, pattern } => format!("h_{}_{}", self.unit_ids[unit], pattern),
        }
    }

    /// `gap(i, a, e_j)` for every group and pattern of unit `i` (zero rows for
    /// the unit's own group).
    pub fn gap_table(&self, i: usize) -> &[Vec<T>] {
        &self.gaps[i]
    }

    /// Pattern index realized at unit `i` by allocation `z`.
    pub fn realized_pattern(&self, z: &[bool], i: usize) -> usize {
        self.neighbors[i].iter().fold(0, |acc, &j| (acc << 1) | usize::from(z[j]))
    }

    pub fn selection(&self, z: &[bool]) -> Vec<usize> {
        (0..self.n_units()).map(|i| self.realized_pattern(z, i)).collect()
    }

    /// Full variable vector `(z, H(z))`.
    pub fn assignment(&self, z: &[bool]) -> Vec<T> {
        let mut x = vec![T::zero(); self.n_vars()];
        for (i, &on) in z.iter().enumerate() {
            if on {
                x[i] = T::one();
            }
        }
        for (i, s) in self.selection(z).into_iter().enumerate() {
            x[self.h_index(i, s)] = T::one();
        }
        x
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Objective at `(z, H(z))`.
    pub fn objective_at(&self, z: &[bool]) -> T {
        (0..self.n_units())
            .map(|i| self.objective[self.h_index(i, self.realized_pattern(z, i))])
            .sum()
    }

    /// Per-unit, per-group privilege gaps realized by `z`.
    pub fn gaps_at(&self, z: &[bool]) -> Vec<Vec<T>> {
        (0..self.n_units())
            .map(|i| {
                let s = self.realized_pattern(z, i);
                self.gaps[i].iter().map(|row| row[s]).collect()
            })
            .collect()
    }

    /// Rounds solver output to binaries and checks the selector rows.
    pub fn decode(&self, values: &[T]) -> Result<Decoded> {
        if values.len() != self.n_vars() {
            return Err(Error::VariableCount { got: values.len(), expected: self.n_vars() });
        }
        let tol = T::of(INTEGRALITY_TOL);
        let mut bits = Vec::with_capacity(values.len());
        for (index, &v) in values.iter().enumerate() {
            if (v - T::zero()).abs() <= tol {
                bits.push(false);
            } else if (v - T::one()).abs() <= tol {
                bits.push(true);
            } else {
                return Err(Error::NonIntegral { index, value: v.as_f64() });
            }
        }
        let z = bits[..self.n_units()].to_vec();
        let mut selected = Vec::with_capacity(self.n_units());
        for i in 0..self.n_units() {
            let block = &bits[self.h_offset[i]..self.h_offset[i] + self.pattern_count(i)];
            let on: Vec<usize> = block.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect();
            if on.len() != 1 {
                return Err(Error::InconsistentSelector { unit: i, reason: format!("{} selectors set", on.len()) });
            }
            let realized = self.realized_pattern(&z, i);
            if on[0] != realized {
                return Err(Error::InconsistentSelector {
                    unit: i,
                    reason: format!("selects pattern {} but neighbors realize pattern {realized}", on[0]),
                });
            }
            selected.push(on[0]);
        }
        Ok(Decoded { z, selected })
    }

    fn term(out: &mut String, coef: T, name: &str) {
        let sign = if coef < T::zero() { '-' } else { '+' };
        let _ = write!(out, " {sign}{} {name}", coef.abs());
    }

    /// Plain-text export: a `MAXIMIZE` header, one `coef var` line per
    /// objective term, then one `name: terms sense rhs` line per row.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "MAXIMIZE")?;
        for (v, &c) in self.objective.iter().enumerate() {
            if c != T::zero() {
                writeln!(w, "{} {}", c, self.variable_name(v))?;
            }
        }
        for row in &self.constraints {
            let name = match row.kind {
                RowKind::Link { unit, pattern, slot } => format!("link_{}_{}_{}", self.unit_ids[unit], pattern, slot),
                RowKind::OneHot { unit } => format!("onehot_{}", self.unit_ids[unit]),
                RowKind::Budget => "budget".to_string(),
                RowKind::Privilege { unit, group } => format!("privilege_{}_{}", self.unit_ids[unit], group),
            };
            let mut line = format!("{name}:");
            for &(v, c) in &row.coeffs {
                Self::term(&mut line, c, &self.variable_name(v));
            }
            writeln!(w, "{line} {} {}", row.sense.symbol(), row.rhs)?;
        }
        Ok(())
    }
}
