//! Bounded-variable simplex for box-constrained linear programs.
//!
//! Problems are `maximize c.x` subject to rows `a.x <= b` or `a.x = b` and
//! finite bounds `l <= x <= u`. Every row gets a slack with finite bounds, so
//! any basis can be made dual feasible by moving nonbasic variables to the
//! right bound. [`Simplex::solve`] runs the primal simplex from the current
//! basis; [`Simplex::reoptimize`] runs the dual simplex from it, which also
//! serves as a cold start from the initial slack basis.
//!
//! The basis is kept as a sparse LU factorization with product-form updates,
//! refactored every few dozen pivots.

use crate::error::{Error, Result};
use crate::factor::BasisFactor;
use crate::milp::Sense;
use crate::scalar::Scalar;

/// Basis updates applied before the factorization is rebuilt.
const REFACTOR_INTERVAL: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow<T> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub rows: Vec<LpRow<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>, lower: Vec<T>, upper: Vec<T>) -> Self {
        Self { objective, rows: Vec::new(), lower, upper }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, sense: Sense, rhs: T) {
        self.rows.push(LpRow { coeffs, sense, rhs });
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Structural variable values (meaningful when optimal).
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
struct Tolerances<T> {
    primal: T,
    dual: T,
    pivot: T,
}

/// Simplex state for one linear program. Bounds of structural variables can
/// be changed between solves.
#[derive(Debug, Clone)]
pub struct Simplex<T> {
    n: usize,
    m: usize,
    // structural columns, compressed
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    // row-wise copy for slack bound computation
    rows: Vec<Vec<(usize, T)>>,
    row_sense: Vec<Sense>,
    rhs: Vec<T>,
    cost: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    x: Vec<T>,
    state: Vec<State>,
    basis: Vec<usize>,
    factor: BasisFactor<T>,
    refactor_interval: usize,
    tol: Tolerances<T>,
    iterations: usize,
}

impl<T: Scalar> Simplex<T> {
    pub fn new(lp: &LinearProgram<T>) -> Result<Self> {
        let n = lp.n_vars();
        let m = lp.rows.len();
        if lp.lower.len() != n || lp.upper.len() != n {
            return Err(Error::InvalidProblem("bound vectors do not match the variable count".into()));
        }
        for j in 0..n {
            if !lp.lower[j].is_finite() || !lp.upper[j].is_finite() || !lp.objective[j].is_finite() {
                return Err(Error::InvalidProblem(format!("variable {j} needs finite bounds and cost")));
            }
        }
        let mut counts = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, _) in &row.coeffs {
                if j >= n {
                    return Err(Error::InvalidProblem(format!("row references variable {j} of {n}")));
                }
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = counts;
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![T::zero(); nnz];
        for (r, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                col_row[fill[j]] = r;
                col_val[fill[j]] = v;
                fill[j] += 1;
            }
        }

        let total = n + m;
        let mut cost = lp.objective.clone();
        cost.resize(total, T::zero());
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        lo.resize(total, T::zero());
        hi.resize(total, T::zero());

        let identity: Vec<Vec<(usize, T)>> = (0..m).map(|r| vec![(r, T::one())]).collect();
        let factor = BasisFactor::new(m, &identity, T::zero()).map_err(|_| Error::SingularBasis)?;
        let mut state = vec![State::Lower; total];
        for (r, s) in state[n..].iter_mut().enumerate() {
            *s = State::Basic(r);
        }
        let mut simplex = Self {
            n,
            m,
            col_start,
            col_row,
            col_val,
            rows: lp.rows.iter().map(|r| r.coeffs.clone()).collect(),
            row_sense: lp.rows.iter().map(|r| r.sense).collect(),
            rhs: lp.rows.iter().map(|r| r.rhs).collect(),
            cost,
            lo,
            hi,
            x: vec![T::zero(); total],
            state,
            basis: (n..total).collect(),
            factor,
            refactor_interval: REFACTOR_INTERVAL,
            tol: Tolerances { primal: T::tolerance(1e-9), dual: T::tolerance(1e-9), pivot: T::tolerance(1e-9) },
            iterations: 0,
        };
        simplex.refresh_slack_bounds();
        for j in 0..n {
            simplex.x[j] = simplex.lo[j];
        }
        simplex.recompute_basic_values();
        Ok(simplex)
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }


    pub fn n_rows(&self) -> usize {
        self.m
    }

    pub fn lower(&self, j: usize) -> T {
        self.lo[j]
    }

    pub fn upper(&self, j: usize) -> T {
        self.hi[j]
    }

    /// Changes the bounds of a structural variable. Takes effect at the next
    /// [`reoptimize`](Self::reoptimize).
    pub fn set_bounds(&mut self, j: usize, lower: T, upper: T) {
        assert!(j < self.n, "structural variable index out of range");
        self.lo[j] = lower;
        self.hi[j] = upper;
    }

    fn refresh_slack_bounds(&mut self) {
        for r in 0..self.m {
            let s = self.n + r;
            match self.row_sense[r] {
                Sense::Eq => {
                    self.lo[s] = T::zero();
                    self.hi[s] = T::zero();
                }
                Sense::Le => {
                    let min_activity: T = self.rows[r]
                        .iter()
                        .map(|&(j, a)| if a > T::zero() { a * self.lo[j] } else { a * self.hi[j] })
                        .sum();
                    self.lo[s] = T::zero();
                    self.hi[s] = (self.rhs[r] - min_activity).max(T::zero());
                }
            }
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (start, end) = if j < self.n { (self.col_start[j], self.col_start[j + 1]) } else { (0, 0) };
        let slack = if j >= self.n { Some((j - self.n, T::one())) } else { None };
        self.col_row[start..end]
            .iter()
            .copied()
            .zip(self.col_val[start..end].iter().copied())
            .chain(slack)
    }

    fn dot_column(&self, y: &[T], j: usize) -> T {
        self.column(j).map(|(r, a)| y[r] * a).sum()
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<T> {
        let mut a = vec![T::zero(); self.m];
        for (r, v) in self.column(j) {
            a[r] = v;
        }
        self.factor.ftran(&mut a);
        a
    }

    /// Row `r` of the basis inverse as a dense vector.
    fn row_dense(&self, r: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.m];
        out[r] = T::one();
        self.factor.btran(&mut out);
        out
    }

    /// `c_B^T B^{-1}` for the given basic costs.
    fn duals(&self, basic_cost: &[T]) -> Vec<T> {
        let mut y = basic_cost.to_vec();
        self.factor.btran(&mut y);
        y
    }

    fn phase_two_duals(&self) -> Vec<T> {
        let cb: Vec<T> = self.basis.iter().map(|&b| self.cost[b]).collect();
        self.duals(&cb)
    }

    fn recompute_basic_values(&mut self) {
        let mut residual = self.rhs.clone();
        for j in 0..self.n + self.m {
            if matches!(self.state[j], State::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v != T::zero() {
                for (r, a) in self.column(j) {
                    residual[r] -= a * v;
                }
            }
        }
        self.factor.ftran(&mut residual);
        for (r, v) in residual.into_iter().enumerate() {
            self.x[self.basis[r]] = v;
        }
    }

    /// Factors the current basis afresh, dropping accumulated updates.
    fn refactor(&mut self) -> Result<()> {
        let columns: Vec<Vec<(usize, T)>> = self.basis.iter().map(|&j| self.column(j).collect()).collect();
        let scale = columns.iter().flatten().map(|e| e.1.abs()).fold(T::one(), T::max);
        self.factor = BasisFactor::new(self.m, &columns, self.tol.pivot * scale).map_err(|_| Error::SingularBasis)?;
        Ok(())
    }

    /// Swaps `entering` into the basis at row `r`, given `alpha = B^{-1} a_entering`.
    fn pivot(&mut self, r: usize, entering: usize, alpha: &[T], leaving_state: State) -> Result<()> {
        let leaving = self.basis[r];
        self.factor.update(r, alpha);
        self.basis[r] = entering;
        self.state[entering] = State::Basic(r);
        self.state[leaving] = leaving_state;
        self.x[leaving] = match leaving_state {
            State::Upper => self.hi[leaving],
            _ => self.lo[leaving],
        };
        if self.factor.updates() >= self.refactor_interval {
            self.refactor()?;
            self.recompute_basic_values();
        }
        Ok(())
    }

    fn iteration_limit(&self) -> usize {
        100 * (self.n + self.m) + 10_000
    }

    fn bland_after(&self) -> usize {
        10 * (self.n + self.m)
    }

    fn objective_value(&self) -> T {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    fn solution(&self, status: LpStatus) -> LpSolution<T> {
        LpSolution {
            status,
            x: self.x[..self.n].to_vec(),
            objective: self.objective_value(),
            iterations: self.iterations,
        }
    }

    fn infeasibility(&self, j: usize) -> T {
        let v = self.x[j];
        if v < self.lo[j] - self.tol.primal {
            self.lo[j] - v
        } else if v > self.hi[j] + self.tol.primal {
            v - self.hi[j]
        } else {
            T::zero()
        }
    }

    /// Cold solve from the current basis with the primal simplex (a
    /// sum-of-infeasibilities phase one, then phase two).
    pub fn solve(&mut self) -> Result<LpSolution<T>> {
        self.iterations = 0;
        self.refresh_slack_bounds();
        for j in 0..self.n + self.m {
            match self.state[j] {
                State::Lower => self.x[j] = self.lo[j],
                State::Upper => self.x[j] = self.hi[j],
                State::Basic(_) => {}
            }
        }
        self.recompute_basic_values();
        let status = self.primal()?;
        Ok(self.solution(status))
    }

    fn primal(&mut self) -> Result<LpStatus> {
        let start = self.iterations;
        loop {
            self.iterations += 1;
            let local = self.iterations - start;
            if local > self.iteration_limit() {
                return Err(Error::IterationLimit(self.iteration_limit()));
            }
            let bland = local > self.bland_after();

            let mut phase_one = false;
            let basic_cost: Vec<T> = self
                .basis
                .iter()
                .map(|&b| {
                    if self.x[b] < self.lo[b] - self.tol.primal {
                        phase_one = true;
                        T::one()
                    } else if self.x[b] > self.hi[b] + self.tol.primal {
                        phase_one = true;
                        -T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let y = if phase_one { self.duals(&basic_cost) } else { self.phase_two_duals() };

            let mut entering: Option<(usize, T)> = None;
            for j in 0..self.n + self.m {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.hi[j] - self.lo[j] <= self.tol.primal {
                    continue;
                }
                let c = if phase_one { T::zero() } else { self.cost[j] };
                let d = c - self.dot_column(&y, j);
                let improving = match st {
                    State::Lower => d > self.tol.dual,
                    State::Upper => d < -self.tol.dual,
                    State::Basic(_) => false,
                };
                if !improving {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, _)) = entering else {
                return Ok(if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal });
            };

            let dir = if self.state[q] == State::Lower { T::one() } else { -T::one() };
            let alpha = self.ftran(q);
            let mut step = self.hi[q] - self.lo[q];
            let mut best: Option<(usize, State, T)> = None;
            for (r, &a) in alpha.iter().enumerate() {
                if a.abs() <= self.tol.pivot {
                    continue;
                }
                let b = self.basis[r];
                let rate = -dir * a;
                let xb = self.x[b];
                let limit = if phase_one && xb < self.lo[b] - self.tol.primal {
                    (rate > T::zero()).then(|| ((self.lo[b] - xb) / rate, State::Lower))
                } else if phase_one && xb > self.hi[b] + self.tol.primal {
                    (rate < T::zero()).then(|| ((xb - self.hi[b]) / -rate, State::Upper))
                } else if rate < T::zero() {
                    Some((((xb - self.lo[b]) / -rate).max(T::zero()), State::Lower))
                } else {
                    Some((((self.hi[b] - xb) / rate).max(T::zero()), State::Upper))
                };
                let Some((t, side)) = limit else { continue };
                let replace = match best {
                    None => true,
                    Some((lr, _, lt)) => {
                        t < lt - self.tol.primal
                            || (t <= lt + self.tol.primal
                                && if bland { b < self.basis[lr] } else { a.abs() > alpha[lr].abs() })
                    }
                };
                if replace {
                    best = Some((r, side, t));
                }
            }
            let leave = match best {
                Some((r, side, t)) if t < step => {
                    step = t;
                    Some((r, side))
                }
                _ => None,
            };

            self.x[q] += dir * step;
            for (r, &a) in alpha.iter().enumerate() {
                if a != T::zero() {
                    let b = self.basis[r];
                    self.x[b] -= dir * a * step;
                }
            }
            match leave {
                None => {
                    self.state[q] = if self.state[q] == State::Lower { State::Upper } else { State::Lower };
                    self.x[q] = if self.state[q] == State::Upper { self.hi[q] } else { self.lo[q] };
                }
                Some((r, side)) => self.pivot(r, q, &alpha, side)?,
            }
        }
    }

    /// Re-solves after bound changes with the dual simplex, falling back to
    /// the primal simplex if the result is not dual feasible.
    pub fn reoptimize(&mut self) -> Result<LpSolution<T>> {
        self.iterations = 0;
        self.refresh_slack_bounds();
        let y = self.phase_two_duals();
        for j in 0..self.n + self.m {
            if matches!(self.state[j], State::Basic(_)) {
                continue;
            }
            let d = self.cost[j] - self.dot_column(&y, j);
            let st = if self.hi[j] - self.lo[j] <= T::zero() {
                State::Lower
            } else if d > self.tol.dual {
                State::Upper
            } else if d < -self.tol.dual {
                State::Lower
            } else {
                self.state[j]
            };
            self.state[j] = st;
            self.x[j] = if st == State::Upper { self.hi[j] } else { self.lo[j] };
        }
        self.recompute_basic_values();
        match self.dual()? {
            LpStatus::Infeasible => Ok(self.solution(LpStatus::Infeasible)),
            LpStatus::Optimal => {
                let status = self.primal()?;
                Ok(self.solution(status))
            }
        }
    }

    fn dual(&mut self) -> Result<LpStatus> {
        let total = self.n + self.m;
        let y = self.phase_two_duals();
        let mut d: Vec<T> = (0..total)
            .map(|j| if matches!(self.state[j], State::Basic(_)) { T::zero() } else { self.cost[j] - self.dot_column(&y, j) })
            .collect();
        let start = self.iterations;
        loop {
            self.iterations += 1;
            let local = self.iterations - start;
            if local > self.iteration_limit() {
                return Err(Error::IterationLimit(self.iteration_limit()));
            }
            let bland = local > self.bland_after();

            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.m {
                let b = self.basis[r];
                let v = self.infeasibility(b);
                if v <= T::zero() {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((lr, lv)) => {
                        if bland {
                            b < self.basis[lr]
                        } else {
                            v > lv
                        }
                    }
                };
                if better {
                    leave = Some((r, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let rho = self.row_dense(r);

            let mut alpha_row = vec![T::zero(); total];
            let mut entering: Option<(usize, T, T)> = None; // (var, alpha_r, ratio)
            for j in 0..total {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) {
                    continue;
                }
                let a = self.dot_column(&rho, j);
                alpha_row[j] = a;
                if self.hi[j] - self.lo[j] <= T::zero() || a.abs() <= self.tol.pivot {
                    continue;
                }
                let eligible = match (below, st) {
                    (true, State::Lower) => a < T::zero(),
                    (true, State::Upper) => a > T::zero(),
                    (false, State::Lower) => a > T::zero(),
                    (false, State::Upper) => a < T::zero(),
                    _ => false,
                };
                if !eligible {
                    continue;
                }
                let ratio = (d[j] / a).abs();
                let better = match entering {
                    None => true,
                    Some((ej, ea, er)) => {
                        ratio < er - self.tol.dual
                            || (ratio <= er + self.tol.dual && if bland { j < ej } else { a.abs() > ea.abs() })
                    }
                };
                if better {
                    entering = Some((j, a, ratio));
                }
            }
            let Some((q, alpha_rq, _)) = entering else {
                return Ok(LpStatus::Infeasible);
            };

            let alpha = self.ftran(q);
            let target = if below { self.lo[b] } else { self.hi[b] };
            let delta = (self.x[b] - target) / alpha_rq;
            self.x[q] += delta;
            for (i, &a) in alpha.iter().enumerate() {
                if a != T::zero() {
                    let bi = self.basis[i];
                    self.x[bi] -= delta * a;
                }
            }
            let theta = d[q] / alpha_rq;
            for j in 0..total {
                if matches!(self.state[j], State::Basic(_)) || j == q {
                    continue;
                }
                if alpha_row[j] != T::zero() {
                    d[j] -= theta * alpha_row[j];
                }
            }
            d[q] = T::zero();
            d[b] = -theta;
            let side = if below { State::Lower } else { State::Upper };
            let before = self.factor.updates();
            self.pivot(r, q, &alpha, side)?;
            if self.factor.updates() < before {
                let y = self.phase_two_duals();
                for j in 0..total {
                    d[j] = if matches!(self.state[j], State::Basic(_)) {
                        T::zero()
                    } else {
                        self.cost[j] - self.dot_column(&y, j)
                    };
                }
            }
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    Simplex::new(lp)?.solve()
}
