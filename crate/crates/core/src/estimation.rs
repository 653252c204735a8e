//! Group-wise least-squares fit of the max-interference model, which is the
//! maximum-likelihood fit under Gaussian noise.
//!
//! The first regressor uses the observed `calculus` indicator of each
//! neighbor, i.e. the pre-intervention world.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InterferenceGraph;
use crate::outcome::SemParams;
use crate::scalar::Scalar;

pub const REGRESSORS: [&str; 4] = ["alpha", "beta", "gamma", "theta"];

/// Pivots below this fraction of the largest pivot signal rank deficiency.
pub const RANK_TOL: f64 = 1e-10;

/// Observational data for the fit, one entry per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDataset<T> {
    pub groups: Vec<usize>,
    /// Group labels, indexed by the entries of `groups`.
    pub labels: Vec<String>,
    pub ap_ib: Vec<T>,
    pub counselors: Vec<T>,
    pub calculus: Vec<T>,
    pub outcome: Vec<T>,
    pub graph: InterferenceGraph<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub params: SemParams<T>,
    /// Mean squared residual per group.
    pub residual_variance: Vec<T>,
    pub n_per_group: Vec<usize>,
    /// Classical OLS standard errors `sqrt(rss / (n - 4) * diag((X'X)^-1))`
    /// per group, in `alpha, beta, gamma, theta` order; `None` for a group
    /// with exactly four units.
    pub standard_errors: Vec<Option<[T; 4]>>,
}

fn indicator<T: Scalar>(name: &str, values: &[T]) -> Result<()> {
    match values.iter().position(|&v| v != T::zero() && v != T::one()) {
        Some(i) => Err(Error::FitData(format!("{name} of unit {i} is {}, expected 0 or 1", values[i]))),
        None => Ok(()),
    }
}

impl<T: Scalar> FitDataset<T> {
    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.groups.len();
        let columns = [
            ("ap_ib", self.ap_ib.len()),
            ("counselors", self.counselors.len()),
            ("calculus", self.calculus.len()),
            ("outcome", self.outcome.len()),
            ("graph", self.graph.len()),
        ];
        if let Some((name, len)) = columns.iter().find(|(_, len)| *len != n) {
            return Err(Error::FitData(format!("{name} has {len} entries, expected {n}")));
        }
        if let Some(&g) = self.groups.iter().find(|&&g| g >= self.n_groups()) {
            return Err(Error::GroupOutOfRange { index: g, size: self.n_groups() });
        }
        indicator("ap_ib", &self.ap_ib)?;
        indicator("calculus", &self.calculus)?;
        if let Some(i) = self.counselors.iter().position(|&f| !f.is_finite() || f < T::zero()) {
            return Err(Error::FitData(format!("counselors of unit {i} must be finite and non-negative")));
        }
        if let Some(i) = self.outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::FitData(format!("outcome of unit {i} is not finite")));
        }
        Ok(())
    }

    /// Regressor row `[max treated s, max s * p, f, 1]` of unit `i`.
    pub fn regressors(&self, i: usize) -> [T; 4] {
        let mut treated = T::zero();
        let mut ap = None::<T>;
        for (&j, &s) in self.graph.neighbors(i).iter().zip(self.graph.similarities(i)) {
            if self.calculus[j] == T::one() {
                treated = treated.max(s);
            }
            let v = s * self.ap_ib[j];
            ap = Some(ap.map_or(v, |b: T| b.max(v)));
        }
        [treated, ap.unwrap_or_else(T::zero), self.counselors[i], T::one()]
    }
}

/// Fits `(alpha, beta, gamma, theta)` separately for every group.
pub fn fit_max_interference<T: Scalar>(data: &FitDataset<T>) -> Result<FitResult<T>> {
    data.validate()?;
    let mut params = SemParams::zeros(data.n_groups());
    let mut residual_variance = vec![T::zero(); data.n_groups()];
    let mut n_per_group = vec![0; data.n_groups()];
    let mut standard_errors = vec![None; data.n_groups()];
    for a in 0..data.n_groups() {
        let members: Vec<usize> = (0..data.len()).filter(|&i| data.groups[i] == a).collect();
        n_per_group[a] = members.len();
        if members.len() < REGRESSORS.len() {
            return Err(Error::TooFewUnits { group: data.labels[a].clone(), count: members.len(), needed: REGRESSORS.len() });
        }
        let x: Vec<[T; 4]> = members.iter().map(|&i| data.regressors(i)).collect();
        let y: Vec<T> = members.iter().map(|&i| data.outcome[i]).collect();
        let fit = least_squares(&x, &y).map_err(|cols| Error::RankDeficient {
            group: data.labels[a].clone(),
            regressors: cols.iter().map(|&c| REGRESSORS[c].to_string()).collect(),
        })?;
        params.set_group(a, fit.coef);
        let m = T::of(members.len() as f64);
        residual_variance[a] = fit.rss / m;
        if members.len() > REGRESSORS.len() {
            let s2 = fit.rss / (m - T::of(REGRESSORS.len() as f64));
            standard_errors[a] = Some(std::array::from_fn(|k| (s2 * fit.inverse_diag[k]).max(T::zero()).sqrt()));
        }
    }
    Ok(FitResult { params, residual_variance, n_per_group, standard_errors })
}

struct LeastSquares<T> {
    coef: [T; 4],
    rss: T,
    inverse_diag: [T; 4],
}

/// Pivoted Cholesky factor `P' A P = L L'` of a small symmetric matrix.
struct Cholesky<T, const P: usize> {
    l: [[T; P]; P],
    perm: [usize; P],
}

impl<T: Scalar, const P: usize> Cholesky<T, P> {
    /// Errs with the original indices of the columns left unpivoted once a
    /// pivot falls below `RANK_TOL` times the largest one.
    fn factor(mut a: [[T; P]; P]) -> std::result::Result<Self, Vec<usize>> {
        let mut perm: [usize; P] = std::array::from_fn(|k| k);
        let mut l = [[T::zero(); P]; P];
        let mut largest = T::zero();
        for k in 0..P {
            let (best, pivot) = (k..P).map(|r| (r, a[r][r])).fold((k, T::neg_infinity()), |acc, (r, v)| {
                if v > acc.1 { (r, v) } else { acc }
            });
            if k == 0 {
                largest = pivot;
            }
            if !(pivot > T::of(RANK_TOL) * largest) || !(largest > T::zero()) {
                let mut cols: Vec<usize> = perm[k..].to_vec();
                cols.sort_unstable();
                return Err(cols);
            }
            a.swap(k, best);
            for row in a.iter_mut() {
                row.swap(k, best);
            }
            l.swap(k, best);
            perm.swap(k, best);
            let d = pivot.sqrt();
            l[k][k] = d;
            for r in k + 1..P {
                l[r][k] = a[r][k] / d;
            }
            for r in k + 1..P {
                for c in k + 1..=r {
                    a[r][c] -= l[r][k] * l[c][k];
                    a[c][r] = a[r][c];
                }
            }
        }
        Ok(Self { l, perm })
    }

    fn solve(&self, b: [T; P]) -> [T; P] {
        let mut y: [T; P] = std::array::from_fn(|k| b[self.perm[k]]);
        for k in 0..P {
            for c in 0..k {
                let v = self.l[k][c] * y[c];
                y[k] -= v;
            }
            y[k] /= self.l[k][k];
        }
        for k in (0..P).rev() {
            for r in k + 1..P {
                let v = self.l[r][k] * y[r];
                y[k] -= v;
            }
            y[k] /= self.l[k][k];
        }
        let mut x = [T::zero(); P];
        for k in 0..P {
            x[self.perm[k]] = y[k];
        }
        x
    }
}

/// Ordinary least squares through column-equilibrated normal equations,
/// with one round of iterative refinement.
fn least_squares<T: Scalar>(x: &[[T; 4]], y: &[T]) -> std::result::Result<LeastSquares<T>, Vec<usize>> {
    let norms: [T; 4] = std::array::from_fn(|c| x.iter().map(|r| r[c] * r[c]).sum::<T>().sqrt());
    let zero: Vec<usize> = (0..4).filter(|&c| !(norms[c] > T::zero())).collect();
    if !zero.is_empty() {
        return Err(zero);
    }
    let scaled: Vec<[T; 4]> = x.iter().map(|r| std::array::from_fn(|c| r[c] / norms[c])).collect();
    let mut gram = [[T::zero(); 4]; 4];
    for r in &scaled {
        for a in 0..4 {
            for b in 0..4 {
                gram[a][b] += r[a] * r[b];
            }
        }
    }
    let chol = Cholesky::factor(gram)?;
    let xty = |res: &[T]| -> [T; 4] { std::array::from_fn(|c| scaled.iter().zip(res).map(|(r, v)| r[c] * *v).sum()) };
    let residuals = |b: &[T; 4]| -> Vec<T> {
        scaled.iter().zip(y).map(|(r, &yi)| yi - r.iter().zip(b).map(|(a, c)| *a * *c).sum::<T>()).collect()
    };
    let mut b = chol.solve(xty(y));
    let correction = chol.solve(xty(&residuals(&b)));
    for (bk, ck) in b.iter_mut().zip(correction) {
        *bk += ck;
    }
    let rss = residuals(&b).iter().map(|r| *r * *r).sum();
    let inverse_diag = std::array::from_fn(|c| {
        let mut e = [T::zero(); 4];
        e[c] = T::one();
        chol.solve(e)[c] / (norms[c] * norms[c])
    });
    Ok(LeastSquares { coef: std::array::from_fn(|c| b[c] / norms[c]), rss, inverse_diag })
}
