//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! `B = L U` is computed by right-looking Gaussian elimination with a
//! Markowitz-style pivot choice (sparsest column first, then the sparsest
//! row among entries within a threshold of the column's largest). Basis
//! changes append eta transformations; callers refactor periodically.
//!
//! Vectors indexed by basis position (`x` in `B x = a`) and by constraint row
//! (`y` in `y' B = d'`) share the dimension `m`.

use crate::scalar::Scalar;

/// Entries below this fraction of their column's largest are not pivots.
const PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone)]
struct Step<T> {
    row: usize,
    col: usize,
    pivot: T,
    /// Off-pivot entries of the pivot row of `U`, by column.
    urow: Vec<(usize, T)>,
    /// Row multipliers applied when eliminating this pivot, by row.
    lcol: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
struct Eta<T> {
    pos: usize,
    pivot: T,
    others: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BasisFactor<T> {
    m: usize,
    steps: Vec<Step<T>>,
    etas: Vec<Eta<T>>,
}

/// Raised when no acceptable pivot is left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular;

impl<T: Scalar> BasisFactor<T> {
    /// Factors the square matrix whose column `c` is `columns[c]`, given as
    /// `(row, value)` pairs. Entries at or below `tiny` in magnitude never
    /// serve as pivots.
    pub(crate) fn new(m: usize, columns: &[Vec<(usize, T)>], tiny: T) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                if v != T::zero() {
                    rows[r].push((c, v));
                    cols[c].push(r);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_count: Vec<usize> = cols.iter().map(Vec::len).collect();
        let mut work = vec![T::zero(); m];
        let mut mark = vec![false; m];
        let mut steps = Vec::with_capacity(m);
        let threshold = T::of(PIVOT_THRESHOLD);

        for _ in 0..m {
            let col = (0..m)
                .filter(|&c| !col_done[c])
                .min_by_key(|&c| (col_count[c], c))
                .ok_or(Singular)?;
            let entries: Vec<(usize, T)> = cols[col]
                .iter()
                .filter(|&&r| !row_done[r])
                .filter_map(|&r| rows[r].iter().find(|e| e.0 == col).map(|e| (r, e.1)))
                .collect();
            let largest = entries.iter().map(|e| e.1.abs()).fold(T::zero(), T::max);
            if largest <= tiny {
                return Err(Singular);
            }
            let (row, pivot) = entries
                .iter()
                .filter(|e| e.1.abs() >= threshold * largest)
                .min_by_key(|e| (rows[e.0].len(), e.0))
                .copied()
                .ok_or(Singular)?;

            row_done[row] = true;
            col_done[col] = true;
            let prow = std::mem::take(&mut rows[row]);
            for &(c, _) in &prow {
                col_count[c] -= 1;
            }
            let mut lcol = Vec::new();
            for &(i, a) in &entries {
                if i == row {
                    continue;
                }
                let l = a / pivot;
                lcol.push((i, l));
                let target = &mut rows[i];
                target.retain(|e| e.0 != col);
                col_count[col] -= 1;
                for &(c, v) in target.iter() {
                    work[c] = v;
                    mark[c] = true;
                }
                for &(c, v) in &prow {
                    if c == col {
                        continue;
                    }
                    if !mark[c] {
                        mark[c] = true;
                        target.push((c, T::zero()));
                        cols[c].push(i);
                        col_count[c] += 1;
                    }
                    work[c] -= l * v;
                }
                for e in target.iter_mut() {
                    e.1 = work[e.0];
                    work[e.0] = T::zero();
                    mark[e.0] = false;
                }
            }
            let urow = prow.into_iter().filter(|&(c, v)| c != col && v != T::zero()).collect();
            steps.push(Step { row, col, pivot, urow, lcol });
        }
        Ok(Self { m, steps, etas: Vec::new() })
    }

    pub(crate) fn updates(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = a` in place (`a` by row in, `x` by position out).
    pub(crate) fn ftran(&self, a: &mut Vec<T>) {
        for s in &self.steps {
            let v = a[s.row];
            if v != T::zero() {
                for &(i, l) in &s.lcol {
                    a[i] -= l * v;
                }
            }
        }
        let mut x = vec![T::zero(); self.m];
        for s in self.steps.iter().rev() {
            let mut v = a[s.row];
            for &(c, u) in &s.urow {
                v -= u * x[c];
            }
            x[s.col] = v / s.pivot;
        }
        for e in &self.etas {
            let xp = x[e.pos] / e.pivot;
            if xp != T::zero() {
                for &(i, a) in &e.others {
                    x[i] -= a * xp;
                }
            }
            x[e.pos] = xp;
        }
        *a = x;
    }

    /// Solves `y' B = d'` in place (`d` by position in, `y` by row out).
    pub(crate) fn btran(&self, d: &mut Vec<T>) {
        for e in self.etas.iter().rev() {
            let mut v = d[e.pos];
            for &(i, a) in &e.others {
                v -= a * d[i];
            }
            d[e.pos] = v / e.pivot;
        }
        let mut y = vec![T::zero(); self.m];
        for s in &self.steps {
            let v = d[s.col] / s.pivot;
            y[s.row] = v;
            if v != T::zero() {
                for &(c, u) in &s.urow {
                    d[c] -= v * u;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut v = y[s.row];
            for &(i, l) in &s.lcol {
                v -= l * y[i];
            }
            y[s.row] = v;
        }
        *d = y;
    }

    /// Records that position `pos` now holds a column with `alpha = B^{-1} a`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[T]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, v)| i != pos && *v != T::zero())
            .map(|(i, v)| (i, *v))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], others });
    }
}
