//! Interference neighborhoods: who can be affected by whose intervention.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::{NeighborPattern, Unit};

/// Per-unit ordered neighbor lists `N(i)` with aligned similarities `s(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph<T> {
    neighbors: Vec<Vec<usize>>,
    similarities: Vec<Vec<T>>,
    k: usize,
}

/// Options for [`build_knn_graph`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnOptions {
    pub k: usize,
    pub include_self: bool,
    /// Similarity assigned to self edges and zero-distance pairs, as a
    /// multiple of the largest finite similarity among the graph's edges.
    pub self_cap_factor: f64,
}

impl KnnOptions {
    pub fn new(k: usize, include_self: bool) -> Self {
        Self { k, include_self, self_cap_factor: 2.0 }
    }
}

impl<T: Scalar> InterferenceGraph<T> {
    /// Graph from explicit lists. Fails if lists are misaligned, indices are
    /// out of range or repeated, similarities are negative or non-finite, or a
    /// list is longer than `k`.
    pub fn from_lists(neighbors: Vec<Vec<usize>>, similarities: Vec<Vec<T>>, k: usize) -> Result<Self> {
        let n = neighbors.len();
        if similarities.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} neighbor lists but {} similarity lists",
                n,
                similarities.len()
            )));
        }
        for (i, (nb, sim)) in neighbors.iter().zip(&similarities).enumerate() {
            if nb.len() != sim.len() {
                return Err(Error::InvalidGraph(format!("unit {i}: neighbor and similarity lengths differ")));
            }
            if nb.len() > k {
                return Err(Error::InvalidGraph(format!("unit {i}: {} neighbors exceeds k = {k}", nb.len())));
            }
            for (pos, &j) in nb.iter().enumerate() {
                if j >= n {
                    return Err(Error::InvalidGraph(format!("unit {i}: neighbor index {j} out of range")));
                }
                if nb[..pos].contains(&j) {
                    return Err(Error::InvalidGraph(format!("unit {i}: neighbor {j} listed twice")));
                }
            }
            if sim.iter().any(|s| !s.is_finite() || *s < T::zero()) {
                return Err(Error::InvalidGraph(format!("unit {i}: similarities must be finite and non-negative")));
            }
        }
        Ok(Self { neighbors, similarities, k })
    }

    /// Every unit is its own only neighbor, with similarity one.
    pub fn isolated(n: usize) -> Self {
        Self {
            neighbors: (0..n).map(|i| vec![i]).collect(),
            similarities: vec![vec![T::one()]; n],
            k: 1,
        }
    }

    /// Every unit neighbors every unit (itself first), similarity one.
    pub fn complete(n: usize) -> Self {
        let neighbors = (0..n)
            .map(|i| std::iter::once(i).chain((0..n).filter(|&j| j != i)).collect())
            .collect();
        Self { neighbors, similarities: vec![vec![T::one(); n]; n], k: n }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn similarities(&self, i: usize) -> &[T] {
        &self.similarities[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Number of neighbor lists that contain `j`.
    pub fn in_degree(&self, j: usize) -> usize {
        self.neighbors.iter().filter(|nb| nb.contains(&j)).count()
    }

    /// Slot of unit `i` in its own neighbor list, if present.
    pub fn self_slot(&self, i: usize) -> Option<usize> {
        self.neighbors[i].iter().position(|&j| j == i)
    }

    /// Extracts `z_{N(i)}` from the global allocation vector.
    pub fn neighbor_pattern(&self, z: &[bool], i: usize) -> Result<NeighborPattern> {
        if z.len() != self.len() {
            return Err(Error::AllocationLength { got: z.len(), expected: self.len() });
        }
        let nb = self
            .neighbors
            .get(i)
            .ok_or(Error::UnitOutOfRange { index: i, n: self.len() })?;
        Ok(NeighborPattern::new(nb.iter().map(|&j| z[j]).collect()))
    }
}

fn distance<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// k-nearest-neighbor graph over unit coordinates with inverse-distance
/// similarities.
///
/// Neighbors are ordered nearest first with distance ties broken by lower
/// unit index; with `include_self` the unit itself always occupies slot 0.
/// Self edges and zero-distance pairs get `self_cap_factor` times the largest
/// finite inverse distance in the graph.
pub fn build_knn_graph<T: Scalar>(units: &[Unit<T>], opts: KnnOptions) -> Result<InterferenceGraph<T>> {
    let n = units.len();
    if opts.k == 0 || opts.k > n {
        return Err(Error::NeighborhoodSize { k: opts.k, n });
    }
    let coords: Vec<[T; 2]> = units
        .iter()
        .map(|u| u.coords.ok_or_else(|| Error::MissingCoordinates(u.id.clone())))
        .collect::<Result<_>>()?;

    let mut neighbors = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(T, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (distance(coords[i], coords[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut nb = Vec::with_capacity(opts.k);
        let mut dist = Vec::with_capacity(opts.k);
        if opts.include_self {
            nb.push(i);
            dist.push(T::zero());
        }
        for (d, j) in others.into_iter().take(opts.k - nb.len()) {
            nb.push(j);
            dist.push(d);
        }
        neighbors.push(nb);
        distances.push(dist);
    }

    let max_finite = distances
        .iter()
        .flatten()
        .filter(|d| **d > T::zero())
        .map(|d| d.recip())
        .filter(|s| s.is_finite())
        .fold(T::zero(), T::max);
    let base = if max_finite > T::zero() { max_finite } else { T::one() };
    let cap = base * T::of(opts.self_cap_factor);

    let similarities = distances
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|d| {
                    let s = d.recip();
                    if d > T::zero() && s.is_finite() {
                        s
                    } else {
                        cap
                    }
                })
                .collect()
        })
        .collect();
    InterferenceGraph::from_lists(neighbors, similarities, opts.k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Unit<f64>> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| Unit::new(format!("u{i}"), 0, vec![]).with_coords(x, 0.0))
            .collect()
    }

    #[test]
    fn collinear_units() {
        let g = build_knn_graph(&line(&[0.0, 1.0, 3.0]), KnnOptions::new(2, false)).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.similarities(0), &[1.0, 1.0 / 3.0]);
        assert_eq!(g.neighbors(2), &[1, 0]);
        assert_eq!(g.similarities(2), &[0.5, 1.0 / 3.0]);
    }

    #[test]
    fn full_graph_with_self_is_a_permutation() {
        let g = build_knn_graph(&line(&[0.0, 2.0, 5.0, 9.0]), KnnOptions::new(4, true)).unwrap();
        for i in 0..4 {
            let mut nb = g.neighbors(i).to_vec();
            assert_eq!(nb[0], i);
            nb.sort();
            assert_eq!(nb, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn duplicate_coordinates_get_capped_similarity() {
        let g = build_knn_graph(&line(&[0.0, 0.0, 2.0]), KnnOptions::new(2, false)).unwrap();
        // largest finite similarity is 1/2, so the cap is 1
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.similarities(0), &[1.0, 0.5]);
        let g = build_knn_graph(&line(&[0.0, 0.0, 2.0]), KnnOptions::new(2, true)).unwrap();
        assert_eq!(g.similarities(2), &[1.0, 0.5]);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let g = build_knn_graph(&line(&[0.0, -1.0, 1.0]), KnnOptions::new(1, false)).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn errors() {
        let mut units = line(&[0.0, 1.0]);
        assert!(matches!(
            build_knn_graph(&units, KnnOptions::new(0, true)),
            Err(Error::NeighborhoodSize { .. })
        ));
        assert!(build_knn_graph(&units, KnnOptions::new(3, true)).is_err());
        units[1].coords = None;
        assert!(matches!(
            build_knn_graph(&units, KnnOptions::new(1, true)),
            Err(Error::MissingCoordinates(_))
        ));
    }

    #[test]
    fn neighbor_patterns() {
        let g = InterferenceGraph::<f64>::from_lists(vec![vec![2, 0], vec![1], vec![2]], vec![vec![1.0, 1.0], vec![1.0], vec![1.0]], 2)
            .unwrap();
        assert_eq!(g.neighbor_pattern(&[true, false, false], 0).unwrap().bits, vec![false, true]);
        assert_eq!(g.neighbor_pattern(&[false; 3], 0).unwrap().bits, vec![false, false]);
        assert_eq!(g.neighbor_pattern(&[true; 3], 0).unwrap().bits, vec![true, true]);
        assert!(g.neighbor_pattern(&[true; 2], 0).is_err());
    }

    #[test]
    fn from_lists_validation() {
        assert!(InterferenceGraph::<f64>::from_lists(vec![vec![0, 0]], vec![vec![1.0, 1.0]], 2).is_err());
        assert!(InterferenceGraph::<f64>::from_lists(vec![vec![1]], vec![vec![1.0]], 1).is_err());
        assert!(InterferenceGraph::<f64>::from_lists(vec![vec![0]], vec![vec![-1.0]], 1).is_err());
    }
}
