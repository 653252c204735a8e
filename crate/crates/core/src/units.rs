//! Population primitives: group labels, units and neighbor intervention patterns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered set of protected-group labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDomain {
    labels: Vec<String>,
}

impl GroupDomain {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if labels.len() < 2 || sorted.len() != labels.len() {
            return Err(Error::GroupDomain(labels));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Result<&str> {
        self.labels
            .get(index)
            .map(String::as_str)
            .ok_or(Error::GroupOutOfRange { index, size: self.labels.len() })
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn check(&self, index: usize) -> Result<()> {
        if index < self.labels.len() {
            Ok(())
        } else {
            Err(Error::GroupOutOfRange { index, size: self.labels.len() })
        }
    }
}

/// One individual (a school, a household): factual group, features, the
/// subset of features that are non-descendants of the group, and optional
/// planar coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit<T> {
    pub id: String,
    pub group: usize,
    pub features: Vec<T>,
    pub prec_mask: Vec<bool>,
    pub coords: Option<[T; 2]>,
}

impl<T: Scalar> Unit<T> {
    /// Unit whose features are all marked as non-descendants.
    pub fn new(id: impl Into<String>, group: usize, features: Vec<T>) -> Self {
        let prec_mask = vec![true; features.len()];
        Self { id: id.into(), group, features, prec_mask, coords: None }
    }

    pub fn with_coords(mut self, x: T, y: T) -> Self {
        self.coords = Some([x, y]);
        self
    }

    pub fn with_prec_mask(mut self, mask: Vec<bool>) -> Self {
        self.prec_mask = mask;
        self
    }

    pub fn validate(&self, groups: &GroupDomain) -> Result<()> {
        let invalid = |reason: String| Error::InvalidUnit { unit: self.id.clone(), reason };
        if self.prec_mask.len() != self.features.len() {
            return Err(invalid(format!(
                "prec_mask has length {}, features have length {}",
                self.prec_mask.len(),
                self.features.len()
            )));
        }
        if self.group >= groups.len() {
            return Err(invalid(format!("group index {} outside domain of size {}", self.group, groups.len())));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite feature".into()));
        }
        if let Some(c) = self.coords {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(invalid("non-finite coordinates".into()));
            }
        }
        Ok(())
    }

    /// Value of feature `index` visible to the restricted (non-descendant) model.
    pub fn prec_feature(&self, index: usize) -> Option<T> {
        match self.prec_mask.get(index) {
            Some(true) => self.features.get(index).copied(),
            _ => None,
        }
    }
}

/// Interventions received by a unit's neighbors, in neighbor-list order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeighborPattern {
    pub bits: Vec<bool>,
}

impl NeighborPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    /// Pattern at position `index` of the lexicographic enumeration of all
    /// `len`-bit vectors (slot 0 is the most significant bit).
    pub fn from_index(index: usize, len: usize) -> Self {
        let bits = (0..len).map(|k| (index >> (len - 1 - k)) & 1 == 1).collect();
        Self { bits }
    }

    /// Position in the lexicographic enumeration; inverse of [`from_index`](Self::from_index).
    pub fn index(&self) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}
