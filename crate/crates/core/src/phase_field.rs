//! The design variable of the relaxed problem.

use crate::error::{Error, Result};
use crate::geometry::{Mesh, RegionLabels};
use crate::scalar::Real;

/// Nodal field with `0 ≤ v ≤ 1` everywhere and `v = 1` on Ω₁ nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField<T> {
    v: Vec<T>,
}

impl<T: Real> PhaseField<T> {
    /// Wraps `v` after checking admissibility.
    pub fn new(v: Vec<T>, labels: &RegionLabels<T>) -> Result<Self> {
        if v.len() != labels.omega1_node_mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "phase field has {} values for {} nodes",
                v.len(),
                labels.omega1_node_mask.len()
            )));
        }
        for (k, &x) in v.iter().enumerate() {
            if !(x >= T::zero() && x <= T::one()) {
                return Err(Error::ConstraintViolation(format!("v[{k}] = {x} outside [0, 1]")));
            }
            if labels.is_frozen(k) && x != T::one() {
                return Err(Error::ConstraintViolation(format!("v[{k}] = {x} on omega1")));
            }
        }
        Ok(Self { v })
    }

    /// Constant `value` off Ω₁, one on Ω₁.
    pub fn uniform(labels: &RegionLabels<T>, value: T) -> Result<Self> {
        let v = labels
            .omega1_node_mask
            .iter()
            .map(|&frozen| if frozen { T::one() } else { value })
            .collect();
        Self::new(v, labels)
    }

    pub fn values(&self) -> &[T] {
        &self.v
    }

    pub fn into_inner(self) -> Vec<T> {
        self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Mean of the three nodal values on each cell.
    pub fn cell_means(&self, mesh: &Mesh<T>) -> Vec<T> {
        cell_means(mesh, &self.v)
    }
}

pub fn cell_means<T: Real>(mesh: &Mesh<T>, v: &[T]) -> Vec<T> {
    let third = T::one() / T::lit(3.0);
    mesh.triangles()
        .iter()
        .map(|t| (v[t[0]] + v[t[1]] + v[t[2]]) * third)
        .collect()
}

/// Euclidean projection onto the admissible set: clamp to `[0, 1]`, then pin Ω₁ nodes to one.
pub fn project_admissible<T: Real>(v_raw: &[T], labels: &RegionLabels<T>) -> PhaseField<T> {
    let v = v_raw
        .iter()
        .zip(&labels.omega1_node_mask)
        .map(|(&x, &frozen)| {
            if frozen {
                T::one()
            } else {
                x.max(T::zero()).min(T::one())
            }
        })
        .collect();
    PhaseField { v }
}
