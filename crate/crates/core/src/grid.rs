//! Graded finite-volume grids in the polar angle `θ ∈ [0, π]` and fields
//! sampled on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sphere_area;
use crate::quadrature::{integrate, QuadratureSpec};

/// Cells `[faces[i], faces[i+1]]` with one node each. Volumes carry the
/// weight `ω_{n-1} sin^{n-1}θ`, so they sum to the volume of `S^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: u32,
    pub nodes: Vec<f64>,
    pub faces: Vec<f64>,
    pub volumes: Vec<f64>,
    /// `ω_{n-1} sin^{n-1}(θ_face) / (θ_{i+1} - θ_i)` for the interior face
    /// between nodes `i` and `i + 1`.
    pub face_weights: Vec<f64>,
}

/// Parameters of the map `θ = a sinh(b ξ)`, `ξ ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grading {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
}

impl Grading {
    /// Clustering at scale `δ/20` near the pole.
    pub fn for_scale(delta: f64, cells: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < std::f64::consts::PI) {
            return Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in (0, π), got {delta}") });
        }
        if cells < 16 {
            return Err(Error::InvalidParameter { name: "cells", reason: "need at least 16 cells".into() });
        }
        let a = delta / 20.0;
        Ok(Self { a, b: (std::f64::consts::PI / a).asinh(), cells })
    }

    fn theta(&self, xi: f64) -> f64 {
        (self.a * (self.b * xi).sinh()).min(std::f64::consts::PI)
    }

    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..*self }
    }
}

fn sin_pow(n: u32, theta: f64) -> f64 {
    theta.sin().max(0.0).powi(n as i32 - 1)
}

impl Grid {
    pub fn graded(n: u32, grading: &Grading) -> Result<Self> {
        let m = grading.cells;
        let faces: Vec<f64> = (0..=m).map(|j| if j == m { std::f64::consts::PI } else { grading.theta(j as f64 / m as f64) }).collect();
        let nodes: Vec<f64> = (0..m).map(|j| grading.theta((j as f64 + 0.5) / m as f64)).collect();
        Self::from_parts(n, faces, nodes)
    }

    pub fn uniform(n: u32, cells: usize) -> Result<Self> {
        let h = std::f64::consts::PI / cells as f64;
        let faces = (0..=cells).map(|j| j as f64 * h).collect();
        let nodes = (0..cells).map(|j| (j as f64 + 0.5) * h).collect();
        Self::from_parts(n, faces, nodes)
    }

    fn from_parts(n: u32, faces: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        if faces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter { name: "grid", reason: "faces must be strictly increasing".into() });
        }
        let w = sphere_area(n - 1);
        let spec = QuadratureSpec::with_rel_tol(1e-13);
        let volumes =
            crate::par::map_range(nodes.len(), |i| integrate(|t| sin_pow(n, t), &[faces[i], faces[i + 1]], &spec).map(|e| w * e.value))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
        let face_weights = (0..nodes.len() - 1).map(|i| w * sin_pow(n, faces[i + 1]) / (nodes[i + 1] - nodes[i])).collect();
        Ok(Self { n, nodes, faces, volumes, face_weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes_below(&self, theta: f64) -> usize {
        self.nodes.partition_point(|&t| t < theta)
    }

    /// At least 12 nodes inside `θ <= δ`.
    pub fn check_resolves(&self, delta: f64) -> Result<()> {
        let nodes = self.nodes_below(delta);
        if nodes < 12 {
            return Err(Error::GridTooCoarse { nodes, delta });
        }
        Ok(())
    }

    pub fn total_volume(&self) -> f64 {
        crate::quadrature::neumaier_sum(self.volumes.iter().copied())
    }
}

/// Values of a radial function at the nodes of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::IncompatibleGrids);
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn compatible(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫ u v dv_g` with the cell volumes.
    pub fn dot_l2(&self, other: &RadialField) -> Result<f64> {
        if !self.compatible(other) {
            return Err(Error::IncompatibleGrids);
        }
        Ok(crate::quadrature::neumaier_sum(self.values.iter().zip(&other.values).zip(&self.grid.volumes).map(|((a, b), v)| a * b * v)))
    }

    /// `∫ ⟨∇u, ∇v⟩ dv_g` with the face weights.
    pub fn dot_gradient(&self, other: &RadialField) -> Result<f64> {
        if !self.compatible(other) {
            return Err(Error::IncompatibleGrids);
        }
        let (u, v) = (&self.values, &other.values);
        Ok(crate::quadrature::neumaier_sum(
            self.grid.face_weights.iter().enumerate().map(|(i, w)| w * (u[i + 1] - u[i]) * (v[i + 1] - v[i])),
        ))
    }

    /// Relative `L²` distance `‖u - v‖ / max(‖u‖, ‖v‖)`.
    pub fn relative_distance(&self, other: &RadialField) -> Result<f64> {
        if !self.compatible(other) {
            return Err(Error::IncompatibleGrids);
        }
        let diff = RadialField { grid: self.grid.clone(), values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() };
        let d = diff.dot_l2(&diff)?.sqrt();
        let s = self.dot_l2(self)?.sqrt().max(other.dot_l2(other)?.sqrt());
        Ok(d / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn volumes_sum_to_sphere() {
        let g = Grid::graded(7, &Grading::for_scale(1e-3, 400).unwrap()).unwrap();
        assert_relative_eq!(g.total_volume(), sphere_area(7), max_relative = 1e-13);
        assert!(g.check_resolves(1e-3).is_ok());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = Grid::uniform(7, 100).unwrap();
        assert!(matches!(g.check_resolves(1e-3), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn refinement_keeps_faces() {
        let gr = Grading::for_scale(1e-2, 64).unwrap();
        let a = Grid::graded(7, &gr).unwrap();
        let b = Grid::graded(7, &gr.refined()).unwrap();
        for (i, f) in a.faces.iter().enumerate() {
            assert_relative_eq!(*f, b.faces[2 * i], max_relative = 1e-15);
        }
    }
}
