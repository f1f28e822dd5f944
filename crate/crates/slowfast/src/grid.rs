//! Uniform grids on an interval or rectangle with trapezoid quadrature.
//!
//! Every integral in the crate (norms, convolutions, kernel normalization,
//! inner products) goes through one weight table owned by the grid, so the
//! discrete identities the operators rely on (constants annihilated, mass
//! conservation, negative semidefiniteness) hold to round-off rather than to
//! quadrature error.

use crate::{Error, Result};
use std::sync::Arc;

/// Uniform tensor grid on a box, 1D or 2D.
///
/// Nodes include both endpoints per axis, so `spacing = extent / (n - 1)`.
/// Quadrature weights are the tensor-product trapezoid rule: interior nodes
/// carry `h` per axis, boundary nodes `h/2`. Flattened node order is
/// row-major: in 2D the flat index is `ix * ny + iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extent: Vec<f64>,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Build a grid. `extent` and `shape` must both have length 1 or 2, with
    /// positive extents and at least 3 nodes per axis.
    pub fn new(extent: &[f64], shape: &[usize]) -> Result<Arc<Grid>> {
        let dim = extent.len();
        if dim == 0 || dim > 2 {
            return Err(Error::config("grid.extent", "dimension must be 1 or 2"));
        }
        if shape.len() != dim {
            return Err(Error::config(
                "grid.n_points",
                format!("expected {} axis entries, got {}", dim, shape.len()),
            ));
        }
        for (k, &e) in extent.iter().enumerate() {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::config(
                    "grid.extent",
                    format!("axis {k} extent must be positive and finite, got {e}"),
                ));
            }
        }
        for (k, &n) in shape.iter().enumerate() {
            if n < 3 {
                return Err(Error::config(
                    "grid.n_points",
                    format!("axis {k} needs at least 3 nodes, got {n}"),
                ));
            }
        }
        let spacing: Vec<f64> = extent
            .iter()
            .zip(shape)
            .map(|(&e, &n)| e / (n - 1) as f64)
            .collect();
        let axis_weights: Vec<Vec<f64>> = shape
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| {
                let mut w = vec![h; n];
                w[0] = 0.5 * h;
                w[n - 1] = 0.5 * h;
                w
            })
            .collect();
        let n_nodes: usize = shape.iter().product();
        let mut weights = Vec::with_capacity(n_nodes);
        match dim {
            1 => weights.extend_from_slice(&axis_weights[0]),
            _ => {
                for wx in &axis_weights[0] {
                    for wy in &axis_weights[1] {
                        weights.push(wx * wy);
                    }
                }
            }
        }
        Ok(Arc::new(Grid {
            extent: extent.to_vec(),
            shape: shape.to_vec(),
            spacing,
            weights,
        }))
    }

    /// Unit interval `[0, 1]` with `n` nodes.
    pub fn unit_interval(n: usize) -> Result<Arc<Grid>> {
        Grid::new(&[1.0], &[n])
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    /// Trapezoid quadrature weight per node, flattened row-major.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Measure of the domain, `prod(extent)`.
    pub fn measure(&self) -> f64 {
        self.extent.iter().product()
    }

    /// Coordinates of a flat node index. The returned array always has two
    /// entries; axis 1 is 0 on 1D grids.
    pub fn node(&self, flat: usize) -> [f64; 2] {
        match self.dim() {
            1 => [flat as f64 * self.spacing[0], 0.0],
            _ => {
                let ny = self.shape[1];
                let ix = flat / ny;
                let iy = flat % ny;
                [ix as f64 * self.spacing[0], iy as f64 * self.spacing[1]]
            }
        }
    }

    /// Structural compatibility: same extents and shape.
    pub fn compatible(&self, other: &Grid) -> bool {
        self.extent == other.extent && self.shape == other.shape
    }

    /// Quadrature sum of `f` over all nodes.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid, context: &str) -> Result<()> {
    if a.compatible(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{context}: {:?} nodes on {:?} vs {:?} nodes on {:?}",
            a.shape, a.extent, b.shape, b.extent
        )))
    }
}

/// A real-valued function sampled on a grid. Node order matches the grid's
/// flattened weight table.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn constant(grid: &Arc<Grid>, value: f64) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![value; grid.n_nodes()],
        }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    /// Sample `f(coords)` at every node. The closure receives the node
    /// coordinates (axis 1 is 0 on 1D grids).
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64; 2]) -> f64) -> Field {
        let values = (0..grid.n_nodes()).map(|k| f(&grid.node(k))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Quadrature integral of the field over the domain.
    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Weighted L2 norm, `sqrt(sum_k w_k v_k^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// L2 norm of the finite-difference gradient: centered differences at
    /// interior nodes, one-sided at the boundary.
    pub fn h1_seminorm(&self) -> f64 {
        let g = &self.grid;
        let v = &self.values;
        let mut acc = 0.0;
        match g.dim() {
            1 => {
                let h = g.spacing()[0];
                let n = g.shape()[0];
                for k in 0..n {
                    let d = axis_derivative(v, k, n, 1, h);
                    acc += g.weights()[k] * d * d;
                }
            }
            _ => {
                let (nx, ny) = (g.shape()[0], g.shape()[1]);
                let (hx, hy) = (g.spacing()[0], g.spacing()[1]);
                for ix in 0..nx {
                    for iy in 0..ny {
                        let flat = ix * ny + iy;
                        let dx = axis_derivative_2d(v, ix, nx, ny, iy, hx, true);
                        let dy = axis_derivative_2d(v, iy, ny, ny, ix, hy, false);
                        acc += g.weights()[flat] * (dx * dx + dy * dy);
                    }
                }
            }
        }
        acc.sqrt()
    }
}

fn axis_derivative(v: &[f64], k: usize, n: usize, stride: usize, h: f64) -> f64 {
    if k == 0 {
        (v[stride] - v[0]) / h
    } else if k == n - 1 {
        (v[k * stride] - v[(k - 1) * stride]) / h
    } else {
        (v[(k + 1) * stride] - v[(k - 1) * stride]) / (2.0 * h)
    }
}

fn axis_derivative_2d(
    v: &[f64],
    idx: usize,
    n_axis: usize,
    ny: usize,
    other: usize,
    h: f64,
    along_x: bool,
) -> f64 {
    let at = |i: usize| {
        if along_x {
            v[i * ny + other]
        } else {
            v[other * ny + i]
        }
    };
    if idx == 0 {
        (at(1) - at(0)) / h
    } else if idx == n_axis - 1 {
        (at(idx) - at(idx - 1)) / h
    } else {
        (at(idx + 1) - at(idx - 1)) / (2.0 * h)
    }
}
