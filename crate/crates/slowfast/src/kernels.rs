//! Interaction kernels for the nonlocal redistribution operator.
//!
//! A kernel is a nonnegative, even, compactly supported profile `J` with
//! `J(0) > 0` and unit mass. The operator built from it,
//! `K[u](x) = (J * u)(x) - A(x) u(x)` with `A(x) = integral_domain J(x - y) dy`,
//! redistributes density without creating or destroying mass; everything the
//! analysis relies on (constants annihilated, negative semidefiniteness) needs
//! exactly the properties validated here.
//!
//! Kernels are sampled once onto the grid's full offset range and renormalized
//! so the discrete mass `h^d * sum J` is 1 to round-off. Renormalization pins
//! the interior value of the boundary mass `A` at exactly 1, which the
//! convergence studies rely on; the structural identities hold for any
//! normalization.

use crate::grid::{Field, Grid};
use crate::{Error, Result};
use std::sync::Arc;

/// Named radial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    /// `exp(-1 / (1 - (r/radius)^2))` inside `radius`, 0 outside. Compactly
    /// supported and infinitely smooth, including at the support edge.
    SmoothBump { radius: f64 },
    /// `exp(-r^2 / (2 sigma^2))` cut at `truncation * sigma`. Smooth inside
    /// the support; the cut leaves a jump of `exp(-truncation^2 / 2)` relative
    /// to the peak, which is reported, not hidden. The default truncation 4
    /// leaves a jump of about 3.4e-4.
    GaussianTruncated { sigma: f64, truncation: f64 },
    /// `max(0, 1 - r/radius)`. Continuous but not C1: its derivative jumps at
    /// the origin and at the support edge. Kept so studies can show where the
    /// smoothness assumption is actually used (gradient monitoring degrades
    /// with a warning, it does not fail).
    Tent { radius: f64 },
}

impl KernelShape {
    pub fn support_radius(&self) -> f64 {
        match *self {
            KernelShape::SmoothBump { radius } | KernelShape::Tent { radius } => radius,
            KernelShape::GaussianTruncated { sigma, truncation } => sigma * truncation,
        }
    }

    /// Whether the profile is continuously differentiable on all of space.
    /// The truncated Gaussian is flagged C1 as a modeling choice; its edge
    /// jump is reported separately.
    pub fn is_c1(&self) -> bool {
        !matches!(self, KernelShape::Tent { .. })
    }

    /// Profile value at the inner edge of the support, relative to the peak.
    pub fn edge_jump(&self) -> f64 {
        match *self {
            KernelShape::GaussianTruncated { truncation, .. } => (-0.5 * truncation * truncation).exp(),
            _ => 0.0,
        }
    }

    fn profile(&self, r: f64) -> f64 {
        match *self {
            KernelShape::SmoothBump { radius } => {
                let s = r / radius;
                if s < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            KernelShape::GaussianTruncated { sigma, truncation } => {
                if r <= sigma * truncation {
                    (-0.5 * (r / sigma) * (r / sigma)).exp()
                } else {
                    0.0
                }
            }
            KernelShape::Tent { radius } => (1.0 - r / radius).max(0.0),
        }
    }

    fn check_params(&self) -> Result<()> {
        match *self {
            KernelShape::SmoothBump { radius } | KernelShape::Tent { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::config(
                        "kernel.radius",
                        format!("support radius must be positive and finite, got {radius}"),
                    ));
                }
            }
            KernelShape::GaussianTruncated { sigma, truncation } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::config(
                        "kernel.sigma",
                        format!("width must be positive and finite, got {sigma}"),
                    ));
                }
                if !(truncation > 0.0) || !truncation.is_finite() {
                    return Err(Error::config(
                        "kernel.truncation",
                        format!("truncation must be positive and finite, got {truncation}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A kernel sampled on a grid's offset lattice.
///
/// The table covers every offset the domain can produce: axis `k` offsets run
/// over `-(n_k - 1) ..= n_k - 1`, flattened row-major, so entry `[m]` holds
/// `J(m * h)` after renormalization.
#[derive(Debug, Clone)]
pub struct Kernel {
    grid: Arc<Grid>,
    shape: Option<KernelShape>,
    table: Vec<f64>,
    table_shape: Vec<usize>,
    normalization: f64,
    peak: f64,
    support_radius: f64,
    c1_smooth: bool,
    edge_jump: f64,
}

impl Kernel {
    /// Sample and renormalize a preset profile on `grid`.
    ///
    /// The support must span at least 3 grid cells (narrower kernels alias to
    /// a near-delta and the operator degenerates) and its diameter must fit
    /// inside the domain.
    pub fn build(grid: &Arc<Grid>, shape: KernelShape) -> Result<Kernel> {
        shape.check_params()?;
        let radius = shape.support_radius();
        let h_max = grid.max_spacing();
        if radius < 3.0 * h_max {
            return Err(Error::KernelResolution(format!(
                "support radius {radius} spans fewer than 3 grid cells (h = {h_max}); \
                 refine the grid or widen the kernel"
            )));
        }
        let min_extent = grid.extent().iter().cloned().fold(f64::INFINITY, f64::min);
        if 2.0 * radius >= min_extent {
            return Err(Error::KernelResolution(format!(
                "support diameter {} does not fit inside the domain (min extent {})",
                2.0 * radius,
                min_extent
            )));
        }

        let table_shape: Vec<usize> = grid.shape().iter().map(|&n| 2 * n - 1).collect();
        let h = grid.spacing();
        let mut table = Vec::with_capacity(table_shape.iter().product());
        match grid.dim() {
            1 => {
                let n = grid.shape()[0] as isize;
                for m in -(n - 1)..=(n - 1) {
                    table.push(shape.profile((m as f64 * h[0]).abs()));
                }
            }
            _ => {
                let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
                for mx in -(nx - 1)..=(nx - 1) {
                    for my in -(ny - 1)..=(ny - 1) {
                        let r = (mx as f64 * h[0]).hypot(my as f64 * h[1]);
                        table.push(shape.profile(r));
                    }
                }
            }
        }
        let cell: f64 = h.iter().product();
        let mass: f64 = table.iter().sum::<f64>() * cell;
        if !(mass > 0.0) {
            return Err(Error::KernelResolution(
                "sampled kernel has zero discrete mass".to_string(),
            ));
        }
        for v in &mut table {
            *v /= mass;
        }
        let peak = table.iter().cloned().fold(0.0, f64::max);
        Ok(Kernel {
            grid: grid.clone(),
            peak,
            c1_smooth: shape.is_c1(),
            edge_jump: shape.edge_jump(),
            support_radius: radius,
            normalization: mass,
            shape: Some(shape),
            table,
            table_shape,
        })
    }

    /// Wrap a raw offset table without renormalizing or checking anything
    /// beyond its length. Escape hatch for validation tests and deliberately
    /// broken kernels; `validate_kernel` reports what such a table violates.
    pub fn from_table(grid: &Arc<Grid>, table: Vec<f64>) -> Result<Kernel> {
        let table_shape: Vec<usize> = grid.shape().iter().map(|&n| 2 * n - 1).collect();
        let expected: usize = table_shape.iter().product();
        if table.len() != expected {
            return Err(Error::GridMismatch(format!(
                "offset table has {} entries, grid needs {}",
                table.len(),
                expected
            )));
        }
        // Support radius from the farthest nonzero offset keeps the direct
        // convolution window tight even for hand-built tables.
        let h = grid.spacing();
        let mut support: f64 = 0.0;
        let mut peak: f64 = 0.0;
        match grid.dim() {
            1 => {
                let n = grid.shape()[0] as isize;
                for (idx, &v) in table.iter().enumerate() {
                    if v != 0.0 {
                        let m = idx as isize - (n - 1);
                        support = support.max((m as f64 * h[0]).abs());
                        peak = peak.max(v.abs());
                    }
                }
            }
            _ => {
                let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
                for (idx, &v) in table.iter().enumerate() {
                    if v != 0.0 {
                        let mx = (idx as isize) / (2 * ny - 1) - (nx - 1);
                        let my = (idx as isize) % (2 * ny - 1) - (ny - 1);
                        let r = (mx as f64 * h[0]).hypot(my as f64 * h[1]);
                        support = support.max(r);
                        peak = peak.max(v.abs());
                    }
                }
            }
        }
        Ok(Kernel {
            grid: grid.clone(),
            shape: None,
            table,
            table_shape,
            normalization: 1.0,
            peak,
            support_radius: support,
            c1_smooth: false,
            edge_jump: 0.0,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn shape(&self) -> Option<&KernelShape> {
        self.shape.as_ref()
    }

    /// Renormalized offset table, flattened row-major over
    /// `(2 n_x - 1) x (2 n_y - 1)` offsets (1D: `2 n - 1`).
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_shape(&self) -> &[usize] {
        &self.table_shape
    }

    /// Table value at an integer offset vector.
    pub fn value_at(&self, offset: [isize; 2]) -> f64 {
        match self.grid.dim() {
            1 => {
                let n = self.grid.shape()[0] as isize;
                self.table[(offset[0] + n - 1) as usize]
            }
            _ => {
                let (nx, ny) = (self.grid.shape()[0] as isize, self.grid.shape()[1] as isize);
                let row = (offset[0] + nx - 1) as usize;
                let col = (offset[1] + ny - 1) as usize;
                self.table[row * (2 * ny as usize - 1) + col]
            }
        }
    }

    /// The constant the sampled profile was divided by to reach unit mass.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Largest table value (the sup norm of `J`).
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_c1(&self) -> bool {
        self.c1_smooth
    }

    /// Relative size of the profile jump at the support edge (nonzero only
    /// for the truncated Gaussian).
    pub fn edge_jump(&self) -> f64 {
        self.edge_jump
    }

    /// Per-axis half-width of the support in cells, clamped to the table.
    pub(crate) fn support_cells(&self) -> Vec<usize> {
        self.grid
            .shape()
            .iter()
            .zip(self.grid.spacing())
            .map(|(&n, &h)| {
                if self.support_radius > 0.0 && self.support_radius.is_finite() {
                    ((self.support_radius / h).ceil() as usize).min(n - 1)
                } else {
                    n - 1
                }
            })
            .collect()
    }
}

/// One validation check: whether it passed and the measured residual.
#[derive(Debug, Clone, Copy)]
pub struct CheckResult {
    pub pass: bool,
    pub residual: f64,
}

/// Outcome of the four kernel requirements plus informational smoothness data.
#[derive(Debug, Clone)]
pub struct KernelValidationReport {
    /// `J >= 0` everywhere; residual is the magnitude of the worst negative value.
    pub nonnegative: CheckResult,
    /// `J(0) > 0`; residual is the measured center value (clamped at 0).
    pub positive_at_zero: CheckResult,
    /// `J(-m) = J(m)`; residual is the largest absolute asymmetry.
    pub symmetric: CheckResult,
    /// Discrete mass `h^d sum J = 1` to 1e-10 relative; residual is `|mass - 1|`.
    pub unit_mass: CheckResult,
    /// Informational: profile differentiability and truncation jump.
    pub c1_smooth: bool,
    pub truncation_jump: f64,
}

impl KernelValidationReport {
    pub fn all_pass(&self) -> bool {
        self.nonnegative.pass
            && self.positive_at_zero.pass
            && self.symmetric.pass
            && self.unit_mass.pass
    }
}

/// Check the four kernel requirements on the sampled table. Reports, never
/// errors: broken kernels are a supported input so pipelines can prove they
/// detect them.
pub fn validate_kernel(kernel: &Kernel) -> KernelValidationReport {
    let table = kernel.table();
    let ts = kernel.table_shape();

    let worst_negative = table.iter().cloned().fold(0.0f64, |a, v| a.max(-v));

    let center_value = match ts.len() {
        1 => table[(ts[0] - 1) / 2],
        _ => table[((ts[0] - 1) / 2) * ts[1] + (ts[1] - 1) / 2],
    };

    let mut asym = 0.0f64;
    let total = table.len();
    for idx in 0..total {
        // reversing the flattened table maps offset m to -m for any dim
        let mirrored = table[total - 1 - idx];
        asym = asym.max((table[idx] - mirrored).abs());
    }

    let cell: f64 = kernel.grid().spacing().iter().product();
    let mass: f64 = table.iter().sum::<f64>() * cell;
    let mass_residual = (mass - 1.0).abs();

    KernelValidationReport {
        nonnegative: CheckResult {
            pass: worst_negative == 0.0,
            residual: worst_negative,
        },
        positive_at_zero: CheckResult {
            pass: center_value > 0.0,
            residual: center_value.max(0.0),
        },
        symmetric: CheckResult {
            pass: asym <= 1e-12 * kernel.peak().max(1.0),
            residual: asym,
        },
        unit_mass: CheckResult {
            pass: mass_residual <= 1e-10,
            residual: mass_residual,
        },
        c1_smooth: kernel.is_c1(),
        truncation_jump: kernel.edge_jump(),
    }
}

/// The boundary mass `A(x) = integral_domain J(x - y) dy` and its minimum.
///
/// `A = 1` wherever the support sits fully inside the domain and drops toward
/// the boundary (to about 1/2 at a 1D edge, 1/4 at a 2D corner). Its minimum
/// must stay positive for the operator estimates to hold; it is reported
/// rather than assumed.
#[derive(Debug, Clone)]
pub struct BoundaryMass {
    pub values: Field,
    pub min: f64,
}

/// Compute the boundary mass by direct quadrature of the kernel over the
/// domain, restricted to the support window.
pub fn boundary_mass(kernel: &Kernel) -> BoundaryMass {
    let grid = kernel.grid();
    let w = grid.weights();
    let cells = kernel.support_cells();
    let mut values = vec![0.0; grid.n_nodes()];
    match grid.dim() {
        1 => {
            let n = grid.shape()[0];
            let s = cells[0] as isize;
            for k in 0..n as isize {
                let lo = (k - s).max(0);
                let hi = (k + s).min(n as isize - 1);
                let mut acc = 0.0;
                for l in lo..=hi {
                    acc += w[l as usize] * kernel.value_at([k - l, 0]);
                }
                values[k as usize] = acc;
            }
        }
        _ => {
            let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
            let (sx, sy) = (cells[0] as isize, cells[1] as isize);
            for kx in 0..nx {
                for ky in 0..ny {
                    let mut acc = 0.0;
                    for lx in (kx - sx).max(0)..=(kx + sx).min(nx - 1) {
                        for ly in (ky - sy).max(0)..=(ky + sy).min(ny - 1) {
                            acc += w[(lx * ny + ly) as usize]
                                * kernel.value_at([kx - lx, ky - ly]);
                        }
                    }
                    values[(kx * ny + ky) as usize] = acc;
                }
            }
        }
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    BoundaryMass {
        values: Field::from_values(grid, values).expect("sized to the grid"),
        min,
    }
}
