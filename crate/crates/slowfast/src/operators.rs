//! Discrete spatial operators.
//!
//! Two operators act on fields:
//!
//! - the nonlocal redistribution operator
//!   `K[u](x) = (J * u)(x) - A(x) u(x)`, where `J * u` is the kernel
//!   convolution restricted to the domain and `A` is the boundary mass
//!   `integral_domain J(x - y) dy`;
//! - the Laplacian with reflecting (zero-flux) boundaries, scaled by a
//!   diffusion coefficient.
//!
//! Both annihilate constants and are negative semidefinite under the
//! quadrature pairing `<u, v> = sum_k w_k u_k v_k`. For `K` these are exact
//! discrete identities: writing the double sum symmetrically,
//!
//! ```text
//!   <u, K[u]> = -1/2 * sum_{k,l} w_k w_l J(x_k - x_l) (u_l - u_k)^2 <= 0,
//! ```
//!
//! and `K[c] = c A - c A = 0` for any constant `c` regardless of kernel
//! normalization. The Laplacian gets the same identities from its mirrored
//! boundary stencil, which keeps row sums exactly zero.
//!
//! Convolution runs either by direct windowed quadrature (the oracle, also
//! fastest on tiny grids) or by zero-padded FFT (exact linear convolution,
//! O(N log N)); the two agree to round-off and the tests pin that.

use crate::grid::{check_same_grid, Field, Grid};
use crate::kernels::{boundary_mass, Kernel};
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// How the kernel convolution is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionStrategy {
    /// Windowed double loop over the kernel support. O(N * support).
    Direct,
    /// Zero-padded FFT, exact linear convolution. O(N log N).
    Fft,
}

/// The nonlocal redistribution operator for one kernel on one grid.
pub struct NonlocalOperator {
    kernel: Kernel,
    mass: Field,
    min_mass: f64,
    strategy: ConvolutionStrategy,
    plan: Option<ConvPlan>,
}

impl NonlocalOperator {
    pub fn new(kernel: Kernel, strategy: ConvolutionStrategy) -> NonlocalOperator {
        let bm = boundary_mass(&kernel);
        let plan = match strategy {
            ConvolutionStrategy::Fft => Some(ConvPlan::new(&kernel)),
            ConvolutionStrategy::Direct => None,
        };
        NonlocalOperator {
            kernel,
            mass: bm.values,
            min_mass: bm.min,
            strategy,
            plan,
        }
    }

    /// Pick FFT above 64 nodes, direct below.
    pub fn with_auto_strategy(kernel: Kernel) -> NonlocalOperator {
        let strategy = if kernel.grid().n_nodes() >= 64 {
            ConvolutionStrategy::Fft
        } else {
            ConvolutionStrategy::Direct
        };
        NonlocalOperator::new(kernel, strategy)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.kernel.grid()
    }

    /// The boundary mass field `A`.
    pub fn mass(&self) -> &Field {
        &self.mass
    }

    pub fn min_mass(&self) -> f64 {
        self.min_mass
    }

    pub fn strategy(&self) -> ConvolutionStrategy {
        self.strategy
    }

    /// Operator norm bound under the quadrature pairing:
    /// `|<v, K[u]>| <= |domain| * sup J + 1` times `||u|| ||v||`.
    pub fn pairing_bound(&self) -> f64 {
        self.grid().measure() * self.kernel.peak() + 1.0
    }

    /// Apply `K` to a field on the same grid.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        check_same_grid(self.grid(), u.grid(), "nonlocal operator")?;
        let conv = self.convolve_weighted(u.values());
        let mut out = conv;
        for ((o, &a), &v) in out.iter_mut().zip(self.mass.values()).zip(u.values()) {
            *o -= a * v;
        }
        Field::from_values(self.grid(), out)
    }

    // (J * u)(x_k) = sum_l w_l J(x_k - x_l) u_l
    fn convolve_weighted(&self, u: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let w = grid.weights();
        let wu: Vec<f64> = w.iter().zip(u).map(|(w, v)| w * v).collect();
        match &self.plan {
            Some(plan) => plan.convolve(&wu),
            None => self.convolve_direct(&wu),
        }
    }

    fn convolve_direct(&self, wu: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let cells = self.kernel.support_cells();
        let mut out = vec![0.0; grid.n_nodes()];
        match grid.dim() {
            1 => {
                let n = grid.shape()[0] as isize;
                let s = cells[0] as isize;
                for k in 0..n {
                    let mut acc = 0.0;
                    for l in (k - s).max(0)..=(k + s).min(n - 1) {
                        acc += wu[l as usize] * self.kernel.value_at([k - l, 0]);
                    }
                    out[k as usize] = acc;
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
                                acc += wu[(lx * ny + ly) as usize]
                                    * self.kernel.value_at([kx - lx, ky - ly]);
                            }
                        }
                        out[(kx * ny + ky) as usize] = acc;
                    }
                }
            }
        }
        out
    }
}

// Precomputed zero-padded FFT pipeline. The kernel table spans offsets
// -(n-1)..=(n-1) per axis, so the linear convolution with an n-node field is
// 3n - 2 long; padding each axis to a power of two >= 3n - 2 makes the
// circular convolution equal the linear one, and the domain-restricted
// convolution is the window starting at offset n - 1.
struct ConvPlan {
    field_shape: Vec<usize>,
    padded: Vec<usize>,
    kernel_hat: Vec<Complex<f64>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl ConvPlan {
    fn new(kernel: &Kernel) -> ConvPlan {
        let field_shape = kernel.grid().shape().to_vec();
        let padded: Vec<usize> = field_shape
            .iter()
            .map(|&n| (3 * n - 2).next_power_of_two())
            .collect();
        let mut planner = FftPlanner::new();
        let fwd: Vec<_> = padded.iter().map(|&p| planner.plan_fft_forward(p)).collect();
        let inv: Vec<_> = padded.iter().map(|&p| planner.plan_fft_inverse(p)).collect();

        let total: usize = padded.iter().product();
        let mut kernel_hat = vec![Complex::new(0.0, 0.0); total];
        let table = kernel.table();
        let ts = kernel.table_shape();
        match field_shape.len() {
            1 => {
                for (i, &v) in table.iter().enumerate() {
                    kernel_hat[i].re = v;
                }
            }
            _ => {
                let py = padded[1];
                for r in 0..ts[0] {
                    for c in 0..ts[1] {
                        kernel_hat[r * py + c].re = table[r * ts[1] + c];
                    }
                }
            }
        }
        fft_nd(&mut kernel_hat, &padded, &fwd);
        ConvPlan {
            field_shape,
            padded,
            kernel_hat,
            fwd,
            inv,
        }
    }

    fn convolve(&self, wu: &[f64]) -> Vec<f64> {
        let total: usize = self.padded.iter().product();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        match self.field_shape.len() {
            1 => {
                for (i, &v) in wu.iter().enumerate() {
                    buf[i].re = v;
                }
            }
            _ => {
                let ny = self.field_shape[1];
                let py = self.padded[1];
                for r in 0..self.field_shape[0] {
                    for c in 0..ny {
                        buf[r * py + c].re = wu[r * ny + c];
                    }
                }
            }
        }
        fft_nd(&mut buf, &self.padded, &self.fwd);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= *k;
        }
        fft_nd(&mut buf, &self.padded, &self.inv);
        let scale = 1.0 / total as f64;

        match self.field_shape.len() {
            1 => {
                let n = self.field_shape[0];
                (0..n).map(|k| buf[k + n - 1].re * scale).collect()
            }
            _ => {
                let (nx, ny) = (self.field_shape[0], self.field_shape[1]);
                let py = self.padded[1];
                let mut out = Vec::with_capacity(nx * ny);
                for r in 0..nx {
                    for c in 0..ny {
                        out.push(buf[(r + nx - 1) * py + (c + ny - 1)].re * scale);
                    }
                }
                out
            }
        }
    }
}

// In-place FFT over each axis of a row-major padded array (1D or 2D).
fn fft_nd(buf: &mut [Complex<f64>], padded: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    match padded.len() {
        1 => plans[0].process(buf),
        _ => {
            let (px, py) = (padded[0], padded[1]);
            for r in 0..px {
                plans[1].process(&mut buf[r * py..(r + 1) * py]);
            }
            let mut col = vec![Complex::new(0.0, 0.0); px];
            for c in 0..py {
                for r in 0..px {
                    col[r] = buf[r * py + c];
                }
                plans[0].process(&mut col);
                for r in 0..px {
                    buf[r * py + c] = col[r];
                }
            }
        }
    }
}

/// Quadrature pairing `<u, v> = sum_k w_k u_k v_k` of two fields on the same
/// grid.
pub fn pairing(u: &Field, v: &Field) -> Result<f64> {
    check_same_grid(u.grid(), v.grid(), "pairing")?;
    Ok(u.grid()
        .weights()
        .iter()
        .zip(u.values())
        .zip(v.values())
        .map(|((w, a), b)| w * a * b)
        .sum())
}

// Compressed sparse row matrix, just enough for stencils and CG.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Csr {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            *out = acc;
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |idx| (self.cols[idx], self.vals[idx]))
    }
}

/// Second-order Laplacian with reflecting ghost nodes, scaled by a diffusion
/// coefficient. The mirrored boundary stencil (`2 (u_1 - u_0) / h^2` at an
/// edge) keeps every row sum exactly zero, so constants are in the null space
/// and the quadrature sum of the output vanishes: the discrete form of
/// zero-flux mass conservation.
pub struct NeumannLaplacian {
    grid: Arc<Grid>,
    coeff: f64,
    csr: Csr,
}

impl NeumannLaplacian {
    /// `coeff` is the diffusion coefficient multiplying the stencil;
    /// `coeff = 0` yields the zero operator (a valid degenerate case).
    pub fn new(grid: &Arc<Grid>, coeff: f64) -> Result<NeumannLaplacian> {
        if !(coeff >= 0.0) || !coeff.is_finite() {
            return Err(Error::config(
                "model.d2",
                format!("diffusion coefficient must be finite and >= 0, got {coeff}"),
            ));
        }
        let csr = assemble_neumann(grid, coeff);
        Ok(NeumannLaplacian {
            grid: grid.clone(),
            coeff,
            csr,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        check_same_grid(&self.grid, u.grid(), "laplacian")?;
        let mut out = vec![0.0; u.len()];
        self.csr.matvec(u.values(), &mut out);
        Field::from_values(&self.grid, out)
    }

    /// Prefactored solver for `(I - tau * L) x = b`, where `L` is this
    /// operator (coefficient included). Direct tridiagonal elimination in 1D,
    /// weighted conjugate gradients in 2D.
    pub fn solver(&self, tau: f64) -> Result<ImplicitSolver> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::LinearSolve(format!(
                "implicit weight must be finite and >= 0, got {tau}"
            )));
        }
        let system = shifted_identity(&self.csr, tau);
        match self.grid.dim() {
            1 => Ok(ImplicitSolver::Tridiagonal(Thomas::new(
                &system,
                self.grid.clone(),
            )?)),
            _ => Ok(ImplicitSolver::ConjugateGradient(Cg {
                system,
                grid: self.grid.clone(),
                tol: 1e-13,
                max_iter: 20_000,
            })),
        }
    }
}

fn assemble_neumann(grid: &Arc<Grid>, coeff: f64) -> Csr {
    let n_nodes = grid.n_nodes();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_nodes];
    for (axis, (&n, &h)) in grid.shape().iter().zip(grid.spacing()).enumerate() {
        let c = coeff / (h * h);
        let stride = if grid.dim() == 1 {
            1
        } else if axis == 0 {
            grid.shape()[1]
        } else {
            1
        };
        let axis_len = n;
        // iterate over all nodes, decomposing the flat index along this axis
        for (flat, row) in rows.iter_mut().enumerate().take(n_nodes) {
            let idx = if grid.dim() == 1 {
                flat
            } else if axis == 0 {
                flat / grid.shape()[1]
            } else {
                flat % grid.shape()[1]
            };
            if idx == 0 {
                row.push((flat, -2.0 * c));
                row.push((flat + stride, 2.0 * c));
            } else if idx == axis_len - 1 {
                row.push((flat - stride, 2.0 * c));
                row.push((flat, -2.0 * c));
            } else {
                row.push((flat - stride, c));
                row.push((flat, -2.0 * c));
                row.push((flat + stride, c));
            }
        }
    }
    // merge duplicate columns (the two axis passes both add a diagonal term)
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(c, v) in row.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == c {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((c, v));
        }
        *row = merged;
    }
    Csr::from_rows(rows)
}

fn shifted_identity(l: &Csr, tau: f64) -> Csr {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(l.n);
    for r in 0..l.n {
        let mut row: Vec<(usize, f64)> = l.row(r).map(|(c, v)| (c, -tau * v)).collect();
        match row.iter_mut().find(|(c, _)| *c == r) {
            Some(diag) => diag.1 += 1.0,
            None => {
                row.push((r, 1.0));
                row.sort_by_key(|&(c, _)| c);
            }
        }
        rows.push(row);
    }
    Csr::from_rows(rows)
}

/// Linear solver for the implicit diffusion step.
pub enum ImplicitSolver {
    Tridiagonal(Thomas),
    ConjugateGradient(Cg),
}

impl ImplicitSolver {
    pub fn solve(&self, b: &Field) -> Result<Field> {
        match self {
            ImplicitSolver::Tridiagonal(t) => t.solve(b),
            ImplicitSolver::ConjugateGradient(cg) => cg.solve(b),
        }
    }
}

/// Prefactored tridiagonal elimination. Exact (direct) solve; the factor
/// stores the forward-sweep multipliers so repeated solves cost O(n).
pub struct Thomas {
    grid: Arc<Grid>,
    // factored upper coefficients and pivot reciprocals
    cp: Vec<f64>,
    pivot_inv: Vec<f64>,
    sub: Vec<f64>,
}

impl Thomas {
    fn new(system: &Csr, grid: Arc<Grid>) -> Result<Thomas> {
        let n = system.n;
        let mut a = vec![0.0; n]; // sub
        let mut b = vec![0.0; n]; // diag
        let mut c = vec![0.0; n]; // sup
        for r in 0..n {
            for (col, v) in system.row(r) {
                if col + 1 == r {
                    a[r] = v;
                } else if col == r {
                    b[r] = v;
                } else if col == r + 1 {
                    c[r] = v;
                } else {
                    return Err(Error::LinearSolve(
                        "tridiagonal factorization fed a non-tridiagonal row".to_string(),
                    ));
                }
            }
        }
        let mut cp = vec![0.0; n];
        let mut pivot_inv = vec![0.0; n];
        let mut denom = b[0];
        if denom == 0.0 {
            return Err(Error::LinearSolve("zero pivot".to_string()));
        }
        pivot_inv[0] = 1.0 / denom;
        cp[0] = c[0] / denom;
        for k in 1..n {
            denom = b[k] - a[k] * cp[k - 1];
            if denom == 0.0 {
                return Err(Error::LinearSolve("zero pivot".to_string()));
            }
            pivot_inv[k] = 1.0 / denom;
            cp[k] = c[k] / denom;
        }
        Ok(Thomas {
            grid,
            cp,
            pivot_inv,
            sub: a,
        })
    }

    fn solve(&self, rhs: &Field) -> Result<Field> {
        check_same_grid(&self.grid, rhs.grid(), "tridiagonal solve")?;
        let n = rhs.len();
        let b = rhs.values();
        let mut x = vec![0.0; n];
        x[0] = b[0] * self.pivot_inv[0];
        for k in 1..n {
            x[k] = (b[k] - self.sub[k] * x[k - 1]) * self.pivot_inv[k];
        }
        for k in (0..n - 1).rev() {
            x[k] -= self.cp[k] * x[k + 1];
        }
        Field::from_values(&self.grid, x)
    }
}

/// Conjugate gradients under the quadrature inner product. The system
/// `I - tau L` is self-adjoint positive definite in that inner product, so
/// CG converges; iteration starts from `x0 = b`, which makes constant fields
/// (and zero) exact without iterating.
pub struct Cg {
    system: Csr,
    grid: Arc<Grid>,
    tol: f64,
    max_iter: usize,
}

impl Cg {
    fn solve(&self, rhs: &Field) -> Result<Field> {
        check_same_grid(&self.grid, rhs.grid(), "cg solve")?;
        let n = rhs.len();
        let w = self.grid.weights();
        let b = rhs.values();
        let dot = |u: &[f64], v: &[f64]| -> f64 {
            w.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
        };
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok(Field::zeros(&self.grid));
        }
        let mut x = b.to_vec();
        let mut q = vec![0.0; n];
        self.system.matvec(&x, &mut q);
        let mut r: Vec<f64> = b.iter().zip(&q).map(|(b, q)| b - q).collect();
        let mut rs = dot(&r, &r);
        if rs.sqrt() <= self.tol * b_norm {
            return Field::from_values(&self.grid, x);
        }
        let mut p = r.clone();
        for _ in 0..self.max_iter {
            self.system.matvec(&p, &mut q);
            let alpha = rs / dot(&p, &q);
            if !alpha.is_finite() {
                return Err(Error::LinearSolve("cg broke down".to_string()));
            }
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            let rs_new = dot(&r, &r);
            if rs_new.sqrt() <= self.tol * b_norm {
                return Field::from_values(&self.grid, x);
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        Err(Error::LinearSolve(format!(
            "cg did not reach tolerance {} in {} iterations",
            self.tol, self.max_iter
        )))
    }
}
