//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here is deliberately naive: nested sums instead of FFTs, plain
//! bisection instead of the library's root finder, fixed-step RK4 with a tiny
//! step instead of the production stepper. Slow but obviously correct, which
//! is what a cross-check needs.
#![allow(dead_code)]

use slowfast::{Field, Grid, Kernel, KernelShape, Operators, RossMacdonaldParams};
use std::sync::Arc;

pub fn prototype() -> RossMacdonaldParams {
    RossMacdonaldParams::default()
}

/// Subcritical rates with a comfortable contraction margin, used by the
/// exponential-decay checks.
pub fn decay_params() -> RossMacdonaldParams {
    RossMacdonaldParams {
        alpha_h: 0.25,
        beta_h: 1.0,
        alpha_v: 0.5,
        beta_v: 1.0,
        ..RossMacdonaldParams::default()
    }
}

pub fn line_grid(n: usize) -> Arc<Grid> {
    Grid::new(&[1.0], &[n]).unwrap()
}

pub fn bump_kernel(grid: &Arc<Grid>) -> Kernel {
    Kernel::build(grid, KernelShape::SmoothBump { radius: 0.2 }).unwrap()
}

pub fn bump_ops(n: usize, d2: f64) -> Operators {
    Operators::build(bump_kernel(&line_grid(n)), d2).unwrap()
}

/// Smooth host profile that is neither constant nor Neumann-compatible.
pub fn wavy(grid: &Arc<Grid>) -> Field {
    Field::from_fn(grid, |x| 0.25 + 0.2 * (2.2 * x[0] + 0.3).sin())
}

/// Fixed-step classical RK4 on a small ODE system. With dt = 1e-6 the local
/// truncation error sits far below every tolerance it backs.
pub fn rk4_oracle<const N: usize>(
    rhs: impl Fn(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_final: f64,
    dt: f64,
) -> [f64; N] {
    let steps = (t_final / dt).round() as usize;
    let dt = t_final / steps as f64;
    let mut y = y0;
    let mut t = 0.0;
    for _ in 0..steps {
        let k1 = rhs(t, &y);
        let mut y2 = y;
        for a in 0..N {
            y2[a] = y[a] + 0.5 * dt * k1[a];
        }
        let k2 = rhs(t + 0.5 * dt, &y2);
        for a in 0..N {
            y2[a] = y[a] + 0.5 * dt * k2[a];
        }
        let k3 = rhs(t + 0.5 * dt, &y2);
        for a in 0..N {
            y2[a] = y[a] + dt * k3[a];
        }
        let k4 = rhs(t + dt, &y2);
        for a in 0..N {
            y[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        t += dt;
    }
    y
}

/// Redistribution operator by brute-force double sum over node pairs:
/// `(J * u)(x_k) - mass(x_k) u(x_k)` with trapezoid weights.
pub fn direct_nonlocal(kernel: &Kernel, u: &Field) -> Vec<f64> {
    let grid = kernel.grid();
    let shape = grid.shape();
    let weights = grid.weights();
    let v = u.values();
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    match grid.dim() {
        1 => {
            for k in 0..n {
                let mut conv = 0.0;
                let mut mass = 0.0;
                for l in 0..n {
                    let jv = kernel.value_at([k as isize - l as isize, 0]);
                    conv += weights[l] * jv * v[l];
                    mass += weights[l] * jv;
                }
                out[k] = conv - mass * v[k];
            }
        }
        _ => {
            let ny = shape[1];
            for k in 0..n {
                let (kx, ky) = ((k / ny) as isize, (k % ny) as isize);
                let mut conv = 0.0;
                let mut mass = 0.0;
                for l in 0..n {
                    let (lx, ly) = ((l / ny) as isize, (l % ny) as isize);
                    let jv = kernel.value_at([kx - lx, ky - ly]);
                    conv += weights[l] * jv * v[l];
                    mass += weights[l] * jv;
                }
                out[k] = conv - mass * v[k];
            }
        }
    }
    out
}

/// Plain bisection to a positioned tolerance, independent of the library's
/// root finder. Panics unless `f` changes sign on `[lo, hi]`.
pub fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    assert!(
        (flo <= 0.0) != (fhi <= 0.0),
        "no sign change on [{lo}, {hi}]: f = ({flo}, {fhi})"
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if (flo <= 0.0) == (fmid <= 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!("{name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}
