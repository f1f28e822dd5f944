//! Time stepping for the coupled two-time-scale system and its limit.
//!
//! The work horse is a first-order IMEX (Lie) splitting whose step size is
//! independent of the stiffness `1/epsilon`:
//!
//! 1. explicit slow update: `i += dt * (f(i, j) + d1 * K[i])` using the old
//!    `j`;
//! 2. implicit fast reaction with the NEW `i`:
//!    `j_new = j + (dt/eps) * g(i, j_new)` solved exactly when `g` is affine
//!    in `j` (the host-vector pair is), by Newton otherwise;
//! 3. implicit vector diffusion: solve `(I - dt * d2 * Lap) j = j_new`.
//!
//! Using the new `i` in step 2 makes every spatially constant equilibrium an
//! exact fixed point of the discrete map: at `(i*, m(i*))` the slow update is
//! zero (so `i` stays put), the implicit reaction then solves
//! `j = m(i*)` exactly, and the diffusion solve leaves constants unchanged.
//! The tests lean on that.
//!
//! A classical RK4 scheme over the full right-hand side is also provided for
//! regimes where `dt * max(|g_y|) / eps` is small; it exists so temporal
//! consistency can be measured to high accuracy against adaptive references,
//! not for production runs at tiny `eps`. `step_size_audit` reports the
//! stability budget of both schemes.
//!
//! The limit equation `di/dt = f(i, m(i)) + d1 * K[i]` is stepped with the
//! same explicit slow update at the same `dt` as the coupled system, so a
//! full-vs-limit comparison at matched times isolates the model error in
//! `eps` instead of mixing in discretization noise.

use crate::grid::{check_same_grid, Field, Grid};
use crate::model::{ReactionSystem, RossMacdonaldParams};
use crate::operators::{ImplicitSolver, NeumannLaplacian, NonlocalOperator};
use crate::{Error, Result};
use std::sync::Arc;

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Stiff-capable first-order splitting; dt limited only by the slow side.
    ImexEuler,
    /// Classical explicit fourth-order Runge-Kutta on the coupled system;
    /// dt must resolve the fast scale `eps / max|g_y|`.
    Rk4,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ImexEuler => "imex_euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

/// Scheme, step size, and horizon of one run.
#[derive(Debug, Clone, Copy)]
pub struct StepperSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
}

impl StepperSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(
                "integrator.dt",
                format!("step size must be positive and finite, got {}", self.dt),
            ));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::config(
                "integrator.t_final",
                format!("horizon must be positive and finite, got {}", self.t_final),
            ));
        }
        if self.dt > self.t_final {
            return Err(Error::config(
                "integrator.dt",
                format!("step size {} exceeds the horizon {}", self.dt, self.t_final),
            ));
        }
        Ok(())
    }
}

/// The two spatial operators assembled on one grid.
pub struct Operators {
    nonlocal: NonlocalOperator,
    laplacian: NeumannLaplacian,
}

impl Operators {
    pub fn new(nonlocal: NonlocalOperator, laplacian: NeumannLaplacian) -> Result<Operators> {
        check_same_grid(nonlocal.grid(), laplacian.grid(), "operator bundle")?;
        Ok(Operators { nonlocal, laplacian })
    }

    /// Assemble from a kernel and a diffusion coefficient, picking the
    /// convolution strategy automatically.
    pub fn build(kernel: crate::kernels::Kernel, d2: f64) -> Result<Operators> {
        let laplacian = NeumannLaplacian::new(kernel.grid(), d2)?;
        Operators::new(NonlocalOperator::with_auto_strategy(kernel), laplacian)
    }

    pub fn nonlocal(&self) -> &NonlocalOperator {
        &self.nonlocal
    }

    pub fn laplacian(&self) -> &NeumannLaplacian {
        &self.laplacian
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.nonlocal.grid()
    }
}

/// Host and vector fields at one time.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub i: Field,
    pub j: Field,
}

impl SystemState {
    pub fn new(t: f64, i: Field, j: Field) -> Result<SystemState> {
        check_same_grid(i.grid(), j.grid(), "system state")?;
        if !t.is_finite() || !i.is_finite() || !j.is_finite() {
            return Err(Error::Step {
                t,
                message: "state contains non-finite values".to_string(),
            });
        }
        Ok(SystemState { t, i, j })
    }
}

/// Snapshots of one run plus effort counters. `rejected_steps` is always 0
/// for the fixed-step schemes here; it exists so reports have a stable shape
/// if an adaptive scheme is ever added.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<SystemState>,
    pub scheme: Scheme,
    pub dt: f64,
    pub steps_taken: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> Option<&SystemState> {
        self.snapshots.last()
    }
}

/// Snapshot times for a run: `count` uniform points on `[0, t_final]`, plus,
/// when a layer time scale is given, 51 extra points on
/// `[0, min(10 * layer_time, t_final)]` so the fast transient is always
/// resolved by at least five snapshots. Sorted and deduplicated.
pub fn snapshot_schedule(t_final: f64, count: usize, layer_time: Option<f64>) -> Vec<f64> {
    let count = count.max(2);
    let mut times: Vec<f64> = (0..count)
        .map(|k| t_final * k as f64 / (count - 1) as f64)
        .collect();
    if let Some(lt) = layer_time {
        if lt > 0.0 {
            let span = (10.0 * lt).min(t_final);
            times.extend((0..51).map(|k| span * k as f64 / 50.0));
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = 1e-12 * t_final.max(1.0);
    times.dedup_by(|a, b| (*a - *b).abs() <= tol);
    times
}

// Reaction plus the scalings the engines need; borrows whichever reaction
// implementation the caller holds.
struct EngineParams<'a> {
    reaction: &'a dyn ReactionSystem,
    d1: f64,
    epsilon: f64,
}

fn check_coefficient_consistency(p: &RossMacdonaldParams, ops: &Operators) -> Result<()> {
    if (ops.laplacian().coeff() - p.d2).abs() > 1e-12 * p.d2.abs().max(1.0) {
        return Err(Error::config(
            "model.d2",
            format!(
                "operator bundle was assembled with diffusion coefficient {}, parameters say {}",
                ops.laplacian().coeff(),
                p.d2
            ),
        ));
    }
    Ok(())
}

/// One step of the coupled system. Builds the implicit solver on the fly;
/// use `solve_full` for multi-step runs so the factorization is reused.
pub fn step_full(
    p: &RossMacdonaldParams,
    ops: &Operators,
    state: &SystemState,
    dt: f64,
    scheme: Scheme,
) -> Result<SystemState> {
    p.validate()?;
    check_coefficient_consistency(p, ops)?;
    let ep = EngineParams {
        reaction: p,
        d1: p.d1,
        epsilon: p.epsilon,
    };
    let mut i = state.i.clone();
    let mut j = state.j.clone();
    check_same_grid(ops.grid(), i.grid(), "step state")?;
    match scheme {
        Scheme::ImexEuler => {
            let solver = ops.laplacian().solver(dt)?;
            imex_step(&ep, ops, &solver, state.t, dt, &mut i, &mut j)?;
        }
        Scheme::Rk4 => rk4_step(&ep, ops, dt, &mut i, &mut j)?,
    }
    SystemState::new(state.t + dt, i, j)
}

/// Integrate the coupled system from `initial` to `spec.t_final`, recording a
/// snapshot at the first step boundary at or past each requested time.
/// Requested times must be ascending and within `[initial.t, t_final]`.
pub fn solve_full(
    p: &RossMacdonaldParams,
    ops: &Operators,
    initial: &SystemState,
    spec: &StepperSpec,
    times: &[f64],
) -> Result<Trajectory> {
    p.validate()?;
    check_coefficient_consistency(p, ops)?;
    let ep = EngineParams {
        reaction: p,
        d1: p.d1,
        epsilon: p.epsilon,
    };
    solve_full_impl(&ep, ops, initial, spec, times)
}

/// `solve_full` for a user-supplied reaction system. The diffusion
/// coefficient lives in the operator bundle; `d1` and `epsilon` are passed
/// explicitly.
pub fn solve_full_general(
    reaction: &dyn ReactionSystem,
    d1: f64,
    epsilon: f64,
    ops: &Operators,
    initial: &SystemState,
    spec: &StepperSpec,
    times: &[f64],
) -> Result<Trajectory> {
    if !(d1 >= 0.0) || !d1.is_finite() {
        return Err(Error::config("model.d1", format!("must be >= 0, got {d1}")));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::config(
            "model.epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    let ep = EngineParams {
        reaction,
        d1,
        epsilon,
    };
    solve_full_impl(&ep, ops, initial, spec, times)
}

fn solve_full_impl(
    ep: &EngineParams,
    ops: &Operators,
    initial: &SystemState,
    spec: &StepperSpec,
    times: &[f64],
) -> Result<Trajectory> {
    spec.validate()?;
    check_same_grid(ops.grid(), initial.i.grid(), "initial state")?;
    check_schedule(times, initial.t, spec.t_final)?;

    let solver = match spec.scheme {
        Scheme::ImexEuler => Some(ops.laplacian().solver(spec.dt)?),
        Scheme::Rk4 => None,
    };
    let mut i = initial.i.clone();
    let mut j = initial.j.clone();
    let t0 = initial.t;
    let n_steps = step_count(t0, spec.t_final, spec.dt);

    let mut snapshots = Vec::with_capacity(times.len());
    let mut next_time = 0usize;
    let tol = 1e-9 * spec.dt;
    record(&mut snapshots, times, &mut next_time, t0, &i, &j, tol)?;
    for step in 0..n_steps {
        let t = t0 + step as f64 * spec.dt;
        match spec.scheme {
            Scheme::ImexEuler => {
                imex_step(ep, ops, solver.as_ref().unwrap(), t, spec.dt, &mut i, &mut j)?
            }
            Scheme::Rk4 => rk4_step(ep, ops, spec.dt, &mut i, &mut j)?,
        }
        let t_new = t0 + (step + 1) as f64 * spec.dt;
        check_finite(t_new, &i, &j)?;
        record(&mut snapshots, times, &mut next_time, t_new, &i, &j, tol)?;
    }
    Ok(Trajectory {
        snapshots,
        scheme: spec.scheme,
        dt: spec.dt,
        steps_taken: n_steps,
        rejected_steps: 0,
    })
}

/// Integrate the scalar limit equation `di/dt = f(i, m(i)) + d1 * K[i]` with
/// the same slow-side discretization as `solve_full`; snapshots carry
/// `j = m(i)`, the manifold fill.
pub fn solve_limit(
    p: &RossMacdonaldParams,
    ops: &Operators,
    initial_i: &Field,
    spec: &StepperSpec,
    times: &[f64],
) -> Result<Trajectory> {
    p.validate()?;
    solve_limit_general(p, p.d1, ops, initial_i, spec, times)
}

/// `solve_limit` for a user-supplied reaction system.
pub fn solve_limit_general(
    reaction: &dyn ReactionSystem,
    d1: f64,
    ops: &Operators,
    initial_i: &Field,
    spec: &StepperSpec,
    times: &[f64],
) -> Result<Trajectory> {
    spec.validate()?;
    check_same_grid(ops.grid(), initial_i.grid(), "initial state")?;
    if !initial_i.is_finite() {
        return Err(Error::Step {
            t: 0.0,
            message: "initial data contains non-finite values".to_string(),
        });
    }
    check_schedule(times, 0.0, spec.t_final)?;

    let mut i = initial_i.clone();
    let n_steps = step_count(0.0, spec.t_final, spec.dt);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut next_time = 0usize;
    let tol = 1e-9 * spec.dt;
    record_limit(reaction, &mut snapshots, times, &mut next_time, 0.0, &i, tol)?;
    for step in 0..n_steps {
        match spec.scheme {
            Scheme::ImexEuler => {
                let ki = ops.nonlocal().apply(&i)?;
                let iv = i.values_mut();
                for (v, k) in iv.iter_mut().zip(ki.values()) {
                    let x = *v;
                    *v = x + spec.dt * (reaction.f(x, reaction.slow_manifold(x)) + d1 * k);
                }
            }
            Scheme::Rk4 => rk4_limit_step(reaction, d1, ops, spec.dt, &mut i)?,
        }
        let t_new = (step + 1) as f64 * spec.dt;
        if !i.is_finite() {
            return Err(Error::Step {
                t: t_new,
                message: "limit solution left the finite range; check the step-size audit"
                    .to_string(),
            });
        }
        record_limit(reaction, &mut snapshots, times, &mut next_time, t_new, &i, tol)?;
    }
    Ok(Trajectory {
        snapshots,
        scheme: spec.scheme,
        dt: spec.dt,
        steps_taken: n_steps,
        rejected_steps: 0,
    })
}

fn step_count(t0: f64, t_final: f64, dt: f64) -> usize {
    (((t_final - t0) / dt) - 1e-9).ceil().max(0.0) as usize
}

fn check_schedule(times: &[f64], t0: f64, t_final: f64) -> Result<()> {
    for pair in times.windows(2) {
        if pair[1] < pair[0] {
            return Err(Error::config(
                "integrator.snapshots",
                "requested snapshot times must be ascending",
            ));
        }
    }
    if let (Some(first), Some(last)) = (times.first(), times.last()) {
        if *first < t0 - 1e-12 || *last > t_final + 1e-9 * t_final.max(1.0) {
            return Err(Error::config(
                "integrator.snapshots",
                format!("snapshot times must lie in [{t0}, {t_final}]"),
            ));
        }
    }
    Ok(())
}

fn check_finite(t: f64, i: &Field, j: &Field) -> Result<()> {
    if !i.is_finite() || !j.is_finite() {
        return Err(Error::Step {
            t,
            message: "solution left the finite range; the step size is likely above the \
                      stability limit (see step_size_audit)"
                .to_string(),
        });
    }
    Ok(())
}

fn record(
    snapshots: &mut Vec<SystemState>,
    times: &[f64],
    next_time: &mut usize,
    t: f64,
    i: &Field,
    j: &Field,
    tol: f64,
) -> Result<()> {
    let mut due = false;
    while *next_time < times.len() && times[*next_time] <= t + tol {
        *next_time += 1;
        due = true;
    }
    if due {
        snapshots.push(SystemState::new(t, i.clone(), j.clone())?);
    }
    Ok(())
}

fn record_limit(
    reaction: &dyn ReactionSystem,
    snapshots: &mut Vec<SystemState>,
    times: &[f64],
    next_time: &mut usize,
    t: f64,
    i: &Field,
    tol: f64,
) -> Result<()> {
    let mut due = false;
    while *next_time < times.len() && times[*next_time] <= t + tol {
        *next_time += 1;
        due = true;
    }
    if due {
        let mut j = i.clone();
        for v in j.values_mut() {
            *v = reaction.slow_manifold(*v);
        }
        snapshots.push(SystemState::new(t, i.clone(), j)?);
    }
    Ok(())
}

fn imex_step(
    ep: &EngineParams,
    ops: &Operators,
    solver: &ImplicitSolver,
    t: f64,
    dt: f64,
    i: &mut Field,
    j: &mut Field,
) -> Result<()> {
    // 1. explicit slow update with the old fast field
    let ki = ops.nonlocal().apply(i)?;
    {
        let jv = j.values();
        for ((v, &k), &y) in i.values_mut().iter_mut().zip(ki.values()).zip(jv) {
            let x = *v;
            *v = x + dt * (ep.reaction.f(x, y) + ep.d1 * k);
        }
    }
    // 2. implicit fast reaction with the new slow field
    let c = dt / ep.epsilon;
    {
        let iv = i.values();
        for (node, (y, &x)) in j.values_mut().iter_mut().zip(iv).enumerate() {
            match ep.reaction.fast_affine(x) {
                Some((a, b)) => {
                    *y = (*y + c * a) / (1.0 + c * b);
                }
                None => {
                    *y = newton_fast(ep.reaction, x, *y, c).map_err(|message| Error::Step {
                        t,
                        message: format!("implicit fast solve at node {node}: {message}"),
                    })?;
                }
            }
        }
    }
    // 3. implicit diffusion
    *j = solver.solve(j)?;
    Ok(())
}

// Solve y = y0 + c * g(x, y) by damped-free Newton iteration.
fn newton_fast(
    reaction: &dyn ReactionSystem,
    x: f64,
    y0: f64,
    c: f64,
) -> std::result::Result<f64, String> {
    let mut y = y0;
    for _ in 0..50 {
        let residual = y - y0 - c * reaction.g(x, y);
        if residual.abs() <= 1e-13 * (1.0 + y.abs()) {
            return Ok(y);
        }
        let slope = 1.0 - c * reaction.g_y(x, y);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        y -= residual / slope;
        if !y.is_finite() {
            break;
        }
    }
    Err(format!(
        "no convergence in 50 iterations (x = {x}, y0 = {y0}, dt/eps = {c}, last y = {y})"
    ))
}

fn rk4_step(
    ep: &EngineParams,
    ops: &Operators,
    dt: f64,
    i: &mut Field,
    j: &mut Field,
) -> Result<()> {
    let grid = i.grid().clone();
    let at = |iv: &[f64], jv: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let fi = Field::from_values(&grid, iv.to_vec())?;
        let fj = Field::from_values(&grid, jv.to_vec())?;
        let ki = ops.nonlocal().apply(&fi)?;
        let lj = ops.laplacian().apply(&fj)?;
        let mut di = ki.into_values();
        let mut dj = lj.into_values();
        for k in 0..iv.len() {
            di[k] = ep.reaction.f(iv[k], jv[k]) + ep.d1 * di[k];
            dj[k] += ep.reaction.g(iv[k], jv[k]) / ep.epsilon;
        }
        Ok((di, dj))
    };
    let (i0, j0) = (i.values().to_vec(), j.values().to_vec());
    let n = i0.len();
    let blend = |base: &[f64], slope: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(slope).map(|(b, s)| b + h * s).collect()
    };
    let (k1i, k1j) = at(&i0, &j0)?;
    let (k2i, k2j) = at(&blend(&i0, &k1i, 0.5 * dt), &blend(&j0, &k1j, 0.5 * dt))?;
    let (k3i, k3j) = at(&blend(&i0, &k2i, 0.5 * dt), &blend(&j0, &k2j, 0.5 * dt))?;
    let (k4i, k4j) = at(&blend(&i0, &k3i, dt), &blend(&j0, &k3j, dt))?;
    let iv = i.values_mut();
    let jv = j.values_mut();
    for k in 0..n {
        iv[k] = i0[k] + dt / 6.0 * (k1i[k] + 2.0 * k2i[k] + 2.0 * k3i[k] + k4i[k]);
        jv[k] = j0[k] + dt / 6.0 * (k1j[k] + 2.0 * k2j[k] + 2.0 * k3j[k] + k4j[k]);
    }
    Ok(())
}

fn rk4_limit_step(
    reaction: &dyn ReactionSystem,
    d1: f64,
    ops: &Operators,
    dt: f64,
    i: &mut Field,
) -> Result<()> {
    let grid = i.grid().clone();
    let at = |iv: &[f64]| -> Result<Vec<f64>> {
        let fi = Field::from_values(&grid, iv.to_vec())?;
        let ki = ops.nonlocal().apply(&fi)?;
        let mut di = ki.into_values();
        for k in 0..iv.len() {
            let x = iv[k];
            di[k] = reaction.f(x, reaction.slow_manifold(x)) + d1 * di[k];
        }
        Ok(di)
    };
    let i0 = i.values().to_vec();
    let blend = |slope: &[f64], h: f64| -> Vec<f64> {
        i0.iter().zip(slope).map(|(b, s)| b + h * s).collect()
    };
    let k1 = at(&i0)?;
    let k2 = at(&blend(&k1, 0.5 * dt))?;
    let k3 = at(&blend(&k2, 0.5 * dt))?;
    let k4 = at(&blend(&k3, dt))?;
    let iv = i.values_mut();
    for k in 0..i0.len() {
        iv[k] = i0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    Ok(())
}

/// Itemized step-size budget. `dt_max` is the reciprocal of the summed rates
/// that apply to the chosen scheme; it is a conservative positivity-and-
/// stability guide, not a hard limit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepSizeAudit {
    pub scheme: &'static str,
    /// Slow reaction Lipschitz rate, `sup |f_x|` over the rectangle.
    pub slow_reaction_rate: f64,
    /// `d1` times the nonlocal pairing bound `|domain| sup J + 1`.
    pub nonlocal_rate: f64,
    /// Fast reaction rate `sup |g_y| / eps`; explicit schemes only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fast_rate: Option<f64>,
    /// Diffusion rate `2 d2 sum_axes 1/h^2`; explicit schemes only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusion_rate: Option<f64>,
    pub dt_max: f64,
}

/// Recommend a step size. `ops = None` means the pure reaction system with no
/// spatial terms (the degenerate `d1 = d2 = 0` case); with operators present
/// their measured norms enter the budget.
pub fn step_size_audit(
    p: &RossMacdonaldParams,
    ops: Option<&Operators>,
    scheme: Scheme,
) -> StepSizeAudit {
    let slow = p.alpha_h + p.beta_h;
    let nonlocal = match ops {
        Some(o) => p.d1 * o.nonlocal().pairing_bound(),
        None => 0.0,
    };
    let (fast, diffusion) = match scheme {
        Scheme::ImexEuler => (None, None),
        Scheme::Rk4 => {
            let fast = (p.alpha_v + p.beta_v) / p.epsilon;
            let diffusion = ops.map(|o| {
                let grid = o.grid();
                2.0 * o.laplacian().coeff()
                    * grid.spacing().iter().map(|h| 1.0 / (h * h)).sum::<f64>()
            });
            (Some(fast), diffusion)
        }
    };
    let total = slow + nonlocal + fast.unwrap_or(0.0) + diffusion.unwrap_or(0.0);
    StepSizeAudit {
        scheme: scheme.name(),
        slow_reaction_rate: slow,
        nonlocal_rate: nonlocal,
        fast_rate: fast,
        diffusion_rate: diffusion,
        dt_max: 1.0 / total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel, KernelShape};
    use crate::model::{equilibria, GeneralReaction};

    fn setup(n: usize, p: &RossMacdonaldParams) -> Operators {
        let g = Grid::unit_interval(n).unwrap();
        let k = Kernel::build(&g, KernelShape::SmoothBump { radius: 0.2 }).unwrap();
        Operators::build(k, p.d2).unwrap()
    }

    fn constant_state(ops: &Operators, i: f64, j: f64) -> SystemState {
        SystemState::new(
            0.0,
            Field::constant(ops.grid(), i),
            Field::constant(ops.grid(), j),
        )
        .unwrap()
    }

    #[test]
    fn endemic_equilibrium_is_a_fixed_point() {
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let eq = equilibria(&p).endemic.unwrap();
        let state = constant_state(&ops, eq.i, eq.j);
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 1.0,
        };
        let traj = solve_full(&p, &ops, &state, &spec, &[1.0]).unwrap();
        let last = traj.final_state().unwrap();
        let drift_i = last
            .i
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - eq.i).abs()));
        let drift_j = last
            .j
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - eq.j).abs()));
        assert!(drift_i <= 1e-12, "i drift {drift_i}");
        assert!(drift_j <= 1e-12, "j drift {drift_j}");
    }

    #[test]
    fn zero_state_is_exactly_stationary() {
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let state = constant_state(&ops, 0.0, 0.0);
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 0.5,
        };
        let traj = solve_full(&p, &ops, &state, &spec, &[0.5]).unwrap();
        let last = traj.final_state().unwrap();
        assert_eq!(last.i.linf_norm(), 0.0);
        assert_eq!(last.j.linf_norm(), 0.0);
    }

    #[test]
    fn constant_data_reduces_to_scalar_ode() {
        // constant fields kill both spatial operators exactly, so the PDE
        // stepper must match a scalar IMEX recursion to round-off
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let state = constant_state(&ops, 0.3, 0.1);
        let dt = 0.005;
        let steps = 200;
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt,
            t_final: dt * steps as f64,
        };
        let traj = solve_full(&p, &ops, &state, &spec, &[spec.t_final]).unwrap();
        let (mut x, mut y) = (0.3f64, 0.1f64);
        let c = dt / p.epsilon;
        for _ in 0..steps {
            x += dt * p.f(x, y);
            y = (y + c * p.alpha_v * x) / (1.0 + c * (p.alpha_v * x + p.beta_v));
        }
        let last = traj.final_state().unwrap();
        for v in last.i.values() {
            assert!((v - x).abs() <= 1e-12, "{v} vs {x}");
        }
        for v in last.j.values() {
            assert!((v - y).abs() <= 1e-12, "{v} vs {y}");
        }
    }

    #[test]
    fn imex_self_convergence_is_first_order() {
        let p = RossMacdonaldParams {
            epsilon: 0.1,
            ..Default::default()
        };
        let ops = setup(51, &p);
        let i0 = Field::from_fn(ops.grid(), |x| {
            0.3 + 0.2 * (std::f64::consts::PI * x[0]).cos()
        });
        let j0 = Field::constant(ops.grid(), 0.1);
        let initial = SystemState::new(0.0, i0, j0).unwrap();
        let run = |dt: f64| {
            let spec = StepperSpec {
                scheme: Scheme::ImexEuler,
                dt,
                t_final: 1.0,
            };
            let traj = solve_full(&p, &ops, &initial, &spec, &[1.0]).unwrap();
            traj.final_state().unwrap().i.clone()
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let diff = |u: &Field, v: &Field| {
            let mut d = u.clone();
            for (x, y) in d.values_mut().iter_mut().zip(v.values()) {
                *x -= y;
            }
            d.l2_norm()
        };
        let (e1, e2) = (diff(&a, &b), diff(&b, &c));
        let order = (e1 / e2).log2();
        assert!(
            (order - 1.0).abs() <= 0.25,
            "self-convergence order {order} (e1 {e1}, e2 {e2})"
        );
    }

    #[test]
    fn newton_path_matches_exact_affine_solve() {
        let p = RossMacdonaldParams {
            epsilon: 0.1,
            ..Default::default()
        };
        let ops = setup(41, &p);
        let i0 = Field::from_fn(ops.grid(), |x| 0.4 + 0.3 * (2.0 * x[0] - 1.0).tanh());
        let j0 = Field::constant(ops.grid(), 0.2);
        let initial = SystemState::new(0.0, i0, j0).unwrap();
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 0.5,
        };
        let exact = solve_full(&p, &ops, &initial, &spec, &[0.5]).unwrap();
        // same reaction hidden behind closures with no affine shortcut
        let general: GeneralReaction = p.general();
        assert!(general.affine.is_none());
        let newton =
            solve_full_general(&general, p.d1, p.epsilon, &ops, &initial, &spec, &[0.5]).unwrap();
        let a = exact.final_state().unwrap();
        let b = newton.final_state().unwrap();
        let mut worst = 0.0f64;
        for (x, y) in a.j.values().iter().zip(b.j.values()) {
            worst = worst.max((x - y).abs());
        }
        for (x, y) in a.i.values().iter().zip(b.i.values()) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst <= 1e-12, "newton vs affine gap {worst}");
    }

    #[test]
    fn newton_reports_unsolvable_fast_step() {
        // y = y0 + c y^2 with y0 = 1, c = 1 has no real root, so the implicit
        // step must fail with a structured error
        let p = RossMacdonaldParams::default();
        let ops = setup(41, &p);
        let reaction = GeneralReaction {
            f: Box::new(|_, _| 0.0),
            g: Box::new(|_, y| y * y),
            f_x: Box::new(|_, _| 0.0),
            f_y: Box::new(|_, _| 0.0),
            g_x: Box::new(|_, _| 0.0),
            g_y: Box::new(|_, y| 2.0 * y),
            m: Box::new(|_| 0.0),
            m_prime: Box::new(|_| 0.0),
            affine: None,
            constants: p.hypothesis_constants(),
        };
        let initial = constant_state(&ops, 0.5, 1.0);
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.1,
            t_final: 0.1,
        };
        let err = solve_full_general(&reaction, 0.0, 0.1, &ops, &initial, &spec, &[0.1]).unwrap_err();
        match err {
            Error::Step { message, .. } => assert!(message.contains("implicit fast solve")),
            other => panic!("expected step error, got {other:?}"),
        }
    }

    #[test]
    fn rk4_blowup_is_reported_not_propagated() {
        let p = RossMacdonaldParams {
            epsilon: 1e-4,
            ..Default::default()
        };
        let ops = setup(41, &p);
        let initial = constant_state(&ops, 0.3, 0.1);
        let spec = StepperSpec {
            scheme: Scheme::Rk4,
            dt: 0.1,
            t_final: 10.0,
        };
        let err = solve_full(&p, &ops, &initial, &spec, &[10.0]).unwrap_err();
        assert!(matches!(err, Error::Step { .. }));
    }

    #[test]
    fn limit_matches_full_slow_discretization_at_equilibrium() {
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let eq = equilibria(&p).endemic.unwrap();
        let i0 = Field::constant(ops.grid(), eq.i);
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 1.0,
        };
        let traj = solve_limit(&p, &ops, &i0, &spec, &[1.0]).unwrap();
        let last = traj.final_state().unwrap();
        for v in last.i.values() {
            assert!((v - eq.i).abs() <= 1e-12);
        }
        // manifold fill
        for v in last.j.values() {
            assert!((v - eq.j).abs() <= 1e-12);
        }
    }

    #[test]
    fn snapshots_land_on_step_boundaries() {
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let initial = constant_state(&ops, 0.2, 0.05);
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 1.0,
        };
        let times = [0.0, 0.123, 0.5, 0.777, 1.0];
        let traj = solve_full(&p, &ops, &initial, &spec, &times).unwrap();
        assert_eq!(traj.snapshots.len(), times.len());
        for (snap, want) in traj.snapshots.iter().zip(&times) {
            assert!(snap.t + 1e-12 >= *want);
            assert!(snap.t - want < spec.dt + 1e-12);
            let steps = snap.t / spec.dt;
            assert!((steps - steps.round()).abs() < 1e-6, "t = {} off-grid", snap.t);
        }
    }

    #[test]
    fn schedule_resolves_the_layer() {
        let sched = snapshot_schedule(2.0, 201, Some(0.02));
        assert!(sched.first().copied() == Some(0.0));
        assert!((sched.last().copied().unwrap() - 2.0).abs() < 1e-12);
        let in_layer = sched.iter().filter(|&&t| t <= 0.02 + 1e-15).count();
        assert!(in_layer >= 5, "only {in_layer} snapshots inside the layer");
        for pair in sched.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn audit_itemizes_rates() {
        let p = RossMacdonaldParams::default();
        let ops = setup(101, &p);
        let imex = step_size_audit(&p, Some(&ops), Scheme::ImexEuler);
        assert!(imex.dt_max >= 1e-3, "imex dt_max {}", imex.dt_max);
        assert!(imex.fast_rate.is_none());
        assert!((imex.slow_reaction_rate - 1.25).abs() < 1e-12);

        let rk4 = step_size_audit(&p, Some(&ops), Scheme::Rk4);
        assert!(rk4.dt_max < imex.dt_max);
        assert!(rk4.fast_rate.unwrap() > 100.0);

        // pure ODE budget comes from the reaction alone
        let ode = RossMacdonaldParams {
            d1: 0.0,
            d2: 0.0,
            ..p
        };
        let audit = step_size_audit(&ode, None, Scheme::ImexEuler);
        assert!((audit.dt_max - 1.0 / 1.25).abs() < 1e-12);
        assert_eq!(audit.nonlocal_rate, 0.0);

        // more dispersal tightens the budget
        let heavy = RossMacdonaldParams { d1: 1.0, ..p };
        let tight = step_size_audit(&heavy, Some(&ops), Scheme::ImexEuler);
        assert!(tight.dt_max < imex.dt_max);
    }

    #[test]
    fn invalid_specs_rejected() {
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.0,
            t_final: 1.0,
        };
        assert!(spec.validate().is_err());
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 2.0,
            t_final: 1.0,
        };
        assert!(spec.validate().is_err());
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let other = Grid::unit_interval(31).unwrap();
        let bad = SystemState::new(
            0.0,
            Field::constant(&other, 0.1),
            Field::constant(&other, 0.1),
        )
        .unwrap();
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 0.1,
        };
        assert!(matches!(
            solve_full(&p, &ops, &bad, &spec, &[0.1]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn step_full_single_step_matches_solver() {
        let p = RossMacdonaldParams::default();
        let ops = setup(51, &p);
        let initial = constant_state(&ops, 0.3, 0.1);
        let stepped = step_full(&p, &ops, &initial, 0.01, Scheme::ImexEuler).unwrap();
        let spec = StepperSpec {
            scheme: Scheme::ImexEuler,
            dt: 0.01,
            t_final: 0.01,
        };
        let traj = solve_full(&p, &ops, &initial, &spec, &[0.01]).unwrap();
        let last = traj.final_state().unwrap();
        assert_eq!(last.t, stepped.t);
        for (a, b) in last.i.values().iter().zip(stepped.i.values()) {
            assert_eq!(a, b);
        }
        for (a, b) in last.j.values().iter().zip(stepped.j.values()) {
            assert_eq!(a, b);
        }
    }
}
