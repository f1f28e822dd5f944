//! Config-driven pipeline behind the `slowfast` binary.
//!
//! One TOML file describes a run: grid, kernel, model parameters, integrator,
//! initial data, study settings, and output location. The four commands share
//! that schema and differ only in what they execute:
//!
//! - `simulate` integrates the coupled system and writes a trajectory CSV;
//! - `limit` does the same for the reduced equation;
//! - `converge` runs the study named in `[study]` and writes a TOML report;
//! - `validate` audits the kernel, the reaction hypotheses, the equilibrium
//!   threshold, and the envelope constants.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 integration
//! failure, 3 a model invariant measured false (broken kernel, failed study
//! flag). Outputs are byte-stable for a fixed config and seed; nothing
//! wall-clock dependent is written to files.

use crate::analysis::{
    convergence_study, decay_study, eta_layer_study, stability_probe, StabilityMode,
};
use crate::grid::{Field, Grid};
use crate::integrator::{
    snapshot_schedule, solve_full, solve_limit, Operators, Scheme, StepperSpec, SystemState,
    Trajectory,
};
use crate::kernels::{boundary_mass, validate_kernel, Kernel, KernelShape, KernelValidationReport};
use crate::model::{check_hypotheses, equilibria, MarginCheck, RossMacdonaldParams};
use crate::{analysis::compute_constants, Error, Result};
use serde::Deserialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const USAGE: &str = "usage: slowfast <command> <config.toml>

commands:
  simulate   integrate the coupled system, write a trajectory CSV
  limit      integrate the reduced equation, write a trajectory CSV
  converge   run the [study] section (convergence | decay | layer | stability)
  validate   audit kernel, hypotheses, equilibria, and envelope constants

exit codes: 0 ok, 1 invalid config, 2 integration failure, 3 invariant failed";

/// Full description of one run, straight from a TOML file. Every section is
/// optional and defaults to the prototype setup.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for the perturbation generator in stability probes.
    pub seed: u64,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub model: RossMacdonaldParams,
    pub integrator: IntegratorSection,
    pub initial: InitialSection,
    pub study: StudySection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Domain side lengths, one entry per axis (1 or 2 entries).
    pub extent: Vec<f64>,
    /// Nodes per axis, matching `extent`.
    pub n_points: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            extent: vec![1.0],
            n_points: vec![201],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// `smooth_bump`, `gaussian_truncated`, `tent`, or `asymmetric_test`
    /// (a deliberately broken table for exercising the validation path).
    pub preset: String,
    pub radius: f64,
    pub sigma: f64,
    pub truncation: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            preset: "smooth_bump".to_string(),
            radius: 0.2,
            sigma: 0.05,
            truncation: 4.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    /// `imex_euler` or `rk4`.
    pub scheme: String,
    pub dt: f64,
    pub t_final: f64,
    /// Snapshot count for trajectory commands (uniform on `[0, t_final]`).
    pub snapshots: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            scheme: "imex_euler".to_string(),
            dt: 1e-3,
            t_final: 2.0,
            snapshots: 11,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `constant`, `zero`, `wavy`, or `bump`.
    pub i_profile: String,
    pub i_value: f64,
    /// As `i_profile`, plus `manifold` for `j(0) = m(i(0))`.
    pub j_profile: String,
    pub j_value: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            i_profile: "wavy".to_string(),
            i_value: 0.3,
            j_profile: "constant".to_string(),
            j_value: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    /// `convergence`, `decay`, `layer`, or `stability`.
    pub kind: String,
    /// Epsilon sweep, strictly decreasing. For `layer` these are the base
    /// values, each paired with its third.
    pub eps_list: Vec<f64>,
    /// Force `j(0) = m(i(0))` regardless of the `[initial]` section.
    pub on_manifold: Option<bool>,
    /// Start the reduced equation from the coupled system's `i(0)`.
    pub matched_initial: bool,
    /// Reduced-equation start when `matched_initial = false`.
    pub limit_i_profile: String,
    pub limit_i_value: f64,
    /// Fixed horizon for the plateau window of the `layer` study.
    pub plateau_horizon: f64,
    /// `endemic` or `disease_free`, for `stability`.
    pub mode: String,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            kind: "convergence".to_string(),
            eps_list: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            on_manifold: None,
            matched_initial: true,
            limit_i_profile: "constant".to_string(),
            limit_i_value: 0.3,
            plateau_horizon: 2.0,
            mode: "endemic".to_string(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
            prefix: "run".to_string(),
        }
    }
}

/// Dispatch `args` (command name plus config path) and return the process
/// exit code, printing human output to stdout and errors to stderr.
pub fn run(args: &[String]) -> i32 {
    if args.len() != 2 {
        eprintln!("{USAGE}");
        return 1;
    }
    let cfg = match load_config(Path::new(&args[1])) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let outcome = match args[0].as_str() {
        "simulate" => cmd_simulate(&cfg),
        "limit" => cmd_limit(&cfg),
        "converge" => cmd_converge(&cfg),
        "validate" => cmd_validate(&cfg),
        other => {
            eprintln!("unknown command `{other}`\n{USAGE}");
            return 1;
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error: integration failures are 2, everything else
/// (configuration, validation, precondition, IO) is 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Step { .. } | Error::LinearSolve(_) => 2,
        _ => 1,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))
}

struct Context {
    grid: Arc<Grid>,
    kernel_report: KernelValidationReport,
    kernel_preset: String,
    boundary_mass_min: f64,
    ops: Operators,
    p: RossMacdonaldParams,
}

fn build_context(cfg: &RunConfig) -> Result<Context> {
    let p = cfg.model;
    p.validate()?;
    let grid = Grid::new(&cfg.grid.extent, &cfg.grid.n_points)?;
    let kernel = build_kernel(&grid, &cfg.kernel)?;
    let kernel_report = validate_kernel(&kernel);
    let boundary_mass_min = boundary_mass(&kernel).min;
    let ops = Operators::build(kernel, p.d2)?;
    Ok(Context {
        grid,
        kernel_report,
        kernel_preset: cfg.kernel.preset.clone(),
        boundary_mass_min,
        ops,
        p,
    })
}

fn build_kernel(grid: &Arc<Grid>, ks: &KernelSection) -> Result<Kernel> {
    match ks.preset.as_str() {
        "smooth_bump" => Kernel::build(grid, KernelShape::SmoothBump { radius: ks.radius }),
        "gaussian_truncated" => Kernel::build(
            grid,
            KernelShape::GaussianTruncated {
                sigma: ks.sigma,
                truncation: ks.truncation,
            },
        ),
        "tent" => Kernel::build(grid, KernelShape::Tent { radius: ks.radius }),
        // deliberately broken table: one side scaled, so the evenness check
        // must fail and pipelines can prove they catch it
        "asymmetric_test" => {
            let bump = |r: f64| -> f64 {
                if r < ks.radius {
                    let s = r / ks.radius;
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            };
            let h = grid.spacing();
            let mut table = Vec::new();
            match grid.dim() {
                1 => {
                    let n = grid.shape()[0] as isize;
                    for mx in -(n - 1)..=(n - 1) {
                        let v = bump((mx as f64 * h[0]).abs());
                        table.push(if mx > 0 { 1.5 * v } else { v });
                    }
                }
                _ => {
                    let (nx, ny) = (grid.shape()[0] as isize, grid.shape()[1] as isize);
                    for mx in -(nx - 1)..=(nx - 1) {
                        for my in -(ny - 1)..=(ny - 1) {
                            let v = bump((mx as f64 * h[0]).hypot(my as f64 * h[1]));
                            table.push(if mx > 0 { 1.5 * v } else { v });
                        }
                    }
                }
            }
            Kernel::from_table(grid, table)
        }
        other => Err(Error::config(
            "kernel.preset",
            format!(
                "unknown preset `{other}` (expected smooth_bump, gaussian_truncated, tent, \
                 or asymmetric_test)"
            ),
        )),
    }
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    match name {
        "imex_euler" => Ok(Scheme::ImexEuler),
        "rk4" => Ok(Scheme::Rk4),
        other => Err(Error::config(
            "integrator.scheme",
            format!("unknown scheme `{other}` (expected imex_euler or rk4)"),
        )),
    }
}

fn build_profile(grid: &Arc<Grid>, name: &str, value: f64, field: &str) -> Result<Field> {
    let dim = grid.dim();
    let out = match name {
        "constant" => Field::constant(grid, value),
        "zero" => Field::zeros(grid),
        "wavy" => Field::from_fn(grid, |x| {
            let mut v = (2.2 * x[0] + 0.3).sin();
            if dim == 2 {
                v *= (1.9 * x[1] + 0.7).cos();
            }
            0.25 + 0.2 * v
        }),
        "bump" => {
            let extent = grid.extent().to_vec();
            Field::from_fn(grid, move |x| {
                let mut s = 0.0;
                for k in 0..dim {
                    let z = (x[k] - 0.5 * extent[k]) / (0.15 * extent[k]);
                    s += z * z;
                }
                0.1 + 0.6 * (-s).exp()
            })
        }
        other => {
            return Err(Error::config(
                field,
                format!("unknown profile `{other}` (expected constant, zero, wavy, or bump)"),
            ))
        }
    };
    Ok(out)
}

fn manifold_of(p: &RossMacdonaldParams, i: &Field) -> Field {
    let mut j = i.clone();
    for v in j.values_mut() {
        *v = p.slow_manifold(*v);
    }
    j
}

fn check_unit_box(f: &Field, field: &str) -> Result<()> {
    if f.min() < -1e-9 || f.max() > 1.0 + 1e-9 {
        return Err(Error::config(
            field,
            format!(
                "initial data must lie in [0, 1], got range [{}, {}]",
                f.min(),
                f.max()
            ),
        ));
    }
    Ok(())
}

fn build_initial(cfg: &RunConfig, ctx: &Context) -> Result<SystemState> {
    let i0 = build_profile(&ctx.grid, &cfg.initial.i_profile, cfg.initial.i_value, "initial.i_profile")?;
    check_unit_box(&i0, "initial.i_value")?;
    let on_manifold =
        cfg.study.on_manifold.unwrap_or(false) || cfg.initial.j_profile == "manifold";
    let j0 = if on_manifold {
        manifold_of(&ctx.p, &i0)
    } else {
        let j0 = build_profile(&ctx.grid, &cfg.initial.j_profile, cfg.initial.j_value, "initial.j_profile")?;
        check_unit_box(&j0, "initial.j_value")?;
        j0
    };
    SystemState::new(0.0, i0, j0)
}

fn stepper_spec(cfg: &RunConfig) -> Result<(StepperSpec, Vec<f64>)> {
    let scheme = parse_scheme(&cfg.integrator.scheme)?;
    let spec = StepperSpec {
        scheme,
        dt: cfg.integrator.dt,
        t_final: cfg.integrator.t_final,
    };
    spec.validate()?;
    let count = cfg.integrator.snapshots;
    if count < 2 {
        return Err(Error::config(
            "integrator.snapshots",
            format!("need at least 2 snapshots, got {count}"),
        ));
    }
    let spacing = spec.t_final / (count - 1) as f64;
    if spacing < spec.dt * (1.0 - 1e-9) {
        return Err(Error::config(
            "integrator.snapshots",
            format!(
                "snapshot spacing {spacing} is finer than dt = {}; each snapshot needs its \
                 own step boundary",
                spec.dt
            ),
        ));
    }
    Ok((spec, snapshot_schedule(spec.t_final, count, None)))
}

fn kernel_failure_message(report: &KernelValidationReport) -> String {
    let mut lines = String::from("kernel validation failed:\n");
    let mut item = |name: &str, c: &crate::kernels::CheckResult| {
        let _ = writeln!(
            lines,
            "  {name}: {} (residual {})",
            if c.pass { "pass" } else { "FAIL" },
            c.residual
        );
    };
    item("nonnegative", &report.nonnegative);
    item("positive_at_zero", &report.positive_at_zero);
    item("symmetric", &report.symmetric);
    item("unit_mass", &report.unit_mass);
    lines
}

fn out_path(cfg: &RunConfig, suffix: &str) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    Ok(dir.join(format!("{}_{suffix}", cfg.output.prefix)))
}

fn preamble(cfg: &RunConfig, command: &str, traj: &Trajectory) -> Vec<(String, String)> {
    let g = &cfg.grid;
    let join_f = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join("x")
    };
    let join_u = |v: &[usize]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join("x")
    };
    let p = cfg.model;
    vec![
        ("command".into(), command.into()),
        ("grid_extent".into(), join_f(&g.extent)),
        ("grid_points".into(), join_u(&g.n_points)),
        ("kernel".into(), cfg.kernel.preset.clone()),
        ("scheme".into(), cfg.integrator.scheme.clone()),
        ("dt".into(), cfg.integrator.dt.to_string()),
        ("t_final".into(), cfg.integrator.t_final.to_string()),
        ("alpha_h".into(), p.alpha_h.to_string()),
        ("beta_h".into(), p.beta_h.to_string()),
        ("alpha_v".into(), p.alpha_v.to_string()),
        ("beta_v".into(), p.beta_v.to_string()),
        ("d1".into(), p.d1.to_string()),
        ("d2".into(), p.d2.to_string()),
        ("epsilon".into(), p.epsilon.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("snapshots".into(), traj.snapshots.len().to_string()),
        ("steps".into(), traj.steps_taken.to_string()),
    ]
}

fn write_trajectory_csv(
    path: &Path,
    meta: &[(String, String)],
    p: &RossMacdonaldParams,
    traj: &Trajectory,
) -> Result<usize> {
    let grid = traj
        .snapshots
        .first()
        .map(|s| s.i.grid().clone())
        .ok_or_else(|| Error::StudyPrecondition("trajectory has no snapshots".to_string()))?;
    let dim = grid.dim();
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "{}", if dim == 1 { "t,x,i,j,eta" } else { "t,x,y,i,j,eta" });
    let mut rows = 0usize;
    for s in &traj.snapshots {
        for k in 0..grid.n_nodes() {
            let node = grid.node(k);
            let i = s.i.values()[k];
            let j = s.j.values()[k];
            let eta = j - p.slow_manifold(i);
            if dim == 1 {
                let _ = writeln!(out, "{},{},{},{},{}", s.t, node[0], i, j, eta);
            } else {
                let _ = writeln!(out, "{},{},{},{},{},{}", s.t, node[0], node[1], i, j, eta);
            }
            rows += 1;
        }
    }
    fs::write(path, out)?;
    Ok(rows)
}

/// Integrate the coupled system and write `<prefix>_trajectory.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let ctx = build_context(cfg)?;
    if !ctx.kernel_report.all_pass() {
        print!("{}", kernel_failure_message(&ctx.kernel_report));
        return Ok(3);
    }
    let initial = build_initial(cfg, &ctx)?;
    let (spec, times) = stepper_spec(cfg)?;
    let traj = solve_full(&ctx.p, &ctx.ops, &initial, &spec, &times)?;
    let path = out_path(cfg, "trajectory.csv")?;
    let rows = write_trajectory_csv(&path, &preamble(cfg, "simulate", &traj), &ctx.p, &traj)?;
    println!(
        "wrote {} ({} snapshots x {} nodes = {} rows)",
        path.display(),
        traj.snapshots.len(),
        ctx.grid.n_nodes(),
        rows
    );
    Ok(0)
}

/// Integrate the reduced equation and write `<prefix>_limit.csv`; the `j`
/// column carries the manifold fill `m(i)` and `eta` is identically zero.
pub fn cmd_limit(cfg: &RunConfig) -> Result<i32> {
    let ctx = build_context(cfg)?;
    if !ctx.kernel_report.all_pass() {
        print!("{}", kernel_failure_message(&ctx.kernel_report));
        return Ok(3);
    }
    let initial = build_initial(cfg, &ctx)?;
    let (spec, times) = stepper_spec(cfg)?;
    let traj = solve_limit(&ctx.p, &ctx.ops, &initial.i, &spec, &times)?;
    let path = out_path(cfg, "limit.csv")?;
    let rows = write_trajectory_csv(&path, &preamble(cfg, "limit", &traj), &ctx.p, &traj)?;
    println!(
        "wrote {} ({} snapshots x {} nodes = {} rows)",
        path.display(),
        traj.snapshots.len(),
        ctx.grid.n_nodes(),
        rows
    );
    Ok(0)
}

fn to_toml<T: serde::Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::ConfigParse(format!("report encoding: {e}")))
}

/// Run the configured study and write `<prefix>_<kind>.toml`. Exits 3 when
/// any invariant flag in the report is false.
pub fn cmd_converge(cfg: &RunConfig) -> Result<i32> {
    let ctx = build_context(cfg)?;
    if !ctx.kernel_report.all_pass() {
        print!("{}", kernel_failure_message(&ctx.kernel_report));
        return Ok(3);
    }
    let initial = build_initial(cfg, &ctx)?;
    let t_final = cfg.integrator.t_final;
    let dt = cfg.integrator.dt;
    match cfg.study.kind.as_str() {
        "convergence" => {
            let limit_initial = if cfg.study.matched_initial {
                None
            } else {
                let f = build_profile(
                    &ctx.grid,
                    &cfg.study.limit_i_profile,
                    cfg.study.limit_i_value,
                    "study.limit_i_profile",
                )?;
                check_unit_box(&f, "study.limit_i_value")?;
                Some(f)
            };
            let report = convergence_study(
                &ctx.p,
                &ctx.ops,
                &initial,
                limit_initial.as_ref(),
                t_final,
                dt,
                &cfg.study.eps_list,
            )?;
            let path = out_path(cfg, "convergence.toml")?;
            fs::write(&path, to_toml(&report)?)?;
            println!("convergence study over {} epsilons", report.epsilons.len());
            for (e, err) in report.epsilons.iter().zip(&report.sup_errors) {
                println!("  eps {e:>10.3e}  sup error {err:.6e}");
            }
            println!(
                "fitted order {:.3} (in [0.45, 1.5]: {}), monotone {}, envelope excess {:.3e}, \
                 h1 ratio {:.3}",
                report.fitted_order,
                report.order_in_range,
                report.monotone,
                report.gronwall_max_excess,
                report.h1_adjacent_ratio
            );
            println!("report: {}", path.display());
            Ok(if report.all_pass { 0 } else { 3 })
        }
        "decay" => {
            let report = decay_study(&ctx.p, &ctx.ops, &initial, t_final, dt, &cfg.study.eps_list)?;
            let path = out_path(cfg, "decay.toml")?;
            fs::write(&path, to_toml(&report)?)?;
            println!(
                "decay study: margin {:.4}, fitted rate {:.4}, envelope scale {:.4e}",
                report.acond_margin, report.fitted_rate, report.m2_envelope
            );
            for (e, m) in report.epsilons.iter().zip(&report.envelope_margins) {
                println!("  eps {e:>10.3e}  envelope margin {m:.3}");
            }
            println!("report: {}", path.display());
            Ok(if report.all_pass { 0 } else { 3 })
        }
        "layer" => {
            let report = eta_layer_study(
                &ctx.p,
                &ctx.ops,
                &initial,
                &cfg.study.eps_list,
                cfg.study.plateau_horizon,
            )?;
            let path = out_path(cfg, "layer.toml")?;
            fs::write(&path, to_toml(&report)?)?;
            println!("layer study over {} runs", report.epsilons.len());
            for (e, r) in report.base_epsilons.iter().zip(&report.plateau_ratios) {
                println!("  plateau(eps/3)/plateau(eps) at eps {e:>10.3e}: {r:.3}");
            }
            for (e, t) in report.epsilons.iter().zip(&report.normalized_layer_times) {
                println!("  t* delta/eps at eps {e:>10.3e}: {t:.2}");
            }
            println!("report: {}", path.display());
            Ok(if report.all_pass { 0 } else { 3 })
        }
        "stability" => {
            let mode: StabilityMode = cfg.study.mode.parse()?;
            let report = stability_probe(&ctx.p, &ctx.ops, mode, cfg.seed, t_final)?;
            let path = out_path(cfg, "stability.toml")?;
            fs::write(&path, to_toml(&report)?)?;
            println!(
                "stability probe ({}): deviation {:.3e} -> {:.3e}, converged {}",
                report.mode, report.initial_deviation, report.final_deviation, report.converged
            );
            println!("report: {}", path.display());
            Ok(if report.converged { 0 } else { 3 })
        }
        other => Err(Error::config(
            "study.kind",
            format!(
                "unknown study `{other}` (expected convergence, decay, layer, or stability)"
            ),
        )),
    }
}

fn margin_line(name: &str, check: &MarginCheck) -> String {
    format!(
        "  {name}: {} (worst margin {:.3e} at ({:.3}, {:.3}))\n",
        if check.pass { "pass" } else { "FAIL" },
        check.worst_margin,
        check.witness[0],
        check.witness[1]
    )
}

/// Print kernel, hypothesis, threshold, and constants verdicts. Exits 3 when
/// the kernel or a structural hypothesis fails; threshold classifications
/// (sub- or supercritical) are reports, not failures.
pub fn cmd_validate(cfg: &RunConfig) -> Result<i32> {
    let ctx = build_context(cfg)?;
    let mut out = String::new();
    let kr = &ctx.kernel_report;
    let _ = writeln!(out, "kernel `{}`:", ctx.kernel_preset);
    let item = |out: &mut String, name: &str, c: &crate::kernels::CheckResult| {
        let _ = writeln!(
            out,
            "  {name}: {} (residual {:.3e})",
            if c.pass { "pass" } else { "FAIL" },
            c.residual
        );
    };
    item(&mut out, "nonnegative", &kr.nonnegative);
    item(&mut out, "positive_at_zero", &kr.positive_at_zero);
    item(&mut out, "symmetric", &kr.symmetric);
    item(&mut out, "unit_mass", &kr.unit_mass);
    let _ = writeln!(
        out,
        "  c1_smooth: {}{}",
        kr.c1_smooth,
        if kr.c1_smooth {
            ""
        } else {
            "  (warning: gradient bounds are not certified for kinked kernels)"
        }
    );
    let _ = writeln!(out, "  truncation_jump: {:.3e}", kr.truncation_jump);
    let _ = writeln!(out, "  boundary_mass_min: {:.6}", ctx.boundary_mass_min);

    let hyp = check_hypotheses(&ctx.p.general(), ctx.p.epsilon, 200)?;
    let _ = writeln!(out, "reaction hypotheses:");
    out.push_str(&margin_line("bounds_and_partials", &hyp.reaction_bounds));
    out.push_str(&margin_line("manifold_box", &hyp.manifold_box));
    out.push_str(&margin_line("manifold_residual", &hyp.manifold_residual));
    out.push_str(&margin_line("inward_flux", &hyp.inward_flux));
    out.push_str(&margin_line("shifted_monotone", &hyp.shifted_monotone));

    let eq = equilibria(&ctx.p);
    let _ = writeln!(out, "threshold:");
    let _ = writeln!(out, "  {}", eq.describe());

    let constants = compute_constants(&ctx.p.hypothesis_constants(), 1.0)?;
    let _ = writeln!(out, "envelope constants at rho = 1:");
    let _ = writeln!(out, "  c1 = {:.6}, c2 = {:.6}", constants.c1, constants.c2);
    let _ = writeln!(
        out,
        "  contraction margin = {:.6} ({})",
        constants.acond_margin,
        if constants.acond_holds { "holds" } else { "fails" }
    );
    if let (Some(r), Some(c1)) = (constants.decay_rho, constants.c1_at_decay_rho) {
        let _ = writeln!(out, "  decay rho = {r:.6} gives c1 = {c1:.6}");
    }
    print!("{out}");
    Ok(if kr.all_pass() && hyp.all_pass() { 0 } else { 3 })
}
