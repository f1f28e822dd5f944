//! Acceptance gate: ten end-to-end checks, one test and one verdict line
//! each. Tolerances and run configurations are fixed; a failure here means a
//! claimed property of the scheme measurably does not hold.

mod common;

use common::{
    bisect_root, bump_kernel, bump_ops, decay_params, direct_nonlocal, line_grid, prototype,
    rk4_oracle, verdict, wavy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowfast::{
    convergence_study, decay_study, equilibria, eta_layer_study, pairing, snapshot_schedule,
    solve_full, solve_limit, step_size_audit, ConvolutionStrategy, Error, Field, NeumannLaplacian,
    NonlocalOperator, Scheme, StepperSpec, StudyReport, SystemState,
};
use std::sync::OnceLock;

/// Convergence sweep shared by criteria 6, 7, and 9. Computed once.
fn shared_convergence_report() -> &'static StudyReport {
    static REPORT: OnceLock<StudyReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let p = prototype();
        let ops = bump_ops(101, p.d2);
        let grid = ops.grid().clone();
        let initial =
            SystemState::new(0.0, wavy(&grid), Field::constant(&grid, 0.1)).unwrap();
        convergence_study(
            &p,
            &ops,
            &initial,
            None,
            5.0,
            1e-3,
            &[1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
        )
        .unwrap()
    })
}

#[test]
fn c01_operator_identities() {
    let grid = line_grid(201);
    let fft = NonlocalOperator::new(bump_kernel(&grid), ConvolutionStrategy::Fft);
    let direct = NonlocalOperator::new(bump_kernel(&grid), ConvolutionStrategy::Direct);
    let lap = NeumannLaplacian::new(&grid, 1.0).unwrap();

    let const_resid = fft.apply(&Field::constant(&grid, 1.0)).unwrap().linf_norm();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_quad: f64 = f64::NEG_INFINITY;
    let mut worst_lap: f64 = f64::NEG_INFINITY;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let u = Field::from_values(
            &grid,
            (0..grid.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let norm_sq = u.l2_norm().powi(2);

        let ku_fft = fft.apply(&u).unwrap();
        worst_quad = worst_quad.max(pairing(&u, &ku_fft).unwrap() / norm_sq);
        worst_lap = worst_lap.max(pairing(&u, &lap.apply(&u).unwrap()).unwrap());

        let ku_direct = direct.apply(&u).unwrap();
        let ku_oracle = direct_nonlocal(fft.kernel(), &u);
        let scale = ku_fft.linf_norm().max(1e-300);
        for ((f, d), o) in ku_fft.values().iter().zip(ku_direct.values()).zip(&ku_oracle) {
            worst_rel = worst_rel.max((f - d).abs() / scale).max((f - o).abs() / scale);
        }
    }

    let pass = const_resid <= 1e-10 && worst_quad <= 1e-12 && worst_lap <= 0.0 && worst_rel <= 1e-10;
    assert!(
        verdict(
            "criterion 01 operator identities",
            pass,
            &format!(
                "max|K 1| = {const_resid:.2e}, max <u,Ku>/|u|^2 = {worst_quad:.2e}, \
                 max <u,Lu> = {worst_lap:.2e}, fft/direct rel = {worst_rel:.2e}"
            ),
        ),
        "operator identities failed"
    );
}

#[test]
fn c02_slow_manifold_identity() {
    let p = prototype();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let x = k as f64 / 999.0;
        worst = worst.max(p.g(x, p.slow_manifold(x)).abs());
    }
    let pass = worst <= 1e-12;
    assert!(
        verdict(
            "criterion 02 slow-manifold identity",
            pass,
            &format!("max |g(x, m(x))| = {worst:.2e} over 1000 samples"),
        ),
        "manifold identity failed"
    );
}

#[test]
fn c03_equilibrium_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_resid: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..50 {
        let p = slowfast::RossMacdonaldParams {
            alpha_h: rng.gen_range(0.05..2.0),
            beta_h: rng.gen_range(0.05..2.0),
            alpha_v: rng.gen_range(0.05..2.0),
            beta_v: rng.gen_range(0.05..2.0),
            ..prototype()
        };
        let supercritical = p.alpha_h * p.alpha_v > p.beta_h * p.beta_v;
        let eq = equilibria(&p);
        assert_eq!(
            eq.endemic.is_some(),
            supercritical,
            "threshold misclassified at {p:?}"
        );
        assert_eq!(eq.disease_free_stable, !supercritical);
        if let Some(e) = eq.endemic {
            worst_resid = worst_resid.max(e.residual);
            let balance = |z: f64| {
                p.alpha_h * (1.0 - z) * (p.alpha_v * z / (p.alpha_v * z + p.beta_v))
                    - p.beta_h * z
            };
            let oracle = bisect_root(balance, 1e-12, 1.0 - 1e-12);
            worst_gap = worst_gap.max((e.i - oracle).abs());
        }
    }
    let proto_gap = (equilibria(&prototype()).endemic.unwrap().i - 0.7).abs();
    let pass = worst_resid <= 1e-10 && worst_gap <= 1e-9 && proto_gap <= 1e-9;
    assert!(
        verdict(
            "criterion 03 equilibrium threshold",
            pass,
            &format!(
                "50 tuples classified; residual {worst_resid:.2e}, bisection gap {worst_gap:.2e}, \
                 default-rates root off 0.7 by {proto_gap:.2e}"
            ),
        ),
        "equilibrium threshold failed"
    );
}

#[test]
fn c04_invariant_rectangle() {
    let p0 = prototype();
    let ops = bump_ops(101, p0.d2);
    let grid = ops.grid().clone();
    let audit = step_size_audit(&p0, Some(&ops), Scheme::ImexEuler);
    let dt = (0.5 * audit.dt_max).min(2e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..20 {
        let i0 = Field::from_values(
            &grid,
            (0..grid.n_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let j0 = Field::from_values(
            &grid,
            (0..grid.n_nodes()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let initial = SystemState::new(0.0, i0, j0).unwrap();
        for eps in [1e-1, 1e-2, 1e-3] {
            let p = slowfast::RossMacdonaldParams { epsilon: eps, ..p0 };
            let spec = StepperSpec {
                scheme: Scheme::ImexEuler,
                dt,
                t_final: 10.0,
            };
            let times = snapshot_schedule(10.0, 51, Some(eps / p.beta_v));
            let traj = solve_full(&p, &ops, &initial, &spec, &times).unwrap();
            for s in &traj.snapshots {
                lo = lo.min(s.i.min()).min(s.j.min());
                hi = hi.max(s.i.max()).max(s.j.max());
            }
        }
    }
    let pass = lo >= -1e-8 && hi <= 1.0 + 1e-8;
    assert!(
        verdict(
            "criterion 04 invariant rectangle",
            pass,
            &format!("60 runs to t = 10: node range [{lo:.3e}, {hi}]"),
        ),
        "invariant rectangle failed"
    );
}

#[test]
fn c05_boundary_layer() {
    // unit fast diffusion so the plateau is reaction-dominated; tiny d2 would
    // let the spatial boundary layer of the manifold drift dominate the ratios
    let p = slowfast::RossMacdonaldParams { d2: 1.0, ..prototype() };
    let ops = bump_ops(201, p.d2);
    let grid = ops.grid().clone();
    let initial = SystemState::new(0.0, wavy(&grid), Field::constant(&grid, 0.1)).unwrap();
    let report = eta_layer_study(&p, &ops, &initial, &[1e-1, 1e-2, 1e-3, 1e-4], 2.0).unwrap();
    let ratios: Vec<String> = report.plateau_ratios.iter().map(|r| format!("{r:.3}")).collect();
    let tstars: Vec<String> = report
        .normalized_layer_times
        .iter()
        .map(|t| format!("{t:.2}"))
        .collect();
    let pass = report.ratios_pass && report.layer_pass && report.all_pass;
    assert!(
        verdict(
            "criterion 05 boundary layer",
            pass,
            &format!(
                "plateau ratios [{}] in [0.2, 0.5]; t* delta/eps [{}] <= 10",
                ratios.join(", "),
                tstars.join(", ")
            ),
        ),
        "boundary layer failed: {report:?}"
    );
}

#[test]
fn c06_convergence_order() {
    let report = shared_convergence_report();
    let errs: Vec<String> = report.sup_errors.iter().map(|e| format!("{e:.3e}")).collect();
    let pass = report.monotone && report.order_in_range;
    assert!(
        verdict(
            "criterion 06 convergence order",
            pass,
            &format!(
                "sup errors [{}] monotone = {}, fitted order {:.3} in [0.45, 1.5]",
                errs.join(", "),
                report.monotone,
                report.fitted_order
            ),
        ),
        "convergence order failed: {report:?}"
    );
}

#[test]
fn c07_gronwall_envelope() {
    let report = shared_convergence_report();
    let pass = report.gronwall_pass;
    assert!(
        verdict(
            "criterion 07 energy envelope",
            pass,
            &format!(
                "max excess of d/dt E over 2 c1 E + 2 c2 |eta|^2 is {:.3e} (allowed 1e-6) \
                 with c1 = {}, c2 = {}",
                report.gronwall_max_excess, report.c1, report.c2
            ),
        ),
        "energy envelope failed"
    );
}

#[test]
fn c08_exponential_decay() {
    let p = decay_params();
    let ops = bump_ops(101, p.d2);
    let grid = ops.grid().clone();
    let initial = SystemState::new(0.0, wavy(&grid), Field::constant(&grid, 0.1)).unwrap();
    let report = decay_study(&p, &ops, &initial, 12.0, 1e-3, &[1e-2, 1e-3, 1e-4]).unwrap();

    let refusal = decay_study(&prototype(), &ops, &initial, 12.0, 1e-3, &[1e-2, 1e-3]);
    let refused = matches!(&refusal, Err(Error::StudyPrecondition(msg)) if msg.contains("margin"));

    let margins: Vec<String> = report
        .envelope_margins
        .iter()
        .map(|m| format!("{m:.2}"))
        .collect();
    let pass = report.all_pass && refused;
    assert!(
        verdict(
            "criterion 08 exponential decay",
            pass,
            &format!(
                "fitted rate {:.3} > 0, envelope margins [{}] >= 1, supercritical set refused = \
                 {refused}",
                report.fitted_rate,
                margins.join(", ")
            ),
        ),
        "exponential decay failed: {report:?} / refusal {refusal:?}"
    );
}

#[test]
fn c09_h1_uniform_bound() {
    let report = shared_convergence_report();
    let pass = report.h1_checked && report.h1_uniform;
    assert!(
        verdict(
            "criterion 09 gradient-norm uniformity",
            pass,
            &format!(
                "adjacent-epsilon H1 ratio {:.3} < 2 (checked = {})",
                report.h1_adjacent_ratio, report.h1_checked
            ),
        ),
        "gradient-norm uniformity failed"
    );
}

#[test]
fn c10_ode_consistency() {
    let p = slowfast::RossMacdonaldParams { epsilon: 0.1, ..prototype() };
    let ops = bump_ops(21, p.d2);
    let grid = ops.grid().clone();
    let initial = SystemState::new(
        0.0,
        Field::constant(&grid, 0.3),
        Field::constant(&grid, 0.1),
    )
    .unwrap();
    let spec = StepperSpec {
        scheme: Scheme::Rk4,
        dt: 1e-4,
        t_final: 2.0,
    };
    let times = vec![0.0, 2.0];

    let traj = solve_full(&p, &ops, &initial, &spec, &times).unwrap();
    let last = traj.final_state().unwrap();
    let oracle = rk4_oracle(
        |_, y: &[f64; 2]| [p.f(y[0], y[1]), p.g(y[0], y[1]) / p.epsilon],
        [0.3, 0.1],
        2.0,
        1e-6,
    );
    let full_err = last
        .i
        .values()
        .iter()
        .map(|v| (v - oracle[0]).abs())
        .chain(last.j.values().iter().map(|v| (v - oracle[1]).abs()))
        .fold(0.0f64, f64::max);

    let lim = solve_limit(&p, &ops, &initial.i, &spec, &times).unwrap();
    let lim_last = lim.final_state().unwrap();
    let lim_oracle = rk4_oracle(
        |_, y: &[f64; 1]| [p.f(y[0], p.slow_manifold(y[0]))],
        [0.3],
        2.0,
        1e-6,
    );
    let lim_err = lim_last
        .i
        .values()
        .iter()
        .map(|v| (v - lim_oracle[0]).abs())
        .fold(0.0f64, f64::max);

    let pass = full_err <= 1e-8 && lim_err <= 1e-8;
    assert!(
        verdict(
            "criterion 10 spatially-constant consistency",
            pass,
            &format!(
                "coupled system off scalar oracle by {full_err:.2e}, reduced equation by \
                 {lim_err:.2e} (allowed 1e-8)"
            ),
        ),
        "spatially-constant consistency failed"
    );
}
