//! Below the reproduction threshold, and with an actual contraction margin,
//! the squared distance between the coupled system and its reduced limit not
//! only stays of order epsilon but decays exponentially. The study measures
//! the rate, fits the envelope scale, and refuses parameter sets without the
//! margin rather than reporting a vacuous fit.

use slowfast::{decay_study, Error, Field, Grid, Kernel, KernelShape, Operators, RossMacdonaldParams, SystemState};

fn main() {
    let p = RossMacdonaldParams {
        alpha_h: 0.25,
        beta_h: 1.0,
        alpha_v: 0.5,
        beta_v: 1.0,
        ..Default::default()
    };
    let grid = Grid::new(&[1.0], &[81]).unwrap();
    let kernel = Kernel::build(&grid, KernelShape::SmoothBump { radius: 0.2 }).unwrap();
    let ops = Operators::build(kernel, p.d2).unwrap();
    let initial = SystemState::new(
        0.0,
        Field::from_fn(&grid, |x| 0.25 + 0.2 * (2.2 * x[0] + 0.3).sin()),
        Field::constant(&grid, 0.1),
    )
    .unwrap();

    let report = decay_study(&p, &ops, &initial, 10.0, 1e-3, &[1e-2, 1e-3]).unwrap();
    println!(
        "contraction margin {:.3} at weight rho = {:.4} (envelope constant {:.4} < 0)",
        report.acond_margin, report.decay_rho, report.c1_at_decay_rho
    );
    println!("fitted decay rate of |x - X|^2: {:.4}", report.fitted_rate);
    println!("envelope scale M2 (normalized by the largest epsilon): {:.4e}\n", report.m2_envelope);
    println!("{:>10}  {:>14}  {:>18}", "epsilon", "max |x - X|^2", "envelope margin");
    for k in 0..report.epsilons.len() {
        println!(
            "{:>10.2e}  {:>14.4e}  {:>18.2}",
            report.epsilons[k], report.max_sq_errors[k], report.envelope_margins[k]
        );
    }
    println!("\nenvelope M2 * eps * exp(-m t) dominates every run: {}", report.envelope_pass);

    // rates without a margin are refused, not fitted
    let super_critical = RossMacdonaldParams::default();
    match decay_study(&super_critical, &ops, &initial, 10.0, 1e-3, &[1e-2, 1e-3]) {
        Err(Error::StudyPrecondition(msg)) => {
            println!("\ndefault rates (R0 = {}): refused as expected\n  {msg}", super_critical.r0());
        }
        other => println!("\nunexpected outcome for the supercritical rates: {other:?}"),
    }
}
