//! Structural identities of the two spatial operators: the redistribution
//! operator annihilates constants and dissipates energy, the reflecting
//! Laplacian conserves constants, and the FFT and direct convolution paths
//! agree to round-off.

use slowfast::{
    boundary_mass, pairing, validate_kernel, ConvolutionStrategy, Field, Grid, Kernel,
    KernelShape, NeumannLaplacian, NonlocalOperator,
};

fn main() {
    let grid = Grid::new(&[1.0], &[201]).unwrap();
    let kernel = Kernel::build(&grid, KernelShape::SmoothBump { radius: 0.2 }).unwrap();

    let report = validate_kernel(&kernel);
    println!("kernel admissibility:");
    println!("  nonnegative      {} (residual {:.2e})", report.nonnegative.pass, report.nonnegative.residual);
    println!("  positive at zero {} (value    {:.4})", report.positive_at_zero.pass, kernel.peak());
    println!("  even             {} (residual {:.2e})", report.symmetric.pass, report.symmetric.residual);
    println!("  unit mass        {} (residual {:.2e})", report.unit_mass.pass, report.unit_mass.residual);
    println!("  c1 smooth        {}", report.c1_smooth);

    let bm = boundary_mass(&kernel);
    println!("\nnode mass: interior = {:.15}, boundary minimum = {:.6}", bm.values.values()[100], bm.min);

    let fft = NonlocalOperator::new(kernel, ConvolutionStrategy::Fft);
    let direct = NonlocalOperator::new(
        Kernel::build(&grid, KernelShape::SmoothBump { radius: 0.2 }).unwrap(),
        ConvolutionStrategy::Direct,
    );

    let ones = Field::constant(&grid, 1.0);
    println!("\nmax |K 1| = {:.2e} (constants are redistributed onto themselves)", fft.apply(&ones).unwrap().linf_norm());

    let u = Field::from_fn(&grid, |x| (7.0 * x[0]).sin() + 0.3 * (23.0 * x[0]).cos());
    let ku = fft.apply(&u).unwrap();
    let lap = NeumannLaplacian::new(&grid, 1.0).unwrap();
    println!("<u, K u> = {:.6} (nonpositive: mixing dissipates)", pairing(&u, &ku).unwrap());
    println!("<u, L u> = {:.6} (nonpositive: diffusion dissipates)", pairing(&u, &lap.apply(&u).unwrap()).unwrap());
    println!("|K u| <= pairing bound {:.3} * |u| (measured {:.3})", fft.pairing_bound(), ku.l2_norm() / u.l2_norm());

    let kd = direct.apply(&u).unwrap();
    let gap = ku
        .values()
        .iter()
        .zip(kd.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("\nfft vs direct evaluation: max gap = {:.2e}", gap);
}
