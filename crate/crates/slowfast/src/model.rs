//! Reaction nonlinearities, the slow manifold, hypothesis audits, and
//! equilibrium analysis.
//!
//! The concrete instance is a host-vector infection pair with normalized
//! densities `x` (host, slow) and `y` (vector, fast):
//!
//! ```text
//!   f(x, y) = alpha_h (1 - x) y - beta_h x
//!   g(x, y) = alpha_v (1 - y) x - beta_v y
//! ```
//!
//! `g` is affine in `y`, so the fast equilibrium relation `g(x, m(x)) = 0`
//! has the closed form `m(x) = alpha_v x / (alpha_v x + beta_v)`, which is
//! what the limit equation substitutes for the vector density.
//!
//! The qualitative theory needs quantitative structure on the invariant
//! rectangle `[0, x_cap] x [0, y_cap]` (both caps are 1 for normalized
//! densities): bounds and sign conditions on the partials of `f` and `g`,
//! a box for the manifold and its slope, inward-pointing flux just outside
//! the rectangle, and monotonicity after adding a shift `rho_hat * (x, y)`.
//! `check_hypotheses` audits all of these on a dense lattice and reports
//! worst margins with witness points instead of bare booleans.
//!
//! The basic reproduction number is `R0 = (alpha_h alpha_v) / (beta_h beta_v)`;
//! an endemic equilibrium exists exactly when `R0 > 1` and is located by
//! bisection (the closed form printed in some references is wrong unless
//! `alpha_v = 1`; the numeric root is authoritative here and agrees with the
//! corrected denominator `alpha_v (alpha_h + beta_h)`).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the host-vector system, including dispersal coefficients
/// and the time-scale ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RossMacdonaldParams {
    /// Host transmission rate (1/time).
    pub alpha_h: f64,
    /// Host recovery plus mortality rate (1/time).
    pub beta_h: f64,
    /// Vector transmission rate (1/time).
    pub alpha_v: f64,
    /// Vector mortality rate (1/time).
    pub beta_v: f64,
    /// Host nonlocal dispersal coefficient (1/time).
    pub d1: f64,
    /// Vector diffusion coefficient (length^2/time).
    pub d2: f64,
    /// Time-scale ratio; the vector relaxes at rate 1/epsilon.
    pub epsilon: f64,
}

impl Default for RossMacdonaldParams {
    /// The prototype parameter set used throughout the tests: R0 = 8,
    /// endemic host level 0.7.
    fn default() -> Self {
        RossMacdonaldParams {
            alpha_h: 1.0,
            beta_h: 0.25,
            alpha_v: 1.0,
            beta_v: 0.5,
            d1: 0.1,
            d2: 1e-3,
            epsilon: 1e-2,
        }
    }
}

impl RossMacdonaldParams {
    /// Reject nonpositive rates, negative dispersal coefficients, and
    /// epsilon outside (0, 1].
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.alpha_h", self.alpha_h),
            ("model.beta_h", self.beta_h),
            ("model.alpha_v", self.alpha_v),
            ("model.beta_v", self.beta_v),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("rate must be positive, got {v}")));
            }
        }
        for (name, v) in [("model.d1", self.d1), ("model.d2", self.d2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(
                    name,
                    format!("dispersal coefficient must be >= 0, got {v}"),
                ));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(
                "model.epsilon",
                format!("time-scale ratio must lie in (0, 1], got {}", self.epsilon),
            ));
        }
        Ok(())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Slow reaction `f(x, y) = alpha_h (1 - x) y - beta_h x`.
    pub fn f(&self, x: f64, y: f64) -> f64 {
        self.alpha_h * (1.0 - x) * y - self.beta_h * x
    }

    /// Fast reaction `g(x, y) = alpha_v (1 - y) x - beta_v y`.
    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.alpha_v * (1.0 - y) * x - self.beta_v * y
    }

    pub fn f_x(&self, _x: f64, y: f64) -> f64 {
        -self.alpha_h * y - self.beta_h
    }

    pub fn f_y(&self, x: f64, _y: f64) -> f64 {
        self.alpha_h * (1.0 - x)
    }

    pub fn g_x(&self, _x: f64, y: f64) -> f64 {
        self.alpha_v * (1.0 - y)
    }

    pub fn g_y(&self, x: f64, _y: f64) -> f64 {
        -self.alpha_v * x - self.beta_v
    }

    /// The fast-equilibrium manifold `m(x) = alpha_v x / (alpha_v x + beta_v)`,
    /// satisfying `g(x, m(x)) = 0` identically.
    pub fn slow_manifold(&self, x: f64) -> f64 {
        self.alpha_v * x / (self.alpha_v * x + self.beta_v)
    }

    /// `m'(x) = alpha_v beta_v / (alpha_v x + beta_v)^2`.
    pub fn slow_manifold_deriv(&self, x: f64) -> f64 {
        let q = self.alpha_v * x + self.beta_v;
        self.alpha_v * self.beta_v / (q * q)
    }

    /// Right-hand side of the scalar limit equation, `f(x, m(x))`.
    pub fn limit_rhs(&self, x: f64) -> f64 {
        self.f(x, self.slow_manifold(x))
    }

    /// Basic reproduction number `R0 = alpha_h alpha_v / (beta_h beta_v)`.
    pub fn r0(&self) -> f64 {
        self.alpha_h * self.alpha_v / (self.beta_h * self.beta_v)
    }

    /// Constants realizing the hypothesis inequalities on the unit rectangle.
    pub fn hypothesis_constants(&self) -> HypothesisConstants {
        HypothesisConstants {
            x_cap: 1.0,
            y_cap: 1.0,
            alpha: self.beta_h,
            beta: self.alpha_h,
            gamma: self.alpha_v,
            delta: self.beta_v,
            bound_k: self.alpha_h.max(self.beta_h).max(self.alpha_v).max(self.beta_v),
            monotone_shift: (self.alpha_h + self.beta_h).max(self.alpha_v + self.beta_v),
        }
    }

    /// Wrap the closed forms as a general reaction system (mainly to exercise
    /// the generic code paths and the hypothesis auditor).
    pub fn general(&self) -> GeneralReaction {
        let p = *self;
        GeneralReaction {
            f: Box::new(move |x, y| p.f(x, y)),
            g: Box::new(move |x, y| p.g(x, y)),
            f_x: Box::new(move |x, y| p.f_x(x, y)),
            f_y: Box::new(move |x, y| p.f_y(x, y)),
            g_x: Box::new(move |x, y| p.g_x(x, y)),
            g_y: Box::new(move |x, y| p.g_y(x, y)),
            m: Box::new(move |x| p.slow_manifold(x)),
            m_prime: Box::new(move |x| p.slow_manifold_deriv(x)),
            affine: None,
            constants: self.hypothesis_constants(),
        }
    }
}

/// The integrator's view of a reaction pair: enough structure to step the
/// coupled system and the limit equation.
pub trait ReactionSystem: Send + Sync {
    fn f(&self, x: f64, y: f64) -> f64;
    fn g(&self, x: f64, y: f64) -> f64;
    fn g_y(&self, x: f64, y: f64) -> f64;
    fn slow_manifold(&self, x: f64) -> f64;
    fn slow_manifold_deriv(&self, x: f64) -> f64;
    /// When `g(x, y) = a(x) - b(x) y` with `b > 0`, return `(a, b)` so the
    /// implicit fast step can be solved exactly; `None` means the integrator
    /// falls back to Newton iteration.
    fn fast_affine(&self, x: f64) -> Option<(f64, f64)>;
}

impl ReactionSystem for RossMacdonaldParams {
    fn f(&self, x: f64, y: f64) -> f64 {
        RossMacdonaldParams::f(self, x, y)
    }
    fn g(&self, x: f64, y: f64) -> f64 {
        RossMacdonaldParams::g(self, x, y)
    }
    fn g_y(&self, x: f64, y: f64) -> f64 {
        RossMacdonaldParams::g_y(self, x, y)
    }
    fn slow_manifold(&self, x: f64) -> f64 {
        RossMacdonaldParams::slow_manifold(self, x)
    }
    fn slow_manifold_deriv(&self, x: f64) -> f64 {
        RossMacdonaldParams::slow_manifold_deriv(self, x)
    }
    fn fast_affine(&self, x: f64) -> Option<(f64, f64)> {
        // g = alpha_v x - (alpha_v x + beta_v) y
        Some((self.alpha_v * x, self.alpha_v * x + self.beta_v))
    }
}

pub type ScalarFn2 = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type ScalarFn1 = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type AffineFn = Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// A user-supplied reaction pair with its partials, manifold, and hypothesis
/// constants. Built as a plain struct literal of boxed closures.
pub struct GeneralReaction {
    pub f: ScalarFn2,
    pub g: ScalarFn2,
    pub f_x: ScalarFn2,
    pub f_y: ScalarFn2,
    pub g_x: ScalarFn2,
    pub g_y: ScalarFn2,
    pub m: ScalarFn1,
    pub m_prime: ScalarFn1,
    /// Exact implicit fast solve when `g` is affine in `y`; `None` selects
    /// Newton iteration.
    pub affine: Option<AffineFn>,
    pub constants: HypothesisConstants,
}

impl ReactionSystem for GeneralReaction {
    fn f(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }
    fn g(&self, x: f64, y: f64) -> f64 {
        (self.g)(x, y)
    }
    fn g_y(&self, x: f64, y: f64) -> f64 {
        (self.g_y)(x, y)
    }
    fn slow_manifold(&self, x: f64) -> f64 {
        (self.m)(x)
    }
    fn slow_manifold_deriv(&self, x: f64) -> f64 {
        (self.m_prime)(x)
    }
    fn fast_affine(&self, x: f64) -> Option<(f64, f64)> {
        self.affine.as_ref().map(|a| a(x))
    }
}

/// Constants realizing the structural hypotheses on the invariant rectangle
/// `[0, x_cap] x [0, y_cap]`:
///
/// - `|f| <= bound_k`, `|g| <= bound_k`
/// - `f_x <= -alpha`, `0 <= f_y <= beta * x_cap`
/// - `g_y <= -delta`, `0 <= g_x <= gamma * y_cap`
/// - `0 <= m(x) <= (gamma/delta) x_cap y_cap`, `0 <= m'(x) <= gamma y_cap / delta`
/// - adding `monotone_shift * (x, y)` makes the reaction field monotone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub x_cap: f64,
    pub y_cap: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub bound_k: f64,
    pub monotone_shift: f64,
}

/// Worst margin of a family of inequalities over a sample lattice. The margin
/// is `min(required - measured)` oriented so that nonnegative means satisfied;
/// a small negative tolerance absorbs round-off when a bound is attained with
/// equality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginCheck {
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: [f64; 2],
}

const MARGIN_SLACK: f64 = 1e-9;

impl MarginCheck {
    fn from_samples(samples: impl Iterator<Item = (f64, [f64; 2])>) -> MarginCheck {
        let mut worst = f64::INFINITY;
        let mut witness = [0.0, 0.0];
        for (margin, at) in samples {
            if margin < worst {
                worst = margin;
                witness = at;
            }
        }
        MarginCheck {
            pass: worst >= -MARGIN_SLACK,
            worst_margin: worst,
            witness,
        }
    }
}

/// Audit outcome for the structural hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    /// Sup bounds and partial-derivative sign/size conditions on `f` and `g`.
    pub reaction_bounds: MarginCheck,
    /// Manifold and slope stay inside their box on `[0, x_cap]`.
    pub manifold_box: MarginCheck,
    /// `|g(x, m(x))|` residual (margin is `1e-10 - residual`).
    pub manifold_residual: MarginCheck,
    /// Face-normal components point into the rectangle along its boundary,
    /// and the radial dot at the outer corner is negative.
    pub inward_flux: MarginCheck,
    /// `(f, g) + monotone_shift * (x, y)` is monotone on the rectangle.
    pub shifted_monotone: MarginCheck,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.reaction_bounds.pass
            && self.manifold_box.pass
            && self.manifold_residual.pass
            && self.inward_flux.pass
            && self.shifted_monotone.pass
    }
}

/// Sample every hypothesis inequality on a `lattice x lattice` grid over the
/// rectangle, the face-normal flux along each boundary face, and the radial
/// dot (fast component weighted by `1/epsilon`) at the outer corner.
/// `lattice` must be at least 50.
pub fn check_hypotheses(
    reaction: &GeneralReaction,
    epsilon: f64,
    lattice: usize,
) -> Result<HypothesisReport> {
    if lattice < 50 {
        return Err(Error::config(
            "hypothesis.lattice",
            format!("need at least 50 sample points per axis, got {lattice}"),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::config(
            "model.epsilon",
            format!("time-scale ratio must be positive, got {epsilon}"),
        ));
    }
    let c = reaction.constants;
    let xs: Vec<f64> = (0..lattice)
        .map(|k| c.x_cap * k as f64 / (lattice - 1) as f64)
        .collect();
    let ys: Vec<f64> = (0..lattice)
        .map(|k| c.y_cap * k as f64 / (lattice - 1) as f64)
        .collect();

    let mut bound_samples = Vec::new();
    let mut monotone_samples = Vec::new();
    for &x in &xs {
        for &y in &ys {
            let at = [x, y];
            let (f, g) = ((reaction.f)(x, y), (reaction.g)(x, y));
            let (fx, fy) = ((reaction.f_x)(x, y), (reaction.f_y)(x, y));
            let (gx, gy) = ((reaction.g_x)(x, y), (reaction.g_y)(x, y));
            bound_samples.push((c.bound_k - f.abs(), at));
            bound_samples.push((c.bound_k - g.abs(), at));
            bound_samples.push((-c.alpha - fx, at));
            bound_samples.push((fy, at));
            bound_samples.push((c.beta * c.x_cap - fy, at));
            bound_samples.push((-c.delta - gy, at));
            bound_samples.push((gx, at));
            bound_samples.push((c.gamma * c.y_cap - gx, at));
            monotone_samples.push((fx + c.monotone_shift, at));
            monotone_samples.push((fy, at));
            monotone_samples.push((gx, at));
            monotone_samples.push((gy + c.monotone_shift, at));
        }
    }

    let m_cap = c.gamma / c.delta * c.x_cap * c.y_cap;
    let m_slope_cap = c.gamma * c.y_cap / c.delta;
    let mut box_samples = Vec::new();
    let mut residual_samples = Vec::new();
    for &x in &xs {
        let at = [x, 0.0];
        let m = (reaction.m)(x);
        let mp = (reaction.m_prime)(x);
        box_samples.push((m, at));
        box_samples.push((m_cap - m, at));
        box_samples.push((mp, at));
        box_samples.push((m_slope_cap - mp, at));
        residual_samples.push((1e-10 - (reaction.g)(x, m).abs(), at));
    }

    // Face-normal inward flux on the rectangle boundary (what makes the
    // rectangle invariant), plus the radial test at the outer corner. The
    // radial condition is only an at-infinity statement: just outside a face
    // the fast component can point outward radially while the face flux
    // still traps the rectangle, so faces are the honest check.
    let mut flux_samples = Vec::new();
    for k in 0..lattice {
        let s = k as f64 / (lattice - 1) as f64;
        let (x, y) = (s * c.x_cap, s * c.y_cap);
        flux_samples.push(((reaction.f)(0.0, y), [0.0, y]));
        flux_samples.push((-(reaction.f)(c.x_cap, y), [c.x_cap, y]));
        flux_samples.push(((reaction.g)(x, 0.0), [x, 0.0]));
        flux_samples.push((-(reaction.g)(x, c.y_cap), [x, c.y_cap]));
    }
    let (cx, cy) = (1.1 * c.x_cap, 1.1 * c.y_cap);
    let corner_dot = cx * (reaction.f)(cx, cy) + cy * (reaction.g)(cx, cy) / epsilon;
    flux_samples.push((-corner_dot, [cx, cy]));

    Ok(HypothesisReport {
        reaction_bounds: MarginCheck::from_samples(bound_samples.into_iter()),
        manifold_box: MarginCheck::from_samples(box_samples.into_iter()),
        manifold_residual: MarginCheck::from_samples(residual_samples.into_iter()),
        inward_flux: MarginCheck::from_samples(flux_samples.into_iter()),
        shifted_monotone: MarginCheck::from_samples(monotone_samples.into_iter()),
    })
}

/// Spatially constant equilibrium with the residual of its defining relation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EndemicEquilibrium {
    pub i: f64,
    pub j: f64,
    pub residual: f64,
}

/// Equilibrium structure of the reaction pair.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub r0: f64,
    /// The zero state is globally stable exactly when no endemic state exists.
    pub disease_free_stable: bool,
    pub endemic: Option<EndemicEquilibrium>,
}

impl EquilibriumReport {
    pub fn describe(&self) -> String {
        match &self.endemic {
            Some(e) => format!(
                "R0 = {:.6}: zero state unstable; endemic state (i, j) = ({:.12}, {:.12}) globally stable",
                self.r0, e.i, e.j
            ),
            None => format!("R0 = {:.6}: zero state globally stable, no endemic state", self.r0),
        }
    }
}

/// Locate the equilibria. The endemic host level is the root of
/// `alpha_h (1 - z) m(z) - beta_h z` on (0, 1), found by bisection to 1e-12;
/// it exists exactly when `R0 > 1`.
pub fn equilibria(p: &RossMacdonaldParams) -> EquilibriumReport {
    let r0 = p.r0();
    let threshold = p.alpha_h * p.alpha_v > p.beta_h * p.beta_v;
    let endemic = if threshold {
        let balance = |z: f64| p.alpha_h * (1.0 - z) * p.slow_manifold(z) - p.beta_h * z;
        // balance(0+) > 0 when R0 > 1 and balance(1) = -beta_h < 0
        let root = bisect(&balance, 1e-12, 1.0, 1e-14, 200);
        let i = root;
        Some(EndemicEquilibrium {
            i,
            j: p.slow_manifold(i),
            residual: balance(i).abs(),
        })
    } else {
        None
    };
    EquilibriumReport {
        r0,
        disease_free_stable: !threshold,
        endemic,
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`; returns the midpoint of
/// the final bracket.
pub(crate) fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    let mut flo = f(lo);
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
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
