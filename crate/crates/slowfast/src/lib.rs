//! Two-time-scale host-vector dynamics on a bounded domain.
//!
//! The model couples a slow host infection density `i(x, t)` that redistributes
//! through a nonlocal convolution operator with a fast vector density `j(x, t)`
//! that diffuses locally and relaxes at rate `1/epsilon`:
//!
//! ```text
//!   di/dt = f(i, j) + d1 * K[i]                      (slow, nonlocal)
//!   eps * dj/dt = g(i, j) + eps * d2 * Lap[j]        (fast, local, Neumann)
//! ```
//!
//! where `K[u](x) = integral J(x - y) (u(y) - u(x)) dy` redistributes mass
//! through an interaction kernel `J` and `Lap` is the Laplacian with reflecting
//! (zero-flux) boundaries. As `eps -> 0` the vector density collapses onto the
//! slow manifold `j = m(i)` defined by `g(i, m(i)) = 0`, and the host density
//! follows the scalar limit equation `di/dt = f(i, m(i)) + d1 * K[i]`.
//!
//! The crate provides the discretization (grids, kernels, operators), the
//! stiff-capable integrators for the coupled and limit systems, and an analysis
//! harness that measures how fast the coupled system approaches the limit:
//! deviation traces `eta = j - m(i)`, sweep studies over `eps`, hypothesis and
//! equilibrium audits, and exponential decay envelopes.
//!
//! Start with the examples:
//!
//! - `operator_identities`: structural identities of the two spatial operators
//! - `equilibrium_threshold`: reproduction number, endemic root, stability probes
//! - `boundary_layer`: the fast transient of `eta` and its plateau
//! - `convergence_order`: sup-error of the limit approximation as `eps` shrinks
//! - `decay_envelope`: exponential contraction toward the limit solution
//! - `hypothesis_audit`: reaction bounds, manifold box, inward flux, constants
//! - `simulate_to_csv`: the config-driven pipeline behind the `slowfast` binary
//!
//! The `slowfast` binary wraps the same pipeline behind four subcommands
//! (`simulate`, `limit`, `converge`, `validate`) driven by a TOML config.

// validation guards are written as `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also catch NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod grid;
pub mod integrator;
pub mod kernels;
pub mod model;
pub mod operators;

pub use analysis::{
    compute_constants, convergence_study, decay_study, eta_layer_study, eta_trace,
    eta_trace_general, stability_probe, ConstantsReport, DecayReport, EtaTrace, LayerReport,
    StabilityMode, StabilityReport, StudyReport,
};
pub use grid::{Field, Grid};
pub use integrator::{
    snapshot_schedule, solve_full, solve_full_general, solve_limit, solve_limit_general,
    step_full, step_size_audit, Operators, Scheme, StepSizeAudit, StepperSpec, SystemState,
    Trajectory,
};
pub use kernels::{boundary_mass, validate_kernel, BoundaryMass, Kernel, KernelShape};
pub use model::{
    check_hypotheses, equilibria, EndemicEquilibrium, EquilibriumReport, GeneralReaction,
    HypothesisConstants, HypothesisReport, MarginCheck, ReactionSystem, RossMacdonaldParams,
};
pub use operators::{pairing, ConvolutionStrategy, NeumannLaplacian, NonlocalOperator};

/// Errors produced by construction, stepping, and study orchestration.
///
/// The CLI maps these onto process exit codes: configuration and validation
/// problems exit 1, runtime integration failures exit 2, and violated model
/// invariants (reported by studies, not thrown here) exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or config field violates a precondition. `field` names the
    /// offending field using config-path notation (for example `model.epsilon`).
    #[error("invalid `{field}`: {message}")]
    Config { field: String, message: String },

    /// A config file could not be read or parsed.
    #[error("config parse: {0}")]
    ConfigParse(String),

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A kernel's support cannot be represented on the grid.
    #[error("kernel resolution: {0}")]
    KernelResolution(String),

    /// Time stepping failed (non-finite state or a failed implicit solve).
    #[error("integration failure at t = {t}: {message}")]
    Step { t: f64, message: String },

    /// An iterative or direct linear solve did not converge.
    #[error("linear solve: {0}")]
    LinearSolve(String),

    /// A study refused to run because its mathematical precondition fails
    /// (for example requesting a decay envelope when the contraction
    /// condition has a nonpositive margin).
    #[error("study precondition: {0}")]
    StudyPrecondition(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
