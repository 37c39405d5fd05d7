use thiserror::Error;

/// Errors surfaced by solvers, simulators and transport operations.
#[derive(Debug, Error)]
pub enum EntroflowError {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("time step failed (dt = {dt:.3e}): {reason}; suggested dt <= {suggested_dt:.3e}")]
    StepFailure {
        dt: f64,
        reason: String,
        suggested_dt: f64,
    },

    #[error("time grid must be strictly increasing and start at the density's time: {0}")]
    BadTimeGrid(String),

    #[error("simulation diverged: non-finite position on path {path} at step {step}")]
    SimulationDiverged { path: usize, step: usize },

    #[error("stored flow too coarse for backward drift interpolation: slice gap {gap:.3e} > {max_gap:.3e}")]
    FlowTooCoarse { gap: f64, max_gap: f64 },

    #[error("transport map is not monotone: {0}")]
    DegenerateGeodesic(String),

    #[error("linearized transport step too large: requested {requested:.3e}, max admissible {max_admissible:.3e}")]
    StepTooLarge { requested: f64, max_admissible: f64 },

    #[error("perturbation support [{lo:.3}, {hi:.3}] touches the grid boundary [{x_min:.3}, {x_max:.3}]")]
    SupportTouchesBoundary {
        lo: f64,
        hi: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("insufficient flow coverage: {0}")]
    InsufficientFlow(String),

    #[error("{excluded} of {n_paths} paths left the grid, over the {budget:.1e} budget")]
    ExcludedPaths {
        excluded: usize,
        n_paths: usize,
        budget: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, EntroflowError>;
