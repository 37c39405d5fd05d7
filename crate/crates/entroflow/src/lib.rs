//! Numerical verification laboratory for the entropic gradient-flow
//! structure of Langevin-Smoluchowski diffusions: a structure-preserving
//! finite-volume solver for the drift-diffusion equation, exact 1-D optimal
//! transport, Euler-Maruyama path ensembles, and statistical harnesses that
//! test entropy dissipation identities along flows and trajectories.

pub mod diagnostics;
pub mod error;
pub mod fokker_planck;
pub mod functionals;
pub mod grid;
pub mod hwi;
pub mod langevin;
pub mod numerics;
pub mod perturbation;
pub mod potentials;
pub mod stats;
pub mod steepest_descent;
pub mod time_reversal;
pub mod wasserstein;

pub use error::{EntroflowError, Result};
