//! Mean-field variational inference for the mixed-membership blockmodel.
//!
//! A fit alternates full sweeps of the closed-form updates φ → γ → ζ with
//! a Newton step for β, recording the lower bound after every sweep.

mod config;
mod elbo;
mod fit;
mod init;
mod state;
mod updates;

use serde::Serialize;
use thiserror::Error;

pub use config::{InitStrategy, ModelConfig};
pub use elbo::{compute_elbo, elbo_terms, ElboTerms};
pub use fit::{fit, fit_from_state, fit_warm, FitResult, FitSummary};
pub use state::VariationalState;
pub use updates::{sweep_phi, update_gamma, update_phi, update_zeta, Expectations};

use crate::gating::GatingError;

/// Last finite parameters before the lower bound went non-finite.
#[derive(Debug, Clone, Serialize)]
pub struct StateDump {
    pub iteration: usize,
    pub elbo_trace: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub zeta1: Vec<Vec<f64>>,
    pub zeta2: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lower bound became non-finite at sweep {}", .0.iteration)]
    NonFinite(Box<StateDump>),
    #[error(transparent)]
    Gating(#[from] GatingError),
}

impl FitError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            FitError::NonFinite(_) => true,
            FitError::Gating(e) => !matches!(e, GatingError::Dimension(_)),
            _ => false,
        }
    }
}
