//! Mixed-membership stochastic blockmodel with covariate-dependent
//! membership priors, fitted by variational Bayes.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the usual double-precision choice.

pub mod bootstrap;
pub mod data;
pub mod diagnostics;
pub mod gating;
pub mod generator;
pub mod linalg;
pub mod numerics;
pub mod scalar;
pub mod selection;
mod serde_matrix;
pub mod vb;

pub use bootstrap::{align_groups, bootstrap_beta, quantile, BootstrapConfig, BootstrapError, BootstrapReport, ThetaSource};
pub use data::{ColumnKind, DataError, FoldAssignment, Network};
pub use diagnostics::{eom_scores, geodesic_distribution, gof_compare, link_probability_separation, GofReport};
pub use generator::{sample_network, GenerativeSpec, GeneratorError, ThetaSpec};
pub use scalar::Scalar;
pub use selection::{cross_validate, holdout_loglik, roc_auc, CvConfig, CvReport, SelectionError};
pub use vb::{fit, fit_warm, FitError, FitResult, FitSummary, InitStrategy, ModelConfig};

pub type Covariates = data::CovariateMatrix<f64>;
pub type Config = vb::ModelConfig<f64>;
pub type Fit = vb::FitResult<f64>;
pub type Summary = vb::FitSummary<f64>;
pub type Spec = generator::GenerativeSpec<f64>;
pub type Cv = selection::CvConfig<f64>;
pub type Bootstrap = bootstrap::BootstrapReport<f64>;
