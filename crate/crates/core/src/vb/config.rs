use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::FitError;
use crate::gating::BetaConfig;
use crate::scalar::Scalar;
use crate::serde_matrix;

/// Starting memberships for each restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// k-means clusters of a spectral embedding, plus noise.
    Spectral,
    /// Uniform memberships plus noise.
    Random,
}

/// Settings for a variational fit with a fixed number of groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelConfig<S> {
    pub n_groups: usize,
    /// Beta prior shapes on the link probabilities, G×G.
    #[serde(with = "serde_matrix")]
    pub alpha1: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub alpha2: Array2<S>,
    pub max_iterations: usize,
    /// Stop once |ΔELBO / ELBO| falls below this.
    pub tolerance: S,
    /// φ¹/φ² alternations per dyad and sweep.
    pub phi_inner_iterations: usize,
    pub n_restarts: usize,
    pub init: InitStrategy,
    /// Weight of the Dirichlet(1) noise mixed into the initial memberships.
    pub init_noise: S,
    pub seed: u64,
    pub beta: BetaConfig<S>,
}

impl<S: Scalar> ModelConfig<S> {
    pub fn new(n_groups: usize) -> Self {
        ModelConfig {
            n_groups,
            alpha1: Array2::ones((n_groups, n_groups)),
            alpha2: Array2::ones((n_groups, n_groups)),
            max_iterations: 500,
            tolerance: S::lit(1e-6),
            phi_inner_iterations: 3,
            n_restarts: 5,
            init: InitStrategy::Spectral,
            init_noise: S::lit(0.1),
            seed: 0,
            beta: BetaConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, n_restarts: usize) -> Self {
        self.n_restarts = n_restarts;
        self
    }

    /// Copy for a different number of groups. The Beta prior must be the
    /// same in every cell so it can be resized.
    pub fn with_groups(&self, n_groups: usize) -> Result<Self, FitError> {
        let constant = |a: &Array2<S>| {
            let first = a.iter().next().copied();
            match first {
                Some(v) if a.iter().all(|&x| x == v) => Ok(v),
                _ => Err(FitError::Config("resizing needs a constant Beta prior".into())),
            }
        };
        let (a1, a2) = (constant(&self.alpha1)?, constant(&self.alpha2)?);
        Ok(ModelConfig {
            n_groups,
            alpha1: Array2::from_elem((n_groups, n_groups), a1),
            alpha2: Array2::from_elem((n_groups, n_groups), a2),
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let g = self.n_groups;
        let bad = |msg: String| Err(FitError::Config(msg));
        if g == 0 {
            return bad("number of groups must be at least 1".into());
        }
        for (name, a) in [("alpha1", &self.alpha1), ("alpha2", &self.alpha2)] {
            if a.dim() != (g, g) {
                return bad(format!("{name} is {:?}, expected {g}x{g}", a.dim()));
            }
            if a.iter().any(|v| !(v.is_finite() && *v > S::zero())) {
                return bad(format!("{name} entries must be positive and finite"));
            }
        }
        if !(self.tolerance > S::zero()) {
            return bad("tolerance must be positive".into());
        }
        if self.phi_inner_iterations == 0 || self.n_restarts == 0 {
            return bad("inner iterations and restarts must be at least 1".into());
        }
        if !(self.init_noise >= S::zero() && self.init_noise <= S::one()) {
            return bad("initialization noise must lie in [0, 1]".into());
        }
        if !(self.beta.clip_bound > S::zero()) || self.beta.update_interval == 0 {
            return bad("clip bound must be positive and the beta update interval at least 1".into());
        }
        Ok(())
    }
}
