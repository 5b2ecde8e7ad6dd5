use ndarray::Array2;

use super::{Expectations, VariationalState};
use crate::data::Network;
use crate::gating::DirichletPriorTable;
use crate::numerics::{ln_gamma, xlogx};
use crate::scalar::Scalar;

/// The lower bound split into its expectation and entropy pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms<S> {
    /// Σ E[log p(Y_ij | Z, θ)].
    pub likelihood: S,
    /// Σ E[log p(Z¹_ij | τ_i)] + E[log p(Z²_ij | τ_j)].
    pub membership_prior: S,
    /// −Σ E[log q(Z)].
    pub membership_entropy: S,
    /// Σ_i E[log p(τ_i | δ_i)].
    pub tau_prior: S,
    /// −Σ_i E[log q(τ_i)].
    pub tau_entropy: S,
    /// Σ_gh E[log p(θ_gh | α)].
    pub theta_prior: S,
    /// −Σ_gh E[log q(θ_gh)].
    pub theta_entropy: S,
}

impl<S: Scalar> ElboTerms<S> {
    pub fn total(&self) -> S {
        self.likelihood
            + self.membership_prior
            + self.membership_entropy
            + self.tau_prior
            + self.tau_entropy
            + self.theta_prior
            + self.theta_entropy
    }
}

fn dirichlet_expected_log_density<S: Scalar>(conc: &Array2<S>, elog_tau: &Array2<S>) -> S {
    let mut total = S::zero();
    for (c_row, e_row) in conc.rows().into_iter().zip(elog_tau.rows()) {
        total += ln_gamma(c_row.sum());
        for (&c, &e) in c_row.iter().zip(e_row.iter()) {
            total += (c - S::one()) * e - ln_gamma(c);
        }
    }
    total
}

fn beta_expected_log_density<S: Scalar>(a1: &Array2<S>, a2: &Array2<S>, ex: &Expectations<S>) -> S {
    let mut total = S::zero();
    for ((idx, &x), &y) in a1.indexed_iter().zip(a2.iter()) {
        total += ln_gamma(x + y) - ln_gamma(x) - ln_gamma(y)
            + (x - S::one()) * ex.elog_theta[idx]
            + (y - S::one()) * ex.elog_one_minus_theta[idx];
    }
    total
}

pub fn elbo_terms<S: Scalar>(
    state: &VariationalState<S>,
    network: &Network,
    delta: &DirichletPriorTable<S>,
    alpha1: &Array2<S>,
    alpha2: &Array2<S>,
) -> ElboTerms<S> {
    let ex = Expectations::from_state(state);
    let g = state.n_groups();
    let mut likelihood = S::zero();
    let mut membership_prior = S::zero();
    let mut membership_entropy = S::zero();
    for (i, j) in network.observed_dyads() {
        let ll = ex.dyad_loglik(network.link(i, j));
        for a in 0..g {
            let p1 = state.phi1[[i, j, a]];
            let p2 = state.phi2[[i, j, a]];
            let mut inner = S::zero();
            for b in 0..g {
                inner += state.phi2[[i, j, b]] * ll[a * g + b];
            }
            likelihood += p1 * inner;
            membership_prior += p1 * ex.elog_tau[[i, a]] + p2 * ex.elog_tau[[j, a]];
            membership_entropy -= xlogx(p1) + xlogx(p2);
        }
    }
    ElboTerms {
        likelihood,
        membership_prior,
        membership_entropy,
        tau_prior: dirichlet_expected_log_density(delta.values(), &ex.elog_tau),
        tau_entropy: -dirichlet_expected_log_density(&state.gamma, &ex.elog_tau),
        theta_prior: beta_expected_log_density(alpha1, alpha2, &ex),
        theta_entropy: -beta_expected_log_density(&state.zeta1, &state.zeta2, &ex),
    }
}

/// Evidence lower bound at the current variational parameters.
pub fn compute_elbo<S: Scalar>(
    state: &VariationalState<S>,
    network: &Network,
    delta: &DirichletPriorTable<S>,
    alpha1: &Array2<S>,
    alpha2: &Array2<S>,
) -> S {
    elbo_terms(state, network, delta, alpha1, alpha2).total()
}
