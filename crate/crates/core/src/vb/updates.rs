//! Closed-form coordinate updates. Each one maximizes the lower bound in its
//! own block with the others held fixed, and reads observed dyads only.

use ndarray::Array2;

use super::VariationalState;
use crate::data::Network;
use crate::gating::DirichletPriorTable;
use crate::numerics::{normalize_log_weights, psi};
use crate::scalar::Scalar;

/// Digamma expectations under the current γ and ζ.
#[derive(Debug, Clone)]
pub struct Expectations<S> {
    /// E[log τ_ig], N×G.
    pub elog_tau: Array2<S>,
    /// E[log θ_gh], G×G.
    pub elog_theta: Array2<S>,
    /// E[log(1 − θ_gh)], G×G.
    pub elog_one_minus_theta: Array2<S>,
}

impl<S: Scalar> Expectations<S> {
    pub fn from_state(state: &VariationalState<S>) -> Self {
        let elog_tau = crate::gating::expected_log_tau(&state.gamma);
        let g = state.n_groups();
        let mut elog_theta = Array2::zeros((g, g));
        let mut elog_one_minus_theta = Array2::zeros((g, g));
        for a in 0..g {
            for b in 0..g {
                let (z1, z2) = (state.zeta1[[a, b]], state.zeta2[[a, b]]);
                let total = psi(z1 + z2);
                elog_theta[[a, b]] = psi(z1) - total;
                elog_one_minus_theta[[a, b]] = psi(z2) - total;
            }
        }
        Expectations { elog_tau, elog_theta, elog_one_minus_theta }
    }

    /// Row-major G×G expected log-likelihood of a dyad with value `link`.
    pub(crate) fn dyad_loglik(&self, link: bool) -> &[S] {
        let m = if link { &self.elog_theta } else { &self.elog_one_minus_theta };
        m.as_slice().expect("standard layout")
    }
}

/// ζ¹_gh = α¹_gh + Σ φ¹_ijg φ²_ijh Y_ij and ζ²_gh = α²_gh + Σ φ¹_ijg φ²_ijh (1 − Y_ij).
pub fn update_zeta<S: Scalar>(
    state: &mut VariationalState<S>,
    network: &Network,
    alpha1: &Array2<S>,
    alpha2: &Array2<S>,
) {
    let g = state.n_groups();
    let mut z1 = alpha1.clone();
    let mut z2 = alpha2.clone();
    for (i, j) in network.observed_dyads() {
        let target = if network.link(i, j) { &mut z1 } else { &mut z2 };
        for a in 0..g {
            let p1 = state.phi1[[i, j, a]];
            for b in 0..g {
                target[[a, b]] += p1 * state.phi2[[i, j, b]];
            }
        }
    }
    state.zeta1 = z1;
    state.zeta2 = z2;
}

/// γ_ig = δ_ig + Σ_j φ¹_ijg + Σ_j φ²_jig over observed dyads.
pub fn update_gamma<S: Scalar>(
    state: &mut VariationalState<S>,
    network: &Network,
    delta: &DirichletPriorTable<S>,
) {
    let g = state.n_groups();
    let mut gamma = delta.values().clone();
    for (i, j) in network.observed_dyads() {
        for a in 0..g {
            gamma[[i, a]] += state.phi1[[i, j, a]];
            gamma[[j, a]] += state.phi2[[i, j, a]];
        }
    }
    state.gamma = gamma;
}

/// Updates φ¹_ij and φ²_ij for one observed dyad, alternating `inner`
/// times, sender side first.
pub fn update_phi<S: Scalar>(
    state: &mut VariationalState<S>,
    network: &Network,
    i: usize,
    j: usize,
    expectations: &Expectations<S>,
    inner: usize,
) {
    let mut buf = vec![S::zero(); state.n_groups()];
    let n = state.n_actors();
    let (phi1, phi2) = phi_slices(state);
    phi_dyad(phi1, phi2, n, network, i, j, expectations, inner, &mut buf);
}

fn phi_slices<S: Scalar>(state: &mut VariationalState<S>) -> (&mut [S], &mut [S]) {
    (
        state.phi1.as_slice_mut().expect("standard layout"),
        state.phi2.as_slice_mut().expect("standard layout"),
    )
}

/// One pass of [`update_phi`] over every observed dyad in row-major order,
/// with the expectations computed once up front.
pub fn sweep_phi<S: Scalar>(state: &mut VariationalState<S>, network: &Network, inner: usize) {
    let expectations = Expectations::from_state(state);
    let mut buf = vec![S::zero(); state.n_groups()];
    let n = state.n_actors();
    let (phi1, phi2) = phi_slices(state);
    for (i, j) in network.observed_dyads() {
        phi_dyad(phi1, phi2, n, network, i, j, &expectations, inner, &mut buf);
    }
}

#[allow(clippy::too_many_arguments)]
fn phi_dyad<S: Scalar>(
    phi1: &mut [S],
    phi2: &mut [S],
    n: usize,
    network: &Network,
    i: usize,
    j: usize,
    ex: &Expectations<S>,
    inner: usize,
    buf: &mut [S],
) {
    let g = buf.len();
    let ll = ex.dyad_loglik(network.link(i, j));
    let et_i = ex.elog_tau.row(i);
    let et_j = ex.elog_tau.row(j);
    let at = (i * n + j) * g;
    let p1 = &mut phi1[at..at + g];
    let p2 = &mut phi2[at..at + g];
    for _ in 0..inner {
        for (a, slot) in buf.iter_mut().enumerate() {
            let row = &ll[a * g..(a + 1) * g];
            *slot = et_i[a] + row.iter().zip(p2.iter()).map(|(&l, &p)| l * p).sum::<S>();
        }
        normalize_log_weights(buf);
        p1.copy_from_slice(buf);
        for (b, slot) in buf.iter_mut().enumerate() {
            let mut v = et_j[b];
            for (a, &p) in p1.iter().enumerate() {
                v += p * ll[a * g + b];
            }
            *slot = v;
        }
        normalize_log_weights(buf);
        p2.copy_from_slice(buf);
    }
}
