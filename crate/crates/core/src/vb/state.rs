use ndarray::{Array2, Array3};
use rand::Rng;

use crate::data::Network;
use crate::scalar::Scalar;

/// Variational parameters: dyad-level sender/receiver memberships φ¹, φ²
/// (N×N×G, only observed dyads are meaningful), membership Dirichlets γ
/// (N×G) and link-probability Beta shapes ζ¹, ζ² (G×G).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<S> {
    pub phi1: Array3<S>,
    pub phi2: Array3<S>,
    pub gamma: Array2<S>,
    pub zeta1: Array2<S>,
    pub zeta2: Array2<S>,
}

impl<S: Scalar> VariationalState<S> {
    /// Uniform memberships, unit γ and ζ.
    pub fn uniform(n_actors: usize, n_groups: usize) -> Self {
        let u = S::from_usize_lossy(n_groups).recip();
        VariationalState {
            phi1: Array3::from_elem((n_actors, n_actors, n_groups), u),
            phi2: Array3::from_elem((n_actors, n_actors, n_groups), u),
            gamma: Array2::ones((n_actors, n_groups)),
            zeta1: Array2::ones((n_groups, n_groups)),
            zeta2: Array2::ones((n_groups, n_groups)),
        }
    }

    /// Random start: each actor gets memberships uniform mixed with one
    /// Dirichlet(1) draw of weight `noise`, and its dyads start from those.
    /// Drawing per actor rather than per dyad keeps the perturbation visible
    /// in γ and ζ, which would otherwise average it away.
    pub fn random<R: Rng + ?Sized>(network: &Network, n_groups: usize, noise: S, rng: &mut R) -> Self {
        let n = network.n_actors();
        let u = S::from_usize_lossy(n_groups).recip();
        let keep = S::one() - noise;
        let mut tau = Array2::zeros((n, n_groups));
        let mut draw = vec![S::zero(); n_groups];
        for mut row in tau.rows_mut() {
            dirichlet_ones(rng, &mut draw);
            for (t, &d) in row.iter_mut().zip(&draw) {
                *t = keep * u + noise * d;
            }
        }
        Self::around_memberships(network, &tau, S::zero(), rng)
    }

    /// Data-driven start: actors are clustered by k-means on a spectral
    /// embedding of their link profiles, and each actor's memberships are
    /// its cluster indicator mixed with one Dirichlet(1) draw of weight
    /// `noise`.
    pub fn spectral<R: Rng + ?Sized>(network: &Network, n_groups: usize, noise: S, rng: &mut R) -> Self {
        let n = network.n_actors();
        let embedding = super::init::spectral_embedding(network, n_groups, rng);
        let labels = super::init::kmeans(&embedding, n_groups, rng);
        let keep = S::one() - noise;
        let mut tau = Array2::zeros((n, n_groups));
        let mut draw = vec![S::zero(); n_groups];
        for (i, mut row) in tau.rows_mut().into_iter().enumerate() {
            dirichlet_ones(rng, &mut draw);
            for (k, t) in row.iter_mut().enumerate() {
                let hard = if labels[i] == k { S::one() } else { S::zero() };
                *t = keep * hard + noise * draw[k];
            }
        }
        Self::around_memberships(network, &tau, S::zero(), rng)
    }

    /// Warm start: φ¹_ij near τ_i and φ²_ij near τ_j, mixed with Dirichlet(1)
    /// noise of weight `noise`.
    pub fn around_memberships<R: Rng + ?Sized>(
        network: &Network,
        tau: &Array2<S>,
        noise: S,
        rng: &mut R,
    ) -> Self {
        let (n, g) = tau.dim();
        let mut state = Self::uniform(n, g);
        let keep = S::one() - noise;
        let mut draw = vec![S::zero(); g];
        for (i, j) in network.observed_dyads() {
            for (phi, actor) in [(&mut state.phi1, i), (&mut state.phi2, j)] {
                if noise > S::zero() {
                    dirichlet_ones(rng, &mut draw);
                }
                for k in 0..g {
                    phi[[i, j, k]] = keep * tau[[actor, k]] + noise * draw[k];
                }
            }
        }
        state
    }

    pub fn n_actors(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.gamma.ncols()
    }

    /// Posterior mean memberships γ_ig / Σ_h γ_ih.
    pub fn tau_hat(&self) -> Array2<S> {
        let mut out = self.gamma.clone();
        for mut row in out.rows_mut() {
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        out
    }

    /// Posterior mean link probabilities ζ¹ / (ζ¹ + ζ²).
    pub fn theta_hat(&self) -> Array2<S> {
        ndarray::Zip::from(&self.zeta1).and(&self.zeta2).map_collect(|&a, &b| a / (a + b))
    }

    /// Relabels groups so that new group `g` is old group `perm[g]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let g = self.n_groups();
        assert_eq!(perm.len(), g);
        let n = self.n_actors();
        let phi = |src: &Array3<S>| Array3::from_shape_fn((n, n, g), |(i, j, k)| src[[i, j, perm[k]]]);
        VariationalState {
            phi1: phi(&self.phi1),
            phi2: phi(&self.phi2),
            gamma: Array2::from_shape_fn((n, g), |(i, k)| self.gamma[[i, perm[k]]]),
            zeta1: Array2::from_shape_fn((g, g), |(a, b)| self.zeta1[[perm[a], perm[b]]]),
            zeta2: Array2::from_shape_fn((g, g), |(a, b)| self.zeta2[[perm[a], perm[b]]]),
        }
    }
}

// Dirichlet(1, …, 1) through normalized unit exponentials.
fn dirichlet_ones<S: Scalar, R: Rng + ?Sized>(rng: &mut R, out: &mut [S]) {
    let mut total = 0.0;
    let mut raw = [0.0f64; 16];
    let mut heap;
    let buf: &mut [f64] = if out.len() <= raw.len() {
        &mut raw[..out.len()]
    } else {
        heap = vec![0.0; out.len()];
        &mut heap
    };
    for v in buf.iter_mut() {
        let u: f64 = rng.random();
        *v = -(1.0 - u).ln();
        total += *v;
    }
    for (o, v) in out.iter_mut().zip(buf.iter()) {
        *o = S::lit(v / total);
    }
}
