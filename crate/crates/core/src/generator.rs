//! Sampling networks from the generative model: memberships from the
//! covariate-driven Dirichlet prior, then per-dyad sender and receiver roles
//! and a Bernoulli link.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::data::{CovariateMatrix, Network};
use crate::gating::{DirichletPriorTable, GatingError};
use crate::numerics::normalize_log_weights;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Gating(#[from] GatingError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid link probabilities: {0}")]
    InvalidTheta(String),
}

/// Block link probabilities: fixed, or drawn once per network from
/// independent Beta(shape1_gh, shape2_gh) cells.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSpec<S> {
    Fixed(Array2<S>),
    Beta { shape1: Array2<S>, shape2: Array2<S> },
}

impl<S: Scalar> ThetaSpec<S> {
    pub fn validate(&self, g: usize) -> Result<(), GeneratorError> {
        match self {
            ThetaSpec::Fixed(t) => {
                if t.dim() != (g, g) {
                    return Err(GeneratorError::Dimension(format!("theta is {:?}, expected {g}x{g}", t.dim())));
                }
                if t.iter().any(|v| !(*v >= S::zero() && *v <= S::one())) {
                    return Err(GeneratorError::InvalidTheta("entries must lie in [0, 1]".into()));
                }
            }
            ThetaSpec::Beta { shape1, shape2 } => {
                if shape1.dim() != (g, g) || shape2.dim() != (g, g) {
                    return Err(GeneratorError::Dimension("theta shapes must be GxG".into()));
                }
                if shape1.iter().chain(shape2.iter()).any(|v| !(v.is_finite() && *v > S::zero())) {
                    return Err(GeneratorError::InvalidTheta("Beta shapes must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSpec<S> {
    pub covariates: CovariateMatrix<S>,
    /// G×P.
    pub beta: Array2<S>,
    pub theta: ThetaSpec<S>,
    pub seed: u64,
}

impl<S: Scalar> GenerativeSpec<S> {
    pub fn n_actors(&self) -> usize {
        self.covariates.n_actors()
    }

    pub fn n_groups(&self) -> usize {
        self.beta.nrows()
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let g = self.n_groups();
        if g == 0 {
            return Err(GeneratorError::Dimension("beta has no groups".into()));
        }
        if self.beta.ncols() != self.covariates.n_covariates() {
            return Err(GeneratorError::Dimension(format!(
                "beta has {} columns, covariates {}",
                self.beta.ncols(),
                self.covariates.n_covariates()
            )));
        }
        self.theta.validate(g)
    }
}

/// The latent draws behind a sampled network.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord<S> {
    /// N×G memberships.
    pub tau: Array2<S>,
    /// G×G link probabilities used for the links.
    pub theta: Array2<S>,
    n_actors: usize,
    // row-major N×N, usize::MAX on the diagonal
    sender: Vec<usize>,
    receiver: Vec<usize>,
}

impl<S: Scalar> LatentRecord<S> {
    /// (sender group, receiver group) of dyad `(i, j)`, `i ≠ j`.
    pub fn roles(&self, i: usize, j: usize) -> (usize, usize) {
        let k = i * self.n_actors + j;
        (self.sender[k], self.receiver[k])
    }

    /// Writes `actor,group_1,…,group_G` rows, actors 1-based.
    pub fn write_tau_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_membership_csv(&self.tau, out)
    }

    /// Writes `i,j,sender_group,receiver_group` rows, all 1-based.
    pub fn write_roles_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,sender_group,receiver_group")?;
        let n = self.n_actors;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (g, h) = self.roles(i, j);
                    writeln!(out, "{},{},{},{}", i + 1, j + 1, g + 1, h + 1)?;
                }
            }
        }
        Ok(())
    }
}

/// Writes an N×G membership matrix as `actor,group_1,…` CSV.
pub fn write_membership_csv<S: Scalar, W: Write>(tau: &Array2<S>, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = (1..=tau.ncols()).map(|g| format!("group_{g}")).collect();
    writeln!(out, "actor,{}", header.join(","))?;
    for (i, row) in tau.rows().into_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", i + 1, vals.join(","))?;
    }
    Ok(())
}

/// Draws a network with the generator seeded from `spec.seed`.
pub fn sample_network<S: Scalar>(spec: &GenerativeSpec<S>) -> Result<(Network, LatentRecord<S>), GeneratorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_network_with(spec, &mut rng)
}

/// Draws a network from an explicit random stream. Order of draws: every
/// actor's τ, then Θ (if random), then dyads row-major with sender role,
/// receiver role and link in that order.
pub fn sample_network_with<S: Scalar, R: Rng + ?Sized>(
    spec: &GenerativeSpec<S>,
    rng: &mut R,
) -> Result<(Network, LatentRecord<S>), GeneratorError> {
    spec.validate()?;
    let delta = DirichletPriorTable::from_beta(&spec.beta, &spec.covariates)?;
    let tau = dirichlet_rows(delta.values(), rng);
    dyads_given_memberships(tau, &spec.theta, rng)
}

/// One Dirichlet draw per row of positive concentrations.
pub fn dirichlet_rows<S: Scalar, R: Rng + ?Sized>(concentration: &Array2<S>, rng: &mut R) -> Array2<S> {
    let (n, g) = concentration.dim();
    let mut out = Array2::<S>::zeros((n, g));
    let mut buf = vec![S::zero(); g];
    for i in 0..n {
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = log_gamma_draw(rng, concentration[[i, k]].as_f64());
        }
        normalize_log_weights(&mut buf);
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&buf[..]));
    }
    out
}

/// Draws Θ (if random) and then every dyad with the actors' memberships
/// held at `tau` (N×G, rows on the simplex), in the same order as
/// [`sample_network_with`].
pub fn sample_given_memberships<S: Scalar, R: Rng + ?Sized>(
    tau: &Array2<S>,
    theta: &ThetaSpec<S>,
    rng: &mut R,
) -> Result<(Network, LatentRecord<S>), GeneratorError> {
    theta.validate(tau.ncols())?;
    for row in tau.rows() {
        let total = row.sum();
        if row.iter().any(|&v| !(v >= S::zero())) || (total - S::one()).abs() > S::lit(1e-6) {
            return Err(GeneratorError::Dimension("memberships must lie on the simplex".into()));
        }
    }
    dyads_given_memberships(tau.clone(), theta, rng)
}

fn dyads_given_memberships<S: Scalar, R: Rng + ?Sized>(
    tau: Array2<S>,
    theta: &ThetaSpec<S>,
    rng: &mut R,
) -> Result<(Network, LatentRecord<S>), GeneratorError> {
    let n = tau.nrows();
    let g = tau.ncols();
    let theta = match theta {
        ThetaSpec::Fixed(t) => t.clone(),
        ThetaSpec::Beta { shape1, shape2 } => {
            let mut t = Array2::<S>::zeros((g, g));
            for ((idx, &a), &b) in shape1.indexed_iter().zip(shape2.iter()) {
                let x: S = log_gamma_draw(rng, a.as_f64());
                let y: S = log_gamma_draw(rng, b.as_f64());
                // a/(a+b) from log-space draws
                t[idx] = S::one() / (S::one() + (y - x).exp());
            }
            t
        }
    };
    let mut adjacency = vec![false; n * n];
    let mut sender = vec![usize::MAX; n * n];
    let mut receiver = vec![usize::MAX; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let zs = categorical(rng, tau.row(i));
            let zr = categorical(rng, tau.row(j));
            let u: f64 = rng.random();
            adjacency[i * n + j] = u < theta[[zs, zr]].as_f64();
            sender[i * n + j] = zs;
            receiver[i * n + j] = zr;
        }
    }
    Ok((
        Network::from_adjacency(n, &adjacency),
        LatentRecord { tau, theta, n_actors: n, sender, receiver },
    ))
}

/// Log of a Gamma(shape, 1) draw. Shapes below one use
/// Gamma(a) = Gamma(a + 1)·U^{1/a} so tiny concentrations stay representable.
fn log_gamma_draw<S: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: f64) -> S {
    let boosted = if shape < 1.0 { shape + 1.0 } else { shape };
    let x: f64 = Gamma::new(boosted, 1.0).expect("positive shape").sample(rng);
    let mut log = x.ln();
    if shape < 1.0 {
        let u: f64 = rng.random();
        log += (1.0 - u).ln() / shape;
    }
    S::lit(log)
}

fn categorical<S: Scalar, R: Rng + ?Sized>(rng: &mut R, probs: ndarray::ArrayView1<'_, S>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Marginal link probability τ̄ᵀΘτ̄, τ̄ the average Dirichlet mean over
/// actors. Requires fixed Θ.
pub fn expected_density<S: Scalar>(spec: &GenerativeSpec<S>) -> Result<S, GeneratorError> {
    spec.validate()?;
    let ThetaSpec::Fixed(theta) = &spec.theta else {
        return Err(GeneratorError::InvalidTheta("expected density needs fixed theta".into()));
    };
    let delta = DirichletPriorTable::from_beta(&spec.beta, &spec.covariates)?;
    let mean = dirichlet_means(delta.values());
    let n = S::from_usize_lossy(spec.n_actors());
    let avg = mean.sum_axis(ndarray::Axis(0)).mapv(|v| v / n);
    Ok(avg.dot(&theta.dot(&avg)))
}

/// Row-normalized concentrations.
pub fn dirichlet_means<S: Scalar>(delta: &Array2<S>) -> Array2<S> {
    let mut out = delta.clone();
    for mut row in out.rows_mut() {
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnKind;
    use ndarray::array;

    fn two_group_spec(theta: ThetaSpec<f64>, seed: u64) -> GenerativeSpec<f64> {
        let n = 12;
        let d: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let covariates =
            CovariateMatrix::from_columns(n, vec![("d".into(), ColumnKind::Dummy, d)]).unwrap();
        GenerativeSpec { covariates, beta: array![[0.0, 1.0], [0.5, -1.0]], theta, seed }
    }

    #[test]
    fn constant_theta_extremes() {
        let (net, _) = sample_network(&two_group_spec(ThetaSpec::Fixed(Array2::zeros((2, 2))), 1)).unwrap();
        assert_eq!(net.n_observed_links(), 0);
        let (net, _) = sample_network(&two_group_spec(ThetaSpec::Fixed(Array2::ones((2, 2))), 1)).unwrap();
        assert_eq!(net.n_observed_links(), 12 * 11);
    }

    #[test]
    fn one_hot_memberships_give_block_cliques() {
        let n = 10;
        let d: Vec<f64> = (0..n).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let covariates = CovariateMatrix::from_columns(n, vec![("d".into(), ColumnKind::Dummy, d)]).unwrap();
        // intercept-like effect (10, -10) for the indicator, reversed for the rest
        let beta = array![[-10.0, 20.0], [10.0, -20.0]];
        let spec = GenerativeSpec { covariates, beta, theta: ThetaSpec::Fixed(Array2::eye(2)), seed: 3 };
        let (net, latent) = sample_network(&spec).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(net.link(i, j), (i < 4) == (j < 4), "({i},{j})");
                    let (g, h) = latent.roles(i, j);
                    assert_eq!(net.link(i, j), g == h);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let shapes = ThetaSpec::Beta { shape1: Array2::from_elem((2, 2), 0.5), shape2: Array2::from_elem((2, 2), 2.0) };
        let a = sample_network(&two_group_spec(shapes.clone(), 42)).unwrap();
        let b = sample_network(&two_group_spec(shapes.clone(), 42)).unwrap();
        assert_eq!(a, b);
        let c = sample_network(&two_group_spec(shapes, 43)).unwrap();
        assert_ne!(a.1.tau, c.1.tau);
    }

    #[test]
    fn sampled_memberships_are_valid() {
        let spec = GenerativeSpec {
            covariates: CovariateMatrix::<f64>::intercept_only(30),
            beta: array![[-6.0], [-8.0], [-7.0]],
            theta: ThetaSpec::Fixed(Array2::from_elem((3, 3), 0.2)),
            seed: 5,
        };
        let (_, latent) = sample_network(&spec).unwrap();
        for row in latent.tau.rows() {
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_formula_examples() {
        let spec = GenerativeSpec::<f64> {
            covariates: CovariateMatrix::intercept_only(5),
            beta: array![[1.3]],
            theta: ThetaSpec::Fixed(array![[0.3]]),
            seed: 0,
        };
        assert!((expected_density(&spec).unwrap() - 0.3).abs() < 1e-15);
        let spec = GenerativeSpec::<f64> {
            covariates: CovariateMatrix::intercept_only(5),
            beta: array![[0.2], [0.2], [0.2]],
            theta: ThetaSpec::Fixed(Array2::from_elem((3, 3), 0.15)),
            seed: 0,
        };
        assert!((expected_density(&spec).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = two_group_spec(ThetaSpec::Fixed(array![[0.5, 1.5], [0.1, 0.1]]), 0);
        assert!(matches!(sample_network(&spec), Err(GeneratorError::InvalidTheta(_))));
        spec.theta = ThetaSpec::Fixed(Array2::zeros((2, 2)));
        spec.beta = array![[900.0, 0.0], [0.0, 0.0]];
        assert!(matches!(sample_network(&spec), Err(GeneratorError::Gating(_))));
        spec.beta = array![[0.0], [0.0]];
        assert!(matches!(sample_network(&spec), Err(GeneratorError::Dimension(_))));
    }

    #[test]
    fn csv_exports() {
        let (_, latent) = sample_network(&two_group_spec(ThetaSpec::Fixed(Array2::eye(2)), 9)).unwrap();
        let mut buf = Vec::new();
        latent.write_roles_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 12 * 11);
        assert!(text.starts_with("i,j,sender_group,receiver_group\n1,2,"));
        let mut buf = Vec::new();
        latent.write_tau_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("actor,group_1,group_2\n1,"));
    }

    #[test]
    fn fixed_memberships_are_kept() {
        let tau = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let theta = ThetaSpec::Fixed(array![[1.0, 0.0], [0.0, 1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (net, latent) = sample_given_memberships(&tau, &theta, &mut rng).unwrap();
        assert_eq!(latent.tau, tau);
        let links: Vec<_> = net.observed_links().collect();
        assert_eq!(links, vec![(0, 1), (1, 0), (2, 3), (3, 2)]);
        let off = array![[0.5, 0.6], [0.2, 0.2]];
        assert!(sample_given_memberships(&off, &theta, &mut rng).is_err());
        let wrong = ThetaSpec::Fixed(array![[0.5]]);
        assert!(sample_given_memberships(&tau, &wrong, &mut rng).is_err());
    }
}