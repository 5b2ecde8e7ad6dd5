//! Parametric bootstrap for the covariate coefficients: simulate from the
//! fitted model, refit, align group labels to the reference fit, and
//! summarize by quantile intervals.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CovariateMatrix, Network};
use crate::gating::curvature_standard_errors;
use crate::generator::{dirichlet_rows, sample_given_memberships, GeneratorError, ThetaSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use crate::linalg::min_cost_assignment;
use crate::scalar::Scalar;
use crate::vb::{fit_warm, FitError, FitSummary};

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("the reference fit did not converge")]
    ReferenceNotConverged,
    #[error("{failed} of {total} replicates did not converge")]
    TooManyFailures { failed: usize, total: usize },
    #[error("quantiles need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("quantile level {0} outside [0, 1]")]
    Level(f64),
    #[error("covariates describe {got} actors, the fit {want}")]
    Dimension { got: usize, want: usize },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Which fitted quantities drive each simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    /// Fitted memberships τ̂ and block probabilities Θ̂ for every replicate.
    #[default]
    PosteriorMean,
    /// Fresh draws τ_i ~ Dirichlet(γ_i) and Θ ~ Beta(ζ¹, ζ²) per replicate.
    PosteriorDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Replicate r simulates and refits with seed `seed + r`.
    pub seed: u64,
    pub theta_source: ThetaSource,
    /// Largest tolerated share of non-converged replicates.
    pub max_failure_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { replicates: 100, seed: 0, theta_source: ThetaSource::default(), max_failure_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BootstrapSample<S> {
    pub replicate: usize,
    /// Refitted coefficients with rows in reference group order; `None` if
    /// the refit failed outright.
    #[serde(with = "opt_matrix")]
    pub beta: Option<Array2<S>>,
    /// `permutation[g]` is the replicate's group matched to reference group g.
    pub permutation: Vec<usize>,
    pub converged: bool,
}

mod opt_matrix {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize)]
    struct Ref<'a, T: Serialize>(#[serde(with = "crate::serde_matrix")] &'a Array2<T>);
    #[derive(Deserialize)]
    #[serde(bound = "T: Deserialize<'de> + Clone")]
    struct Owned<T>(#[serde(with = "crate::serde_matrix")] Array2<T>);

    pub fn serialize<T: Serialize, S: Serializer>(m: &Option<Array2<T>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(Ref).serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de> + Clone, D: Deserializer<'de>>(d: D) -> Result<Option<Array2<T>>, D::Error> {
        Ok(Option::<Owned<T>>::deserialize(d)?.map(|o| o.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BootstrapReport<S> {
    pub samples: Vec<BootstrapSample<S>>,
    #[serde(with = "crate::serde_matrix")]
    pub reference_beta: Array2<S>,
    pub covariate_names: Vec<String>,
    pub n_failed: usize,
}

/// Interval summary for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CoefficientInterval<S> {
    pub group: usize,
    pub covariate: String,
    pub estimate: S,
    pub lower: S,
    pub upper: S,
    /// The 2.5%–97.5% interval excludes zero.
    pub significant: bool,
}

/// Permutation of the candidate's groups minimizing the total absolute
/// membership disagreement Σ_i Σ_g |τ_ref[i,g] − τ_cand[i,perm[g]]|.
pub fn align_groups<S: Scalar>(reference_tau: &Array2<S>, candidate_tau: &Array2<S>) -> Vec<usize> {
    let g = reference_tau.ncols();
    assert_eq!(candidate_tau.dim(), reference_tau.dim(), "memberships must have the same shape");
    let mut cost = Array2::<S>::zeros((g, g));
    for (r, c) in reference_tau.rows().into_iter().zip(candidate_tau.rows()) {
        for a in 0..g {
            for b in 0..g {
                cost[[a, b]] += (r[a] - c[b]).abs();
            }
        }
    }
    min_cost_assignment(&cost)
}

/// Sample quantile by linear interpolation at 1-based position q(n−1)+1 of
/// the sorted sample.
pub fn quantile<S: Scalar>(samples: &[S], q: f64) -> Result<S, BootstrapError> {
    if samples.is_empty() {
        return Err(BootstrapError::TooFewSamples { needed: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(BootstrapError::Level(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = S::lit(pos - lo as f64);
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub(crate) fn simulated_network<S: Scalar>(
    reference: &FitSummary<S>,
    observed: &Network,
    source: ThetaSource,
    seed: u64,
) -> Result<Network, BootstrapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut net, _) = match source {
        ThetaSource::PosteriorMean => sample_given_memberships(
            &reference.tau_hat,
            &ThetaSpec::Fixed(reference.theta_hat.clone()),
            &mut rng,
        )?,
        ThetaSource::PosteriorDraw => {
            let tau = dirichlet_rows(&reference.gamma, &mut rng);
            let theta = ThetaSpec::Beta { shape1: reference.zeta1.clone(), shape2: reference.zeta2.clone() };
            sample_given_memberships(&tau, &theta, &mut rng)?
        }
    };
    // Keep the missingness pattern of the data.
    for (i, j) in observed.all_dyads() {
        if !observed.is_observed(i, j) {
            net.set_observed(i, j, false);
        }
    }
    Ok(net)
}

/// Draws `config.replicates` networks from the reference fit (actors keep
/// their fitted memberships, so replicate groups can be matched to the
/// reference), refits each
/// warm-started from the reference τ̂ and β̂ with the reference
/// configuration, and aligns the refitted groups to the reference.
///
/// `observed` supplies the missingness pattern copied onto every simulated
/// network.
pub fn bootstrap_beta<S: Scalar>(
    reference: &FitSummary<S>,
    observed: &Network,
    covariates: &CovariateMatrix<S>,
    config: &BootstrapConfig,
) -> Result<BootstrapReport<S>, BootstrapError> {
    if !reference.converged {
        return Err(BootstrapError::ReferenceNotConverged);
    }
    if covariates.n_actors() != reference.n_actors || observed.n_actors() != reference.n_actors {
        return Err(BootstrapError::Dimension { got: covariates.n_actors(), want: reference.n_actors });
    }
    let samples: Vec<BootstrapSample<S>> = (1..=config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            let net = simulated_network(reference, observed, config.theta_source, seed)?;
            let model = reference.config.clone().with_seed(seed);
            let identity: Vec<usize> = (0..reference.n_groups).collect();
            match fit_warm(&net, covariates, &reference.tau_hat, &reference.beta, &model) {
                Ok(res) => {
                    let perm = align_groups(&reference.tau_hat, &res.summary.tau_hat);
                    let beta = Array2::from_shape_fn(reference.beta.dim(), |(g, p)| res.summary.beta[[perm[g], p]]);
                    Ok(BootstrapSample { replicate: r, beta: Some(beta), permutation: perm, converged: res.summary.converged })
                }
                Err(e) if e.is_numerical() => {
                    log::warn!("bootstrap replicate {r} failed: {e}");
                    Ok(BootstrapSample { replicate: r, beta: None, permutation: identity, converged: false })
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, BootstrapError>>()?;
    let n_failed = samples.iter().filter(|s| !s.converged).count();
    if n_failed as f64 > config.max_failure_fraction * config.replicates as f64 {
        return Err(BootstrapError::TooManyFailures { failed: n_failed, total: config.replicates });
    }
    if n_failed > 0 {
        log::warn!("{n_failed} of {} bootstrap replicates did not converge and are excluded", config.replicates);
    }
    Ok(BootstrapReport {
        samples,
        reference_beta: reference.beta.clone(),
        covariate_names: reference.covariate_names.clone(),
        n_failed,
    })
}

impl<S: Scalar> BootstrapReport<S> {
    /// Converged replicate values of coefficient (group, covariate).
    pub fn draws(&self, group: usize, covariate: usize) -> Vec<S> {
        self.samples
            .iter()
            .filter(|s| s.converged)
            .filter_map(|s| s.beta.as_ref().map(|b| b[[group, covariate]]))
            .collect()
    }

    /// 2.5% and 97.5% quantiles of every coefficient; needs at least two
    /// converged replicates.
    pub fn intervals(&self) -> Result<Vec<CoefficientInterval<S>>, BootstrapError> {
        let (g, p) = self.reference_beta.dim();
        let mut out = Vec::with_capacity(g * p);
        for group in 0..g {
            for cov in 0..p {
                let draws = self.draws(group, cov);
                if draws.len() < 2 {
                    return Err(BootstrapError::TooFewSamples { needed: 2, got: draws.len() });
                }
                let lower = quantile(&draws, 0.025)?;
                let upper = quantile(&draws, 0.975)?;
                out.push(CoefficientInterval {
                    group,
                    covariate: self.covariate_names[cov].clone(),
                    estimate: self.reference_beta[[group, cov]],
                    lower,
                    upper,
                    significant: lower > S::zero() || upper < S::zero(),
                });
            }
        }
        Ok(out)
    }

    /// Writes `replicate,group,covariate,beta_value,converged` (1-based
    /// groups); failed refits have an empty value.
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "replicate,group,covariate,beta_value,converged")?;
        let (g, p) = self.reference_beta.dim();
        for s in &self.samples {
            for group in 0..g {
                for cov in 0..p {
                    let v = s.beta.as_ref().map(|b| b[[group, cov]].to_string()).unwrap_or_default();
                    writeln!(out, "{},{},{},{},{}", s.replicate, group + 1, self.covariate_names[cov], v, s.converged)?;
                }
            }
        }
        Ok(())
    }
}

/// Writes `group,covariate,estimate,q2.5,q97.5,significant`.
pub fn write_intervals_csv<S: Scalar, W: Write>(rows: &[CoefficientInterval<S>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "group,covariate,estimate,q2.5,q97.5,significant")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.group + 1, r.covariate, r.estimate, r.lower, r.upper, r.significant)?;
    }
    Ok(())
}

/// Approximate standard errors from the curvature of the β objective at
/// the reference fit, ignoring uncertainty in every other parameter; same
/// shape as β.
pub fn approximate_standard_errors<S: Scalar>(
    reference: &FitSummary<S>,
    covariates: &CovariateMatrix<S>,
) -> Result<Array2<S>, BootstrapError> {
    Ok(curvature_standard_errors(&reference.beta, covariates, &reference.gamma).map_err(FitError::from)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{sample_network, GenerativeSpec};
    use crate::linalg::permutations;
    use crate::vb::{fit, ModelConfig};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tau(rng: &mut ChaCha8Rng, n: usize, g: usize) -> Array2<f64> {
        let mut t = Array2::from_shape_fn((n, g), |_| rng.random::<f64>().powi(3));
        for mut row in t.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        t
    }

    fn relabel(tau: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn(tau.dim(), |(i, g)| tau[[i, perm[g]]])
    }

    #[test]
    fn alignment_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = random_tau(&mut rng, 20, 2);
        assert_eq!(align_groups(&tau, &tau), vec![0, 1]);
        assert_eq!(align_groups(&tau, &relabel(&tau, &[1, 0])), vec![1, 0]);

        let tau = random_tau(&mut rng, 20, 3);
        let cand = relabel(&tau, &[1, 2, 0]);
        let cost = |p: &[usize]| -> f64 {
            (0..20).map(|i| (0..3).map(|g| (tau[[i, g]] - cand[[i, p[g]]]).abs()).sum::<f64>()).sum()
        };
        let best = permutations(3).into_iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
        let got = align_groups(&tau, &cand);
        assert_eq!(got, best);
        // candidate group perm[g] holds reference group g: inverse of the relabel
        assert_eq!(got, vec![2, 0, 1]);
    }

    proptest! {
        #[test]
        fn aligning_an_aligned_sample_is_identity(seed in 0u64..1000, g in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tau = random_tau(&mut rng, 15, g);
            let noisy = tau.mapv(|v| v + 0.05 * rng.random::<f64>());
            let perm: Vec<usize> = {
                let mut p: Vec<usize> = (0..g).collect();
                p.rotate_left(seed as usize % g);
                p
            };
            let cand = relabel(&noisy, &perm);
            let found = align_groups(&tau, &cand);
            let aligned = relabel(&cand, &found);
            prop_assert_eq!(align_groups(&tau, &aligned), (0..g).collect::<Vec<_>>());
        }

        #[test]
        fn quantiles_are_monotone(xs in proptest::collection::vec(-100.0f64..100.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&xs, lo).unwrap() <= quantile(&xs, hi).unwrap());
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.5);
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&hundred, 0.025).unwrap() - 3.475).abs() < 1e-12);
        assert!(matches!(quantile::<f64>(&[], 0.5), Err(BootstrapError::TooFewSamples { .. })));
        assert!(matches!(quantile(&[1.0], 1.5), Err(BootstrapError::Level(_))));
    }

    fn reference() -> (Network, CovariateMatrix<f64>, FitSummary<f64>) {
        let n = 16;
        let cov = CovariateMatrix::<f64>::intercept_only(n);
        let spec = GenerativeSpec {
            covariates: cov.clone(),
            beta: array![[-1.0], [-1.0]],
            theta: ThetaSpec::Fixed(array![[0.7, 0.05], [0.05, 0.7]]),
            seed: 3,
        };
        let (net, _) = sample_network(&spec).unwrap();
        let res = fit(&net, &cov, None, &ModelConfig::new(2).with_restarts(2)).unwrap();
        (net, cov, res.summary)
    }

    #[test]
    fn bootstrap_is_reproducible_and_summarizes() {
        let (net, cov, summary) = reference();
        assert!(summary.converged);
        let cfg = BootstrapConfig { replicates: 4, seed: 10, ..Default::default() };
        let a = bootstrap_beta(&summary, &net, &cov, &cfg).unwrap();
        let b = bootstrap_beta(&summary, &net, &cov, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.iter().map(|s| s.replicate).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        for s in &a.samples {
            let mut p = s.permutation.clone();
            p.sort_unstable();
            assert_eq!(p, vec![0, 1]);
        }
        let rows = a.intervals().unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.lower <= r.upper));
        let mut buf = Vec::new();
        write_intervals_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("group,covariate,estimate,q2.5,q97.5,significant\n1,intercept,"));
        let mut buf = Vec::new();
        a.write_samples_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 2);

        let draws = bootstrap_beta(&summary, &net, &cov, &BootstrapConfig { theta_source: ThetaSource::PosteriorDraw, ..cfg })
            .unwrap();
        assert_ne!(draws, a);
    }

    #[test]
    fn single_replicate_has_no_interval() {
        let (net, cov, summary) = reference();
        let one = bootstrap_beta(&summary, &net, &cov, &BootstrapConfig { replicates: 1, ..Default::default() }).unwrap();
        assert_eq!(one.samples.len(), 1);
        assert!(matches!(one.intervals(), Err(BootstrapError::TooFewSamples { needed: 2, .. })));
    }

    #[test]
    fn non_converging_refits_are_an_error() {
        let (net, cov, mut summary) = reference();
        summary.config.max_iterations = 1;
        summary.config.tolerance = 1e-300;
        let res = bootstrap_beta(&summary, &net, &cov, &BootstrapConfig { replicates: 5, ..Default::default() });
        assert!(matches!(res, Err(BootstrapError::TooManyFailures { failed: 5, total: 5 })));
        summary.converged = false;
        assert!(matches!(
            bootstrap_beta(&summary, &net, &cov, &BootstrapConfig::default()),
            Err(BootstrapError::ReferenceNotConverged)
        ));
    }

    #[test]
    fn curvature_errors_are_positive() {
        let (_, cov, summary) = reference();
        let se = approximate_standard_errors(&summary, &cov).unwrap();
        assert!(se.iter().all(|&v| v > 0.0 && v.is_finite()));
    }
}
