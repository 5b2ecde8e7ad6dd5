use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_elbo, sweep_phi, update_gamma, InitStrategy, update_zeta, FitError, ModelConfig, StateDump, VariationalState};
use crate::data::{CovariateMatrix, Network};
use crate::gating::{estimate_beta, init_beta_mom, BetaCoefficients, BetaDiagnostics, DirichletPriorTable};
use crate::scalar::Scalar;
use crate::serde_matrix;

/// Everything about a fit except the dyad-level memberships φ; this is what
/// gets written to `fit.json` and what the bootstrap and diagnostics consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FitSummary<S> {
    pub n_actors: usize,
    pub n_groups: usize,
    pub covariate_names: Vec<String>,
    #[serde(with = "serde_matrix")]
    pub beta: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub gamma: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub zeta1: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub zeta2: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub tau_hat: Array2<S>,
    #[serde(with = "serde_matrix")]
    pub theta_hat: Array2<S>,
    pub elbo: S,
    pub elbo_trace: Vec<S>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    /// Index of the restart that was kept.
    pub restart: usize,
    pub beta_diagnostics: BetaDiagnostics<S>,
    pub config: ModelConfig<S>,
}

#[derive(Debug, Clone)]
pub struct FitResult<S> {
    pub summary: FitSummary<S>,
    pub state: VariationalState<S>,
}

fn check_inputs<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    beta: Option<&Array2<S>>,
    config: &ModelConfig<S>,
) -> Result<(), FitError> {
    config.validate()?;
    if covariates.n_actors() != network.n_actors() {
        return Err(FitError::Dimension(format!(
            "network has {} actors, covariates {}",
            network.n_actors(),
            covariates.n_actors()
        )));
    }
    if let Some(b) = beta {
        let want = (config.n_groups, covariates.n_covariates());
        if b.dim() != want {
            return Err(FitError::Dimension(format!("beta is {:?}, expected {:?}", b.dim(), want)));
        }
    }
    Ok(())
}

/// Fits the model from `config.n_restarts` random starts (seeds `seed`,
/// `seed + 1`, …) and keeps the one with the highest final lower bound,
/// the lowest restart index on ties.
///
/// Without `beta_init`, each start takes its coefficients from
/// [`init_beta_mom`] on the initial γ.
pub fn fit<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    beta_init: Option<&Array2<S>>,
    config: &ModelConfig<S>,
) -> Result<FitResult<S>, FitError> {
    check_inputs(network, covariates, beta_init, config)?;
    let runs: Vec<Result<FitResult<S>, FitError>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = match config.init {
                InitStrategy::Spectral => {
                    VariationalState::spectral(network, config.n_groups, config.init_noise, &mut rng)
                }
                InitStrategy::Random => VariationalState::random(network, config.n_groups, config.init_noise, &mut rng),
            };
            let beta = match beta_init {
                Some(b) => BetaCoefficients::new(b.clone(), config.beta.clip_bound)?,
                None => {
                    let mut s = state.clone();
                    let ones = DirichletPriorTable::ones(network.n_actors(), config.n_groups);
                    update_gamma(&mut s, network, &ones);
                    init_beta_mom(&s.gamma, covariates, &config.beta)
                }
            };
            run(network, covariates, state, beta, config, seed, r)
        })
        .collect();
    let mut best: Option<FitResult<S>> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.summary.elbo > b.summary.elbo) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Single fit started at known memberships `tau` (N×G), every dyad's roles
/// set to the two actors' rows, and coefficients `beta`; used for bootstrap
/// refits. `config.init_noise` is not applied.
pub fn fit_warm<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    tau: &Array2<S>,
    beta: &Array2<S>,
    config: &ModelConfig<S>,
) -> Result<FitResult<S>, FitError> {
    check_inputs(network, covariates, Some(beta), config)?;
    if tau.dim() != (network.n_actors(), config.n_groups) {
        return Err(FitError::Dimension(format!("tau is {:?}", tau.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let state = VariationalState::around_memberships(network, tau, S::zero(), &mut rng);
    let beta = BetaCoefficients::new(beta.clone(), config.beta.clip_bound)?;
    run(network, covariates, state, beta, config, config.seed, 0)
}

/// Single fit from explicit initial memberships: γ and ζ are recomputed from
/// `state.phi1`/`state.phi2` before the first sweep.
pub fn fit_from_state<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    state: VariationalState<S>,
    beta: &Array2<S>,
    config: &ModelConfig<S>,
) -> Result<FitResult<S>, FitError> {
    check_inputs(network, covariates, Some(beta), config)?;
    let n = network.n_actors();
    if state.phi1.dim() != (n, n, config.n_groups) || state.phi2.dim() != (n, n, config.n_groups) {
        return Err(FitError::Dimension(format!("memberships are {:?}", state.phi1.dim())));
    }
    let beta = BetaCoefficients::new(beta.clone(), config.beta.clip_bound)?;
    run(network, covariates, state, beta, config, config.seed, 0)
}

fn run<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    mut state: VariationalState<S>,
    mut beta: BetaCoefficients<S>,
    config: &ModelConfig<S>,
    seed: u64,
    restart: usize,
) -> Result<FitResult<S>, FitError> {
    let mut delta = DirichletPriorTable::from_beta(beta.values(), covariates)?;
    update_gamma(&mut state, network, &delta);
    update_zeta(&mut state, network, &config.alpha1, &config.alpha2);
    let elbo = |s: &VariationalState<S>, d: &DirichletPriorTable<S>| {
        compute_elbo(s, network, d, &config.alpha1, &config.alpha2)
    };
    let mut trace = vec![elbo(&state, &delta)];
    let mut diagnostics = BetaDiagnostics::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_good = state.clone();
    if !trace[0].is_finite() {
        return Err(non_finite(0, &trace, &state, &beta));
    }
    let update_beta = config.beta.estimate && config.n_groups > 1;
    for sweep in 1..=config.max_iterations {
        sweep_phi(&mut state, network, config.phi_inner_iterations);
        update_gamma(&mut state, network, &delta);
        update_zeta(&mut state, network, &config.alpha1, &config.alpha2);
        if update_beta && sweep % config.beta.update_interval == 0 {
            let est = estimate_beta(&beta, covariates, &state.gamma, &config.beta)?;
            beta = est.beta;
            diagnostics.absorb(est.diagnostics);
            delta = DirichletPriorTable::from_beta(beta.values(), covariates)?;
        }
        let value = elbo(&state, &delta);
        iterations = sweep;
        if !value.is_finite() {
            return Err(non_finite(sweep, &trace, &last_good, &beta));
        }
        let prev = *trace.last().unwrap();
        trace.push(value);
        if ((value - prev) / prev).abs() < config.tolerance {
            converged = true;
            break;
        }
        last_good.clone_from(&state);
    }
    if !converged {
        log::warn!("fit did not converge in {} sweeps (restart {restart})", config.max_iterations);
    }
    let summary = FitSummary {
        n_actors: network.n_actors(),
        n_groups: config.n_groups,
        covariate_names: covariates.names().to_vec(),
        beta: beta.into_values(),
        gamma: state.gamma.clone(),
        zeta1: state.zeta1.clone(),
        zeta2: state.zeta2.clone(),
        tau_hat: state.tau_hat(),
        theta_hat: state.theta_hat(),
        elbo: *trace.last().unwrap(),
        elbo_trace: trace,
        converged,
        iterations,
        seed,
        restart,
        beta_diagnostics: diagnostics,
        config: config.clone(),
    };
    Ok(FitResult { summary, state })
}

fn non_finite<S: Scalar>(
    iteration: usize,
    trace: &[S],
    state: &VariationalState<S>,
    beta: &BetaCoefficients<S>,
) -> FitError {
    let rows = |m: &Array2<S>| -> Vec<Vec<f64>> {
        m.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
    };
    FitError::NonFinite(Box::new(StateDump {
        iteration,
        elbo_trace: trace.iter().map(|v| v.as_f64()).collect(),
        gamma: rows(&state.gamma),
        zeta1: rows(&state.zeta1),
        zeta2: rows(&state.zeta2),
        beta: rows(beta.values()),
    }))
}
