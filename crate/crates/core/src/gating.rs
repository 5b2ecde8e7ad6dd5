//! Covariate coefficients β of the Dirichlet membership prior.
//!
//! Each actor's membership prior is Dirichlet(δᵢ) with δ_ig = exp(Σ_p W_ip β_gp).
//! β only enters the lower bound through Σᵢ E_q[log p(τᵢ | δᵢ)], which is
//! maximized here by damped Newton–Raphson with step halving. Coefficients
//! are stored G×P; flattened vectors (gradient, Hessian rows) are group-major,
//! index `g * P + p`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::CovariateMatrix;
use crate::linalg::{cholesky, cholesky_solve};
use crate::numerics::{ln_gamma, psi, psi1};
use crate::scalar::Scalar;
use crate::serde_matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatingError {
    #[error("exp(Wβ) overflows for actor {actor}, group {group}; covariate pattern is separable")]
    Overflow { actor: usize, group: usize },
    #[error("non-finite {what} at Newton iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("damped Newton system stayed indefinite at damping {damping:e}")]
    Singular { damping: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Settings for [`estimate_beta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BetaConfig<S> {
    /// Largest allowed |β_gp|.
    pub clip_bound: S,
    pub max_iterations: usize,
    pub gradient_tolerance: S,
    pub max_halvings: usize,
    /// Method-of-moments precision from every component instead of the
    /// first one only.
    pub mom_average_components: bool,
    /// Run the Newton step every this many sweeps of the outer fit.
    pub update_interval: usize,
    /// When false β stays at its initial value for the whole fit.
    pub estimate: bool,
}

impl<S: Scalar> Default for BetaConfig<S> {
    fn default() -> Self {
        BetaConfig {
            clip_bound: S::lit(30.0),
            max_iterations: 50,
            gradient_tolerance: S::lit(1e-6),
            max_halvings: 20,
            mom_average_components: false,
            update_interval: 1,
            estimate: true,
        }
    }
}

/// G×P coefficient matrix with every entry inside ±`clip_bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCoefficients<S> {
    values: Array2<S>,
    clip_bound: S,
}

impl<S: Scalar> BetaCoefficients<S> {
    /// Clamps `values` into ±`clip_bound`. Non-finite entries are rejected.
    pub fn new(values: Array2<S>, clip_bound: S) -> Result<Self, GatingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatingError::NonFinite { what: "initial beta", iteration: 0 });
        }
        let mut b = BetaCoefficients { values, clip_bound };
        b.clamp();
        Ok(b)
    }

    pub fn zeros(n_groups: usize, n_covariates: usize, clip_bound: S) -> Self {
        BetaCoefficients { values: Array2::zeros((n_groups, n_covariates)), clip_bound }
    }

    pub fn values(&self) -> &Array2<S> {
        &self.values
    }

    pub fn into_values(self) -> Array2<S> {
        self.values
    }

    pub fn clip_bound(&self) -> S {
        self.clip_bound
    }

    /// Clamps in place and returns the flat indices that hit the bound.
    fn clamp(&mut self) -> Vec<usize> {
        let bound = self.clip_bound;
        let mut hit = Vec::new();
        for (k, v) in self.values.iter_mut().enumerate() {
            if *v > bound {
                *v = bound;
                hit.push(k);
            } else if *v < -bound {
                *v = -bound;
                hit.push(k);
            }
        }
        hit
    }
}

/// δ_ig = exp(Σ_p W_ip β_gp), N×G.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPriorTable<S>(Array2<S>);

impl<S: Scalar> DirichletPriorTable<S> {
    pub fn from_beta(beta: &Array2<S>, covariates: &CovariateMatrix<S>) -> Result<Self, GatingError> {
        prior_concentrations(beta.view(), covariates.values().view()).map(DirichletPriorTable)
    }

    /// δ ≡ 1, the β = 0 table.
    pub fn ones(n_actors: usize, n_groups: usize) -> Self {
        DirichletPriorTable(Array2::ones((n_actors, n_groups)))
    }

    pub fn values(&self) -> &Array2<S> {
        &self.0
    }
}

fn prior_concentrations<S: Scalar>(
    beta: ArrayView2<'_, S>,
    w: ArrayView2<'_, S>,
) -> Result<Array2<S>, GatingError> {
    if beta.ncols() != w.ncols() {
        return Err(GatingError::Dimension(format!(
            "beta has {} columns, covariates {}",
            beta.ncols(),
            w.ncols()
        )));
    }
    let eta = w.dot(&beta.t());
    let mut delta = eta.mapv(S::exp);
    for ((n, g), d) in delta.indexed_iter_mut() {
        if !d.is_finite() || !(*d > S::zero()) {
            return Err(GatingError::Overflow { actor: n, group: g });
        }
        // exp underflow to a subnormal would break the digamma terms
        if *d < S::min_positive_value() {
            *d = S::min_positive_value();
        }
    }
    Ok(delta)
}

/// E_q[log τ_ng] = Ψ(γ_ng) − Ψ(Σ_h γ_nh).
pub fn expected_log_tau<S: Scalar>(gamma: &Array2<S>) -> Array2<S> {
    let mut out = gamma.mapv(psi);
    for (mut row, g_row) in out.rows_mut().into_iter().zip(gamma.rows()) {
        let total = psi(g_row.sum());
        row.mapv_inplace(|v| v - total);
    }
    out
}

/// The β-dependent part of the lower bound,
/// Σ_n [ln Γ(Σ_g δ_ng) − Σ_g ln Γ(δ_ng) + Σ_g (δ_ng − 1) E[log τ_ng]].
pub fn beta_objective<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<S, GatingError> {
    let delta = prior_concentrations(beta.view(), covariates.values().view())?;
    Ok(objective_from_delta(&delta, &expected_log_tau(gamma)))
}

pub(crate) fn objective_from_delta<S: Scalar>(delta: &Array2<S>, elog_tau: &Array2<S>) -> S {
    let mut total = S::zero();
    for (d_row, e_row) in delta.rows().into_iter().zip(elog_tau.rows()) {
        total += ln_gamma(d_row.sum());
        for (&d, &e) in d_row.iter().zip(e_row.iter()) {
            total += (d - S::one()) * e - ln_gamma(d);
        }
    }
    total
}

fn check_dims<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<(), GatingError> {
    if gamma.nrows() != covariates.n_actors() || gamma.ncols() != beta.nrows() {
        return Err(GatingError::Dimension(format!(
            "gamma is {}x{}, expected {}x{}",
            gamma.nrows(),
            gamma.ncols(),
            covariates.n_actors(),
            beta.nrows()
        )));
    }
    Ok(())
}

// Per-actor pieces shared by the gradient and Hessian: δ, and the bracket
// Ψ(Σδ) − Ψ(δ_g) + E[log τ_g].
fn gradient_terms<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<(Array2<S>, Array2<S>), GatingError> {
    check_dims(beta, covariates, gamma)?;
    let delta = prior_concentrations(beta.view(), covariates.values().view())?;
    let elog = expected_log_tau(gamma);
    let mut bracket = Array2::zeros(delta.raw_dim());
    for n in 0..delta.nrows() {
        let psi_total = psi(delta.row(n).sum());
        for g in 0..delta.ncols() {
            bracket[[n, g]] = psi_total - psi(delta[[n, g]]) + elog[[n, g]];
        }
    }
    Ok((delta, bracket))
}

/// Analytic gradient of [`beta_objective`], length G·P, group-major.
pub fn beta_gradient<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<Array1<S>, GatingError> {
    let (delta, bracket) = gradient_terms(beta, covariates, gamma)?;
    Ok(gradient_from_terms(&delta, &bracket, covariates.values()))
}

fn gradient_from_terms<S: Scalar>(delta: &Array2<S>, bracket: &Array2<S>, w: &Array2<S>) -> Array1<S> {
    let (n_actors, n_groups) = delta.dim();
    let p = w.ncols();
    let mut grad = Array1::zeros(n_groups * p);
    for n in 0..n_actors {
        for g in 0..n_groups {
            let scale = delta[[n, g]] * bracket[[n, g]];
            for q in 0..p {
                grad[g * p + q] += w[[n, q]] * scale;
            }
        }
    }
    grad
}

/// Analytic Hessian of [`beta_objective`], (G·P)×(G·P), group-major.
pub fn beta_hessian<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<Array2<S>, GatingError> {
    let (delta, bracket) = gradient_terms(beta, covariates, gamma)?;
    Ok(hessian_from_terms(&delta, &bracket, covariates.values()))
}

fn hessian_from_terms<S: Scalar>(delta: &Array2<S>, bracket: &Array2<S>, w: &Array2<S>) -> Array2<S> {
    let (n_actors, n_groups) = delta.dim();
    let p = w.ncols();
    let dim = n_groups * p;
    let mut hess = Array2::zeros((dim, dim));
    for n in 0..n_actors {
        let trig_total = psi1(delta.row(n).sum());
        let wn = w.row(n);
        for g in 0..n_groups {
            let dg = delta[[n, g]];
            for h in 0..n_groups {
                let dh = delta[[n, h]];
                let mut coef = dg * dh * trig_total;
                if g == h {
                    coef += dg * (bracket[[n, g]] - dg * psi1(dg));
                }
                for q in 0..p {
                    let wq = wn[q] * coef;
                    for r in 0..p {
                        hess[[g * p + q, h * p + r]] += wq * wn[r];
                    }
                }
            }
        }
    }
    hess
}

/// Method-of-moments starting point: covariate effects zero, intercepts
/// ln(mean_g · precision) from the moments of the normalized γ rows.
///
/// Zero spread across actors, a non-positive moment estimate, or a precision
/// above the average row total of γ (a prior cannot be more concentrated
/// than the posterior it feeds) falls back to uniform means with precision G.
pub fn init_beta_mom<S: Scalar>(
    gamma: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    config: &BetaConfig<S>,
) -> BetaCoefficients<S> {
    let (n_actors, n_groups) = gamma.dim();
    let nf = S::from_usize_lossy(n_actors.max(1));
    let mut mean = vec![S::zero(); n_groups];
    let mut second = vec![S::zero(); n_groups];
    let mut avg_total = S::zero();
    for row in gamma.rows() {
        let total = row.sum();
        avg_total += total / nf;
        for (g, &v) in row.iter().enumerate() {
            let t = v / total;
            mean[g] += t / nf;
            second[g] += t * t / nf;
        }
    }
    let estimate = |g: usize| -> Option<S> {
        let var = second[g] - mean[g] * mean[g];
        let spread = mean[g] - mean[g] * mean[g];
        if !(var > S::epsilon() * mean[g].max(S::epsilon())) {
            return None;
        }
        let precision = spread / var;
        (precision.is_finite() && precision > S::zero() && precision <= avg_total).then_some(precision)
    };
    let precision = if config.mom_average_components {
        let valid: Vec<S> = (0..n_groups).filter_map(estimate).collect();
        if valid.is_empty() {
            None
        } else {
            Some(valid.iter().copied().sum::<S>() / S::from_usize_lossy(valid.len()))
        }
    } else {
        estimate(0)
    };
    let (mean, precision) = match precision {
        Some(p) => (mean, p),
        None => {
            let g = S::from_usize_lossy(n_groups);
            (vec![g.recip(); n_groups], g)
        }
    };
    let mut values = Array2::zeros((n_groups, covariates.n_covariates()));
    let intercept = covariates.intercept_index();
    for g in 0..n_groups {
        values[[g, intercept]] = (mean[g] * precision).ln();
    }
    let bound = config.clip_bound;
    values.mapv_inplace(|v: S| if v.is_nan() { S::zero() } else { v.max(-bound).min(bound) });
    BetaCoefficients { values, clip_bound: bound }
}

/// Scratch space for one Newton step.
#[derive(Debug, Clone)]
pub struct NewtonWorkspace<S> {
    pub gradient: Array1<S>,
    pub hessian: Array2<S>,
    pub step: Array1<S>,
    pub damping: S,
}

impl<S: Scalar> NewtonWorkspace<S> {
    /// Solves (H − damping·I)·step = −∇ for the smallest damping, from the
    /// schedule 0, 1e-6·s, 1e-5·s, …, 1e6·s with s = max(1, max|H_aa|), at
    /// which H − damping·I is negative definite. `beta + step` is then an
    /// ascent direction.
    pub fn solve(&mut self) -> Result<(), GatingError> {
        let dim = self.gradient.len();
        let scale = (0..dim).map(|a| self.hessian[[a, a]].abs()).fold(S::one(), S::max);
        let mut rel = S::zero();
        loop {
            self.damping = rel * scale;
            let mut neg = self.hessian.mapv(|v| -v);
            for a in 0..dim {
                neg[[a, a]] += self.damping;
            }
            if let Some(l) = cholesky(&neg) {
                self.step = cholesky_solve(&l, &self.gradient);
                return Ok(());
            }
            rel = if rel == S::zero() { S::lit(1e-6) } else { rel * S::lit(10.0) };
            if rel > S::lit(1e6) {
                return Err(GatingError::Singular { damping: self.damping.as_f64() });
            }
        }
    }
}

/// A coefficient pinned at the clip bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparabilityWarning {
    pub group: usize,
    pub covariate: usize,
    pub covariate_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(bound = "S: Scalar")]
pub struct BetaDiagnostics<S> {
    pub iterations: usize,
    pub gradient_norm: S,
    pub damping: S,
    pub separability: Vec<SeparabilityWarning>,
}

impl<S: Scalar> BetaDiagnostics<S> {
    /// Folds the diagnostics of a later Newton run into this one.
    pub fn absorb(&mut self, later: BetaDiagnostics<S>) {
        self.iterations += later.iterations;
        self.gradient_norm = later.gradient_norm;
        self.damping = later.damping;
        for w in later.separability {
            if !self.separability.contains(&w) {
                self.separability.push(w);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BetaEstimate<S> {
    pub beta: BetaCoefficients<S>,
    pub objective: S,
    pub diagnostics: BetaDiagnostics<S>,
}

/// Maximizes [`beta_objective`] over β for fixed γ.
///
/// Each iteration takes a damped Newton step, clamps to the clip bound and
/// halves the step until the objective does not decrease, so the returned
/// objective is never below the starting one. Stops once the projected
/// gradient is below `gradient_tolerance`, no improving step exists, or
/// after `max_iterations`.
pub fn estimate_beta<S: Scalar>(
    beta_in: &BetaCoefficients<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
    config: &BetaConfig<S>,
) -> Result<BetaEstimate<S>, GatingError> {
    let (n_groups, p) = beta_in.values().dim();
    check_dims(beta_in.values(), covariates, gamma)?;
    let mut beta = BetaCoefficients { values: beta_in.values().clone(), clip_bound: config.clip_bound };
    let mut pinned = beta.clamp();
    let w = covariates.values();
    let elog = expected_log_tau(gamma);
    let mut objective = objective_from_delta(&prior_concentrations(beta.values.view(), w.view())?, &elog);
    let mut diag = BetaDiagnostics::default();

    for iteration in 0..config.max_iterations {
        let (delta, bracket) = gradient_terms(&beta.values, covariates, gamma)?;
        let mut grad = gradient_from_terms(&delta, &bracket, w);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(GatingError::NonFinite { what: "gradient", iteration });
        }
        // Coordinates held at the bound with the gradient pushing outward
        // cannot move; leave them out of the convergence test and the step.
        let bound = config.clip_bound;
        let flat = beta.values.as_slice().unwrap().to_vec();
        let mut frozen = vec![false; grad.len()];
        for (k, g) in grad.iter_mut().enumerate() {
            if (flat[k] >= bound && *g > S::zero()) || (flat[k] <= -bound && *g < S::zero()) {
                frozen[k] = true;
                *g = S::zero();
            }
        }
        diag.gradient_norm = grad.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        if diag.gradient_norm < config.gradient_tolerance {
            break;
        }
        let mut hessian = hessian_from_terms(&delta, &bracket, w);
        if hessian.iter().any(|v| !v.is_finite()) {
            return Err(GatingError::NonFinite { what: "Hessian", iteration });
        }
        for (k, &f) in frozen.iter().enumerate() {
            if f {
                hessian.row_mut(k).fill(S::zero());
                hessian.column_mut(k).fill(S::zero());
                hessian[[k, k]] = -S::one();
            }
        }
        let mut ws = NewtonWorkspace {
            gradient: grad,
            hessian,
            step: Array1::zeros(n_groups * p),
            damping: S::zero(),
        };
        ws.solve()?;
        diag.damping = ws.damping;
        diag.iterations = iteration + 1;

        let mut t = S::one();
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let mut cand = beta.clone();
            for (v, &s) in cand.values.iter_mut().zip(ws.step.iter()) {
                *v += t * s;
            }
            let hit = cand.clamp();
            if let Ok(delta) = prior_concentrations(cand.values.view(), w.view()) {
                let f = objective_from_delta(&delta, &elog);
                if f.is_finite() && f >= objective {
                    accepted = Some((cand, f, hit));
                    break;
                }
            }
            t = t * S::lit(0.5);
        }
        let Some((cand, f, hit)) = accepted else { break };
        let moved = cand.values != beta.values;
        beta = cand;
        objective = f;
        pinned.extend(hit);
        if !moved {
            break;
        }
    }

    pinned.sort_unstable();
    pinned.dedup();
    diag.separability = pinned
        .into_iter()
        .filter(|&k| beta.values.as_slice().unwrap()[k].abs() >= config.clip_bound)
        .map(|k| SeparabilityWarning {
            group: k / p,
            covariate: k % p,
            covariate_name: covariates.names()[k % p].clone(),
        })
        .collect();
    for wrn in &diag.separability {
        log::warn!(
            "coefficient for `{}` in group {} reached the clip bound; estimate tends to infinity",
            wrn.covariate_name,
            wrn.group + 1
        );
    }
    Ok(BetaEstimate { beta, objective, diagnostics: diag })
}

/// Approximate standard errors sqrt(diag((λI − H)⁻¹)) from the curvature of
/// the β block at `beta`, with the smallest damping λ that makes the system
/// positive definite. Only an approximation: it ignores the coupling to the
/// other variational parameters.
pub fn curvature_standard_errors<S: Scalar>(
    beta: &Array2<S>,
    covariates: &CovariateMatrix<S>,
    gamma: &Array2<S>,
) -> Result<Array2<S>, GatingError> {
    let hessian = beta_hessian(beta, covariates, gamma)?;
    let dim = hessian.nrows();
    let mut ws = NewtonWorkspace {
        gradient: Array1::zeros(dim),
        hessian,
        step: Array1::zeros(dim),
        damping: S::zero(),
    };
    ws.solve()?;
    let mut neg = ws.hessian.mapv(|v| -v);
    for a in 0..dim {
        neg[[a, a]] += ws.damping;
    }
    let l = cholesky(&neg).ok_or(GatingError::Singular { damping: ws.damping.as_f64() })?;
    let inv = crate::linalg::cholesky_inverse(&l);
    let (g, p) = beta.dim();
    Ok(Array2::from_shape_fn((g, p), |(gi, pi)| inv[[gi * p + pi, gi * p + pi]].sqrt()))
}

/// Serializable copy of a β matrix (used in reports).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BetaMatrix<S>(#[serde(with = "serde_matrix")] pub Array2<S>);
