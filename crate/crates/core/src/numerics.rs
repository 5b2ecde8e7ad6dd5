//! Special functions and log-space helpers.
//!
//! `digamma`, `trigamma` and `log_gamma` validate their argument and return
//! [`NumericsError::Domain`] outside `x > 0`. The `psi`, `psi1` and `ln_gamma`
//! variants skip the check and are used on hot paths where positivity is an
//! invariant of the caller.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{function} is undefined at x = {value}")]
    Domain { function: &'static str, value: f64 },
    #[error("log_sum_exp of an empty vector")]
    EmptyInput,
}

// Below this the asymptotic expansions are not accurate to double precision.
const ASYMPTOTIC_FROM: f64 = 6.0;

fn check_domain<S: Scalar>(function: &'static str, x: S) -> Result<(), NumericsError> {
    if x.is_finite() && x > S::zero() {
        Ok(())
    } else {
        Err(NumericsError::Domain { function, value: x.as_f64() })
    }
}

/// Digamma function Ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma<S: Scalar>(x: S) -> Result<S, NumericsError> {
    check_domain("digamma", x)?;
    Ok(psi(x))
}

/// Unchecked digamma. Returns NaN for non-positive input.
pub fn psi<S: Scalar>(x: S) -> S {
    if !(x > S::zero()) {
        return S::nan();
    }
    let mut x = x;
    let mut acc = S::zero();
    let cutoff = S::lit(ASYMPTOTIC_FROM);
    while x < cutoff {
        acc -= x.recip();
        x += S::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // Bernoulli-number tail: B_2k / (2k x^2k)
    let tail = inv2
        * (S::lit(1.0 / 12.0)
            - inv2
                * (S::lit(1.0 / 120.0)
                    - inv2
                        * (S::lit(1.0 / 252.0)
                            - inv2
                                * (S::lit(1.0 / 240.0)
                                    - inv2
                                        * (S::lit(1.0 / 132.0)
                                            - inv2
                                                * (S::lit(691.0 / 32760.0)
                                                    - inv2 * S::lit(1.0 / 12.0)))))));
    acc + x.ln() - S::lit(0.5) * inv - tail
}

/// Trigamma function Ψ′(x) for x > 0.
pub fn trigamma<S: Scalar>(x: S) -> Result<S, NumericsError> {
    check_domain("trigamma", x)?;
    Ok(psi1(x))
}

/// Unchecked trigamma. Returns NaN for non-positive input.
pub fn psi1<S: Scalar>(x: S) -> S {
    if !(x > S::zero()) {
        return S::nan();
    }
    let mut x = x;
    let mut acc = S::zero();
    let cutoff = S::lit(ASYMPTOTIC_FROM);
    while x < cutoff {
        acc += (x * x).recip();
        x += S::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = S::one()
        + S::lit(0.5) * inv
        + inv2
            * (S::lit(1.0 / 6.0)
                - inv2
                    * (S::lit(1.0 / 30.0)
                        - inv2
                            * (S::lit(1.0 / 42.0)
                                - inv2
                                    * (S::lit(1.0 / 30.0)
                                        - inv2
                                            * (S::lit(5.0 / 66.0)
                                                - inv2
                                                    * (S::lit(691.0 / 2730.0)
                                                        - inv2 * S::lit(7.0 / 6.0)))))));
    acc + inv * series
}

/// Natural log of the gamma function for x > 0.
pub fn log_gamma<S: Scalar>(x: S) -> Result<S, NumericsError> {
    check_domain("log_gamma", x)?;
    Ok(ln_gamma(x))
}

/// Unchecked ln Γ(x). Returns NaN for non-positive input.
pub fn ln_gamma<S: Scalar>(x: S) -> S {
    if !(x > S::zero()) {
        return S::nan();
    }
    if x == S::one() || x == S::lit(2.0) {
        return S::zero();
    }
    let cutoff = S::lit(7.0);
    let mut x = x;
    let mut prod = S::one();
    while x < cutoff {
        prod *= x;
        x += S::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let half_ln_two_pi = S::lit(0.918_938_533_204_672_8);
    let tail = inv
        * (S::lit(1.0 / 12.0)
            - inv2
                * (S::lit(1.0 / 360.0)
                    - inv2
                        * (S::lit(1.0 / 1260.0)
                            - inv2
                                * (S::lit(1.0 / 1680.0)
                                    - inv2
                                        * (S::lit(1.0 / 1188.0)
                                            - inv2
                                                * (S::lit(691.0 / 360_360.0)
                                                    - inv2 * S::lit(1.0 / 156.0)))))));
    (x - S::lit(0.5)) * x.ln() - x + half_ln_two_pi + tail - prod.ln()
}

/// ln Σ exp(vᵢ), computed with a max shift so large entries do not overflow.
pub fn log_sum_exp<S: Scalar>(v: &[S]) -> Result<S, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    Ok(log_sum_exp_nonempty(v))
}

pub(crate) fn log_sum_exp_nonempty<S: Scalar>(v: &[S]) -> S {
    let max = v.iter().copied().fold(S::neg_infinity(), S::max);
    if max.is_infinite() {
        return max;
    }
    let sum: S = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Replaces log-weights by the normalized probabilities they define.
pub fn normalize_log_weights<S: Scalar>(weights: &mut [S]) {
    let max = weights.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        let lse = log_sum_exp_nonempty(weights);
        for w in weights.iter_mut() {
            *w = (*w - lse).exp();
        }
        return;
    }
    let mut total = S::zero();
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub fn ln_beta<S: Scalar>(a: S, b: S) -> S {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// x ln x with the 0 ln 0 = 0 convention.
#[inline]
pub fn xlogx<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x * x.ln()
    } else {
        S::zero()
    }
}
