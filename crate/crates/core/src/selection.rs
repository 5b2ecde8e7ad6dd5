//! Choosing the number of groups by k-fold cross-validated hold-out
//! likelihood, and link-prediction ROC curves.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_folds, mask_fold, CovariateMatrix, DataError, FoldAssignment, Network};
use crate::scalar::Scalar;
use crate::vb::{fit, FitError, FitSummary, ModelConfig};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("ROC needs at least one positive and one negative label")]
    SingleClass,
    #[error("no candidate group counts given")]
    NoCandidates,
    #[error("every fold failed for all candidate group counts")]
    AllFoldsFailed,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// p(Y_ij = 1 | Θ̂, τ̂_i, τ̂_j) = Σ_gh τ̂_ig τ̂_jh Θ̂_gh.
pub fn link_probability<S: Scalar>(theta: &Array2<S>, tau_i: ArrayView1<'_, S>, tau_j: ArrayView1<'_, S>) -> S {
    let mut total = S::zero();
    for (g, &a) in tau_i.iter().enumerate() {
        for (h, &b) in tau_j.iter().enumerate() {
            total += a * b * theta[[g, h]];
        }
    }
    total
}

/// log Σ_gh τ̂_ig τ̂_jh Θ̂_gh^y (1 − Θ̂_gh)^(1−y).
pub fn holdout_loglik<S: Scalar>(
    theta: &Array2<S>,
    tau_i: ArrayView1<'_, S>,
    tau_j: ArrayView1<'_, S>,
    y: bool,
) -> S {
    let mut total = S::zero();
    for (g, &a) in tau_i.iter().enumerate() {
        for (h, &b) in tau_j.iter().enumerate() {
            let t = theta[[g, h]];
            total += a * b * if y { t } else { S::one() - t };
        }
    }
    total.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    /// From (0, 0) at threshold +∞ down to (1, 1), one point per distinct
    /// score.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr,threshold")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}

/// AUC by the rank (Mann–Whitney) statistic with tied scores counting one
/// half, and the ROC points at every distinct threshold.
pub fn roc_auc<S: Scalar>(scores: &[(S, bool)]) -> Result<RocCurve, SelectionError> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SelectionError::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = scores.iter().map(|&(s, y)| (s.as_f64(), y)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Mid-ranks over tie blocks, ascending.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end + 1 < sorted.len() && sorted[end + 1].0 == sorted[start].0 {
            end += 1;
        }
        let mid = (start + end) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * sorted[start..=end].iter().filter(|s| s.1).count() as f64;
        start = end + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let auc = (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut idx = sorted.len();
    while idx > 0 {
        let threshold = sorted[idx - 1].0;
        while idx > 0 && sorted[idx - 1].0 == threshold {
            if sorted[idx - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx -= 1;
        }
        points.push(RocPoint { fpr: fp as f64 / n, tpr: tp as f64 / p, threshold });
    }
    Ok(RocCurve { auc, points })
}

/// Settings for [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CvConfig<S> {
    pub groups: Vec<usize>,
    pub k: usize,
    /// Seed of the dyad partition.
    pub fold_seed: u64,
    /// Template for every fit; its group count and prior are resized per
    /// candidate.
    pub model: ModelConfig<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FoldScore<S> {
    pub n_groups: usize,
    pub fold: usize,
    /// Mean hold-out log-likelihood per scored dyad; `None` when the fit
    /// failed or the fold held no observed dyads.
    pub mean_loglik: Option<S>,
    pub n_dyads: usize,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GroupScore<S> {
    pub n_groups: usize,
    pub mean: S,
    /// Sample standard deviation of the fold means over √(folds used).
    pub stderr: S,
    pub folds_used: usize,
    /// AUC of the predictions pooled over all folds.
    pub pooled_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CvReport<S> {
    pub folds: Vec<FoldScore<S>>,
    pub summary: Vec<GroupScore<S>>,
    pub chosen_groups: usize,
    /// Per candidate, (p̂(Y = 1), observed link) for every held-out dyad.
    pub predictions: Vec<(usize, Vec<(S, bool)>)>,
}

impl<S: Scalar> CvReport<S> {
    /// Writes `G,fold,mean_loglik,n_dyads,auc`; failed folds have empty fields.
    pub fn write_folds_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "G,fold,mean_loglik,n_dyads,auc")?;
        for f in &self.folds {
            let ll = f.mean_loglik.map(|v| v.to_string()).unwrap_or_default();
            let auc = f.auc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", f.n_groups, f.fold, ll, f.n_dyads, auc)?;
        }
        Ok(())
    }

    /// Writes `G,mean,stderr,folds_used,pooled_auc`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "G,mean,stderr,folds_used,pooled_auc")?;
        for s in &self.summary {
            let auc = s.pooled_auc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", s.n_groups, s.mean, s.stderr, s.folds_used, auc)?;
        }
        Ok(())
    }

    /// Pooled ROC curve for `n_groups`.
    pub fn roc(&self, n_groups: usize) -> Result<RocCurve, SelectionError> {
        let preds = self
            .predictions
            .iter()
            .find(|(g, _)| *g == n_groups)
            .map(|(_, p)| p.as_slice())
            .unwrap_or(&[]);
        roc_auc(preds)
    }
}

struct FoldOutcome<S> {
    score: FoldScore<S>,
    predictions: Vec<(S, bool)>,
}

fn score_fold<S: Scalar>(
    network: &Network,
    folds: &FoldAssignment,
    fold: usize,
    summary: &FitSummary<S>,
) -> (Vec<S>, Vec<(S, bool)>) {
    let mut lls = Vec::new();
    let mut preds = Vec::new();
    for (i, j) in folds.dyads_in(fold) {
        if !network.is_observed(i, j) {
            continue;
        }
        let y = network.link(i, j);
        let (ti, tj) = (summary.tau_hat.row(i), summary.tau_hat.row(j));
        lls.push(holdout_loglik(&summary.theta_hat, ti, tj, y));
        preds.push((link_probability(&summary.theta_hat, ti, tj), y));
    }
    (lls, preds)
}

/// Fits every candidate group count on every fold-masked copy of `network`
/// and scores the held-out dyads. The chosen count is the smallest whose
/// mean is within one standard error of the best mean.
pub fn cross_validate<S: Scalar>(
    network: &Network,
    covariates: &CovariateMatrix<S>,
    config: &CvConfig<S>,
) -> Result<CvReport<S>, SelectionError> {
    if config.groups.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let folds = make_folds(network, config.k, config.fold_seed)?;
    let models: Vec<ModelConfig<S>> =
        config.groups.iter().map(|&g| config.model.with_groups(g)).collect::<Result<_, _>>()?;
    let masked: Vec<Network> =
        (1..=config.k).map(|f| mask_fold(network, &folds, f)).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..models.len()).flat_map(|m| (1..=config.k).map(move |f| (m, f))).collect();

    let outcomes: Vec<FoldOutcome<S>> = jobs
        .par_iter()
        .map(|&(m, fold)| {
            let n_groups = models[m].n_groups;
            let mut score =
                FoldScore { n_groups, fold, mean_loglik: None, n_dyads: 0, auc: None, error: None };
            match fit(&masked[fold - 1], covariates, None, &models[m]) {
                Ok(res) => {
                    let (lls, predictions) = score_fold(network, &folds, fold, &res.summary);
                    score.n_dyads = lls.len();
                    if !lls.is_empty() {
                        let mean = lls.iter().copied().sum::<S>() / S::from_usize_lossy(lls.len());
                        score.mean_loglik = mean.is_finite().then_some(mean);
                    }
                    score.auc = roc_auc(&predictions).ok().map(|r| r.auc);
                    FoldOutcome { score, predictions }
                }
                Err(e) => {
                    log::warn!("G={n_groups}, fold {fold}: fit failed and is excluded: {e}");
                    score.error = Some(e.to_string());
                    FoldOutcome { score, predictions: Vec::new() }
                }
            }
        })
        .collect();

    let mut summary = Vec::new();
    let mut predictions = Vec::new();
    for model in &models {
        let g = model.n_groups;
        let mine: Vec<&FoldOutcome<S>> = outcomes.iter().filter(|o| o.score.n_groups == g).collect();
        let means: Vec<S> = mine.iter().filter_map(|o| o.score.mean_loglik).collect();
        let pooled: Vec<(S, bool)> = mine.iter().flat_map(|o| o.predictions.iter().copied()).collect();
        let pooled_auc = roc_auc(&pooled).ok().map(|r| r.auc);
        predictions.push((g, pooled));
        if means.is_empty() {
            continue;
        }
        let k = S::from_usize_lossy(means.len());
        let mean = means.iter().copied().sum::<S>() / k;
        let stderr = if means.len() > 1 {
            let var = means.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / (k - S::one());
            (var / k).sqrt()
        } else {
            S::zero()
        };
        summary.push(GroupScore { n_groups: g, mean, stderr, folds_used: means.len(), pooled_auc });
    }
    let best = summary
        .iter()
        .fold(None::<&GroupScore<S>>, |b, s| match b {
            Some(b) if b.mean >= s.mean => Some(b),
            _ => Some(s),
        })
        .ok_or(SelectionError::AllFoldsFailed)?;
    let cutoff = best.mean - best.stderr;
    let chosen_groups =
        summary.iter().filter(|s| s.mean >= cutoff).map(|s| s.n_groups).min().unwrap_or(best.n_groups);
    Ok(CvReport { folds: outcomes.into_iter().map(|o| o.score).collect(), summary, chosen_groups, predictions })
}
