//! Goodness-of-fit checks: membership entropy scores, degree and geodesic
//! distributions of observed versus simulated networks, and separation of
//! fitted link probabilities.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{quantile, simulated_network, BootstrapError, ThetaSource};
use crate::data::{CovariateMatrix, Network};
use crate::numerics::xlogx;
use crate::scalar::Scalar;
use crate::selection::link_probability;
use crate::vb::FitSummary;

/// Extent of membership exp(−Σ_g τ_ig ln τ_ig) per actor, between 1 for a
/// single group and G for uniform membership.
pub fn eom_scores<S: Scalar>(tau: &Array2<S>) -> Array1<S> {
    tau.rows().into_iter().map(|row| (-row.iter().map(|&t| xlogx(t)).sum::<S>()).exp()).collect()
}

/// Writes `actor,score` with 1-based actors.
pub fn write_eom_csv<S: Scalar, W: Write>(scores: &Array1<S>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "actor,score")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, s)?;
    }
    Ok(())
}

/// Number of actors at each degree 0..N−1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeHistograms {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

/// Degree histograms over observed links; unobserved dyads count as absent.
pub fn degree_distributions(network: &Network) -> DegreeHistograms {
    let n = network.n_actors();
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    for (i, j) in network.observed_links() {
        outdeg[i] += 1;
        indeg[j] += 1;
    }
    let hist = |deg: Vec<usize>| {
        let mut h = vec![0usize; n.max(1)];
        for d in deg {
            h[d] += 1;
        }
        h
    };
    DegreeHistograms { in_degree: hist(indeg), out_degree: hist(outdeg) }
}

/// Ordered pairs by shortest directed path length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeodesicDistribution {
    /// `by_distance[d - 1]` pairs at distance d, for d in 1..N−1.
    pub by_distance: Vec<usize>,
    pub unreachable: usize,
}

impl GeodesicDistribution {
    pub fn count(&self, distance: usize) -> usize {
        distance.checked_sub(1).and_then(|k| self.by_distance.get(k)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.by_distance.iter().sum::<usize>() + self.unreachable
    }
}

/// Breadth-first search from every actor over observed links.
pub fn geodesic_distribution(network: &Network) -> GeodesicDistribution {
    let n = network.n_actors();
    let mut adjacency = vec![Vec::new(); n];
    for (i, j) in network.observed_links() {
        adjacency[i].push(j);
    }
    let mut by_distance = vec![0usize; n.saturating_sub(1)];
    let mut unreachable = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for source in 0..n {
        dist.fill(usize::MAX);
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (target, &d) in dist.iter().enumerate() {
            if target == source {
                continue;
            }
            if d == usize::MAX {
                unreachable += 1;
            } else {
                by_distance[d - 1] += 1;
            }
        }
    }
    GeodesicDistribution { by_distance, unreachable }
}

/// Fitted link probabilities at the observed dyads, split by outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LinkSeparation<S> {
    /// `(i, j, p̂)` at observed links.
    pub links: Vec<(usize, usize, S)>,
    /// `(i, j, p̂)` at observed non-links.
    pub non_links: Vec<(usize, usize, S)>,
}

impl<S: Scalar> LinkSeparation<S> {
    /// Writes `i,j,y_observed,p_hat` with 1-based actors, row-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,y_observed,p_hat")?;
        let mut rows: Vec<(usize, usize, u8, S)> = self
            .links
            .iter()
            .map(|&(i, j, p)| (i, j, 1, p))
            .chain(self.non_links.iter().map(|&(i, j, p)| (i, j, 0, p)))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        for (i, j, y, p) in rows {
            writeln!(out, "{},{},{},{}", i + 1, j + 1, y, p)?;
        }
        Ok(())
    }
}

pub fn link_probability_separation<S: Scalar>(fit: &FitSummary<S>, network: &Network) -> LinkSeparation<S> {
    assert_eq!(fit.n_actors, network.n_actors(), "fit and network differ in size");
    let mut out = LinkSeparation { links: Vec::new(), non_links: Vec::new() };
    for (i, j) in network.observed_dyads() {
        let p = link_probability(&fit.theta_hat, fit.tau_hat.row(i), fit.tau_hat.row(j));
        if network.link(i, j) {
            out.links.push((i, j, p));
        } else {
            out.non_links.push((i, j, p));
        }
    }
    out
}

/// The three statistics compared between data and simulations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStatistics {
    pub degrees: DegreeHistograms,
    pub geodesic: GeodesicDistribution,
}

impl NetworkStatistics {
    pub fn of(network: &Network) -> Self {
        NetworkStatistics { degrees: degree_distributions(network), geodesic: geodesic_distribution(network) }
    }

    fn value(&self, statistic: Statistic, support: SupportPoint) -> usize {
        match (statistic, support) {
            (Statistic::InDegree, SupportPoint::Value(d)) => self.degrees.in_degree.get(d).copied().unwrap_or(0),
            (Statistic::OutDegree, SupportPoint::Value(d)) => self.degrees.out_degree.get(d).copied().unwrap_or(0),
            (Statistic::Geodesic, SupportPoint::Value(d)) => self.geodesic.count(d),
            (Statistic::Geodesic, SupportPoint::Unreachable) => self.geodesic.unreachable,
            (_, SupportPoint::Unreachable) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    InDegree,
    OutDegree,
    Geodesic,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::InDegree => "in_degree",
            Statistic::OutDegree => "out_degree",
            Statistic::Geodesic => "geodesic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportPoint {
    Value(usize),
    Unreachable,
}

impl fmt::Display for SupportPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportPoint::Value(v) => write!(f, "{v}"),
            SupportPoint::Unreachable => f.write_str("inf"),
        }
    }
}

/// Five-number summary of the simulated counts at one support point, with
/// the observed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub statistic: Statistic,
    pub support: SupportPoint,
    pub observed: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl EnvelopeRow {
    pub fn observed_within_quartiles(&self) -> bool {
        let v = self.observed as f64;
        self.q25 <= v && v <= self.q75
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub observed: NetworkStatistics,
    pub simulated: Vec<NetworkStatistics>,
    pub envelopes: Vec<EnvelopeRow>,
}

impl GofReport {
    pub fn rows(&self, statistic: Statistic) -> impl Iterator<Item = &EnvelopeRow> {
        self.envelopes.iter().filter(move |r| r.statistic == statistic)
    }

    /// Writes `statistic,support_point,observed,sim_min,sim_q25,sim_median,sim_q75,sim_max`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "statistic,support_point,observed,sim_min,sim_q25,sim_median,sim_q75,sim_max")?;
        for r in &self.envelopes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.statistic, r.support, r.observed, r.min, r.q25, r.median, r.q75, r.max
            )?;
        }
        Ok(())
    }
}

/// Assembles envelopes over the full support of each statistic: degrees
/// 0..N−1, geodesic distances 1..N−1 and the unreachable bin.
pub fn envelopes(observed: &NetworkStatistics, simulated: &[NetworkStatistics], n_actors: usize) -> Vec<EnvelopeRow> {
    let mut points = Vec::new();
    for stat in [Statistic::InDegree, Statistic::OutDegree] {
        points.extend((0..n_actors).map(|d| (stat, SupportPoint::Value(d))));
    }
    points.extend((1..n_actors).map(|d| (Statistic::Geodesic, SupportPoint::Value(d))));
    points.push((Statistic::Geodesic, SupportPoint::Unreachable));
    points
        .into_iter()
        .map(|(statistic, support)| {
            let sims: Vec<f64> = simulated.iter().map(|s| s.value(statistic, support) as f64).collect();
            let q = |p| quantile(&sims, p).unwrap_or(f64::NAN);
            EnvelopeRow {
                statistic,
                support,
                observed: observed.value(statistic, support),
                min: q(0.0),
                q25: q(0.25),
                median: q(0.5),
                q75: q(0.75),
                max: q(1.0),
            }
        })
        .collect()
}

/// Simulates `replicates` networks from the fit (replicate r with seed
/// `seed + r`, keeping the data's missingness pattern) and compares their
/// statistics with the observed network.
pub fn gof_compare<S: Scalar>(
    fit: &FitSummary<S>,
    network: &Network,
    covariates: &CovariateMatrix<S>,
    replicates: usize,
    seed: u64,
) -> Result<GofReport, BootstrapError> {
    if !fit.converged {
        return Err(BootstrapError::ReferenceNotConverged);
    }
    if covariates.n_actors() != fit.n_actors || network.n_actors() != fit.n_actors {
        return Err(BootstrapError::Dimension { got: network.n_actors(), want: fit.n_actors });
    }
    let simulated: Vec<NetworkStatistics> = (1..=replicates)
        .into_par_iter()
        .map(|r| {
            let net =
                simulated_network(fit, network, ThetaSource::PosteriorMean, seed.wrapping_add(r as u64))?;
            Ok(NetworkStatistics::of(&net))
        })
        .collect::<Result<_, BootstrapError>>()?;
    let observed = NetworkStatistics::of(network);
    let envelopes = envelopes(&observed, &simulated, network.n_actors());
    Ok(GofReport { observed, simulated, envelopes })
}
