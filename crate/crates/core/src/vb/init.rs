//! Data-driven starting memberships: k-means on a spectral embedding of
//! each actor's out- and in-link profile.

use ndarray::Array2;
use rand::Rng;

use crate::data::Network;

/// Observed adjacency with unobserved dyads filled by the observed density.
fn filled_adjacency(network: &Network) -> Array2<f64> {
    let n = network.n_actors();
    let fill = network.density();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else if network.is_observed(i, j) {
            if network.link(i, j) {
                1.0
            } else {
                0.0
            }
        } else {
            fill
        }
    })
}

/// Orthonormalizes the columns of `q` in place (modified Gram–Schmidt).
/// Columns that collapse are replaced by fresh random directions.
fn orthonormalize<R: Rng + ?Sized>(q: &mut Array2<f64>, rng: &mut R) {
    let k = q.ncols();
    for c in 0..k {
        for attempt in 0..3 {
            for prev in 0..c {
                let dot = q.column(c).dot(&q.column(prev));
                let p = q.column(prev).to_owned();
                q.column_mut(c).scaled_add(-dot, &p);
            }
            let norm = q.column(c).dot(&q.column(c)).sqrt();
            if norm > 1e-12 {
                q.column_mut(c).mapv_inplace(|v| v / norm);
                break;
            }
            if attempt < 2 {
                q.column_mut(c).mapv_inplace(|_| rng.random::<f64>() - 0.5);
            }
        }
    }
}

/// Leading `k` left singular vectors of [Y  Yᵀ], scaled by their singular
/// values, by subspace iteration on Y Yᵀ + Yᵀ Y.
pub(crate) fn spectral_embedding<R: Rng + ?Sized>(network: &Network, k: usize, rng: &mut R) -> Array2<f64> {
    let y = filled_adjacency(network);
    let n = y.nrows();
    let mut q = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() - 0.5);
    orthonormalize(&mut q, rng);
    let apply = |q: &Array2<f64>| y.dot(&y.t().dot(q)) + y.t().dot(&y.dot(q));
    for _ in 0..300 {
        let mut next = apply(&q);
        orthonormalize(&mut next, rng);
        let change: f64 = (0..k).map(|c| 1.0 - next.column(c).dot(&q.column(c)).abs()).fold(0.0, f64::max);
        q = next;
        if change < 1e-10 {
            break;
        }
    }
    // scale each direction by its singular value so weak directions weigh less
    let mq = apply(&q);
    for c in 0..k {
        let sigma = q.column(c).dot(&mq.column(c)).max(0.0).sqrt();
        q.column_mut(c).mapv_inplace(|v| v * sigma);
    }
    q
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding; returns the cluster of each row.
pub(crate) fn kmeans<R: Rng + ?Sized>(points: &Array2<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.nrows();
    let k = k.min(n).max(1);
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut nearest = vec![f64::INFINITY; n];
    for c in 1..k {
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(points.row(i), centers.row(c - 1)));
        }
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .map(|c| (c, sq_dist(points.row(i), centers.row(c))))
                .fold((0, f64::INFINITY), |m, (c, d)| if d < m.1 { (c, d) } else { m })
                .0;
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &points.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                centers.row_mut(c).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kmeans_separates_distant_clusters() {
        let pts = ndarray::array![[0.0, 0.1], [0.1, 0.0], [10.0, 10.0], [10.1, 9.9], [0.05, 0.05]];
        let labels = kmeans(&pts, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[0], labels[4]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn spectral_start_splits_two_cliques() {
        let n = 12;
        let edges = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && (i < 6) == (j < 6));
        let net = Network::from_edges(n, edges);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = spectral_embedding(&net, 2, &mut rng);
        let labels = kmeans(&emb, 2, &mut rng);
        for i in 0..n {
            assert_eq!(labels[i] == labels[0], i < 6);
        }
    }
}
