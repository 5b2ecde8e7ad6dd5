use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Network};

/// Partition of the off-diagonal dyads into `k` folds, numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    n_actors: usize,
    k: usize,
    seed: u64,
    // row-major, 0 on the diagonal
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Assignment from explicit fold labels, row-major over all N² dyads;
    /// diagonal labels are ignored.
    pub fn from_labels(
        n_actors: usize,
        k: usize,
        labels: Vec<usize>,
        seed: u64,
    ) -> Result<Self, DataError> {
        if labels.len() != n_actors * n_actors {
            return Err(DataError::SizeMismatch { network: n_actors, folds: labels.len() });
        }
        let mut fold_of = labels;
        for i in 0..n_actors {
            for j in 0..n_actors {
                let f = &mut fold_of[i * n_actors + j];
                if i == j {
                    *f = 0;
                } else if *f < 1 || *f > k {
                    return Err(DataError::FoldIndex { fold: *f, k });
                }
            }
        }
        Ok(FoldAssignment { n_actors, k, seed, fold_of })
    }

    pub fn n_folds(&self) -> usize {
        self.k
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold of the dyad `(i, j)`, `i ≠ j`.
    pub fn fold_of(&self, i: usize, j: usize) -> usize {
        debug_assert_ne!(i, j);
        self.fold_of[i * self.n_actors + j]
    }

    /// Dyads in `fold`, row-major.
    pub fn dyads_in(&self, fold: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_actors;
        self.fold_of
            .iter()
            .enumerate()
            .filter(move |(_, &f)| f == fold)
            .map(move |(idx, _)| (idx / n, idx % n))
    }

    /// Sizes of folds 1..=k.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            if f > 0 {
                sizes[f - 1] += 1;
            }
        }
        sizes
    }

    /// Writes `i,j,fold` rows (1-based actors) with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,fold")?;
        let n = self.n_actors;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    writeln!(out, "{},{},{}", i + 1, j + 1, self.fold_of[i * n + j])?;
                }
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv). Every
    /// off-diagonal dyad must be listed.
    pub fn read_csv<R: BufRead>(source: R, n_actors: usize, seed: u64) -> Result<Self, DataError> {
        let mut labels = vec![0usize; n_actors * n_actors];
        let mut k = 0;
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let content = line.trim();
            if content.is_empty() || (idx == 0 && content.starts_with('i')) {
                continue;
            }
            let parse_err = |message: String| DataError::Parse { line: line_no, message };
            let vals: Vec<usize> = content
                .split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if vals.len() != 3 {
                return Err(parse_err("expected `i,j,fold`".into()));
            }
            let (i, j, f) = (vals[0], vals[1], vals[2]);
            if i < 1 || j < 1 || i > n_actors || j > n_actors || i == j {
                return Err(parse_err(format!("invalid dyad ({i}, {j})")));
            }
            labels[(i - 1) * n_actors + (j - 1)] = f;
            k = k.max(f);
        }
        FoldAssignment::from_labels(n_actors, k, labels, seed)
    }
}

/// Uniformly random partition of all N(N−1) off-diagonal dyads into `k`
/// folds whose sizes differ by at most one. Deterministic for a fixed seed.
pub fn make_folds(network: &Network, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    let n = network.n_actors();
    let n_dyads = network.n_dyads();
    if k < 2 || k > n_dyads {
        return Err(DataError::FoldCount { k, max: n_dyads });
    }
    let mut dyads: Vec<usize> = network.all_dyads().map(|(i, j)| i * n + j).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dyads.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n * n];
    for (pos, idx) in dyads.into_iter().enumerate() {
        fold_of[idx] = pos % k + 1;
    }
    Ok(FoldAssignment { n_actors: n, k, seed, fold_of })
}

/// Copy of `network` with every dyad of fold `drop` unobserved. Link values
/// are retained so the held-out dyads can be scored.
pub fn mask_fold(network: &Network, folds: &FoldAssignment, drop: usize) -> Result<Network, DataError> {
    if folds.n_actors() != network.n_actors() {
        return Err(DataError::SizeMismatch { network: network.n_actors(), folds: folds.n_actors() });
    }
    if drop < 1 || drop > folds.n_folds() {
        return Err(DataError::FoldIndex { fold: drop, k: folds.n_folds() });
    }
    let mut out = network.clone();
    for (i, j) in folds.dyads_in(drop) {
        out.set_observed(i, j, false);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lazega_sized_folds_are_equal() {
        let net = Network::empty(71);
        let folds = make_folds(&net, 10, 7).unwrap();
        assert_eq!(folds.fold_sizes(), vec![497; 10]);
    }

    #[test]
    fn three_actor_folds() {
        let net = Network::empty(3);
        let folds = make_folds(&net, 3, 1).unwrap();
        assert_eq!(folds.fold_sizes(), vec![2, 2, 2]);
        let masked = mask_fold(&net, &folds, 1).unwrap();
        assert_eq!(masked.n_observed(), 4);
    }

    #[test]
    fn deterministic_for_seed() {
        let net = Network::empty(9);
        assert_eq!(make_folds(&net, 4, 99).unwrap(), make_folds(&net, 4, 99).unwrap());
        assert_ne!(make_folds(&net, 4, 99).unwrap(), make_folds(&net, 4, 100).unwrap());
    }

    #[test]
    fn fold_count_bounds() {
        let net = Network::empty(3);
        assert!(matches!(make_folds(&net, 1, 0), Err(DataError::FoldCount { .. })));
        assert!(matches!(make_folds(&net, 7, 0), Err(DataError::FoldCount { .. })));
        assert!(make_folds(&net, 6, 0).is_ok());
        let folds = make_folds(&net, 3, 0).unwrap();
        assert!(matches!(mask_fold(&net, &folds, 0), Err(DataError::FoldIndex { .. })));
        assert!(matches!(mask_fold(&net, &folds, 4), Err(DataError::FoldIndex { .. })));
    }

    #[test]
    fn dropping_the_only_populated_fold_hides_everything() {
        let net = Network::from_edges(3, [(0, 1), (2, 0)]);
        let labels = vec![1; 9];
        let folds = FoldAssignment::from_labels(3, 2, labels, 0).unwrap();
        assert_eq!(folds.fold_sizes(), vec![6, 0]);
        let masked = mask_fold(&net, &folds, 1).unwrap();
        assert_eq!(masked.n_observed(), 0);
        assert!(masked.link(0, 1), "held-out link values are retained");
        let untouched = mask_fold(&net, &folds, 2).unwrap();
        assert_eq!(untouched.n_observed(), 6);
    }

    #[test]
    fn csv_round_trip() {
        let net = Network::empty(5);
        let folds = make_folds(&net, 3, 11).unwrap();
        let mut buf = Vec::new();
        folds.write_csv(&mut buf).unwrap();
        let back = FoldAssignment::read_csv(buf.as_slice(), 5, 11).unwrap();
        assert_eq!(back, folds);
    }

    proptest::proptest! {
        #[test]
        fn folds_partition_the_mask(n in 2usize..12, k_raw in 2usize..20, seed: u64) {
            let net = Network::empty(n);
            let k = k_raw.min(net.n_dyads()).max(2);
            let folds = make_folds(&net, k, seed).unwrap();
            let sizes = folds.fold_sizes();
            proptest::prop_assert_eq!(sizes.iter().sum::<usize>(), n * (n - 1));
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            proptest::prop_assert!(hi - lo <= 1);
            let mut hidden = vec![0usize; n * n];
            for f in 1..=k {
                let masked = mask_fold(&net, &folds, f).unwrap();
                proptest::prop_assert_eq!(masked.n_observed(), n * (n - 1) - sizes[f - 1]);
                for (i, j) in net.all_dyads() {
                    if !masked.is_observed(i, j) {
                        hidden[i * n + j] += 1;
                    }
                }
            }
            for (i, j) in net.all_dyads() {
                proptest::prop_assert_eq!(hidden[i * n + j], 1);
            }
        }
    }
}
