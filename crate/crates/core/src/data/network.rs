use std::io::{BufRead, Write};

use super::DataError;

/// Directed, irreflexive binary network with an observation mask.
///
/// Entries are stored row-major: `(i, j)` is the dyad from sender `i` to
/// receiver `j`, 0-based. Diagonal entries are never observed. Link values
/// under a false mask are kept (so held-out dyads can be scored later) but
/// fitting code only reads observed dyads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    links: Vec<bool>,
    observed: Vec<bool>,
}

impl Network {
    /// Fully observed network with no links.
    pub fn empty(n_actors: usize) -> Self {
        let mut observed = vec![true; n_actors * n_actors];
        for i in 0..n_actors {
            observed[i * n_actors + i] = false;
        }
        Network { n: n_actors, links: vec![false; n_actors * n_actors], observed }
    }

    /// Fully observed network from 0-based `(sender, receiver)` pairs.
    /// Repeated pairs are idempotent.
    ///
    /// # Panics
    /// On out-of-range ids or self-loops; use [`load_edge_list`] for
    /// untrusted input.
    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n_actors: usize, edges: I) -> Self {
        let mut net = Network::empty(n_actors);
        for (i, j) in edges {
            assert!(i < n_actors && j < n_actors, "edge ({i}, {j}) out of range");
            assert_ne!(i, j, "self-loop on actor {i}");
            net.links[i * n_actors + j] = true;
        }
        net
    }

    /// Fully observed network from a row-major boolean adjacency matrix.
    /// Diagonal entries are ignored.
    pub fn from_adjacency(n_actors: usize, adjacency: &[bool]) -> Self {
        assert_eq!(adjacency.len(), n_actors * n_actors);
        let mut net = Network::empty(n_actors);
        for i in 0..n_actors {
            for j in 0..n_actors {
                if i != j {
                    net.links[i * n_actors + j] = adjacency[i * n_actors + j];
                }
            }
        }
        net
    }

    #[inline]
    pub fn n_actors(&self) -> usize {
        self.n
    }

    /// Link value at `(i, j)`, whether or not the dyad is observed.
    #[inline]
    pub fn link(&self, i: usize, j: usize) -> bool {
        self.links[i * self.n + j]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.n + j]
    }

    pub(crate) fn set_observed(&mut self, i: usize, j: usize, observed: bool) {
        if i != j {
            self.observed[i * self.n + j] = observed;
        }
    }

    /// Observed dyads in row-major order.
    pub fn observed_dyads(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(move |(k, _)| (k / n, k % n))
    }

    /// Off-diagonal dyads in row-major order.
    pub fn all_dyads(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn n_dyads(&self) -> usize {
        self.n * self.n.saturating_sub(1)
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn n_observed_links(&self) -> usize {
        self.links.iter().zip(&self.observed).filter(|(&l, &o)| l && o).count()
    }

    /// Every off-diagonal dyad is observed.
    pub fn is_fully_observed(&self) -> bool {
        self.n_observed() == self.n_dyads()
    }

    /// Links among observed dyads, in row-major order.
    pub fn observed_links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.observed_dyads().filter(|&(i, j)| self.link(i, j))
    }

    /// Observed link density; 0 for a network with no observed dyads.
    pub fn density(&self) -> f64 {
        let m = self.n_observed();
        if m == 0 {
            0.0
        } else {
            self.n_observed_links() as f64 / m as f64
        }
    }

    /// Copy with every off-diagonal dyad observed again.
    pub fn unmasked(&self) -> Network {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out.set_observed(i, j, true);
            }
        }
        out
    }

    /// Writes observed links as a 1-based `i,j` edge list.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j) in self.observed_links() {
            writeln!(out, "{},{}", i + 1, j + 1)?;
        }
        Ok(())
    }
}

/// Parses a 1-based `i,j` edge list. Blank lines and `#` comments are
/// skipped; repeated edges are idempotent; self-loops are rejected.
pub fn load_edge_list<R: BufRead>(source: R, n_actors: usize) -> Result<Network, DataError> {
    let mut net = Network::empty(n_actors);
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected `source,target`, got `{content}`"),
            });
        }
        let mut ids = [0usize; 2];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            let id: i64 = field.parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("`{field}` is not an integer actor id"),
            })?;
            if id < 1 || id as usize > n_actors {
                return Err(DataError::IdOutOfRange { line: line_no, id, n_actors });
            }
            *slot = id as usize - 1;
        }
        if ids[0] == ids[1] {
            return Err(DataError::SelfLoop { line: line_no, id: ids[0] + 1 });
        }
        net.links[ids[0] * n_actors + ids[1]] = true;
    }
    Ok(net)
}

/// Parses a dense N×N comma-separated 0/1 adjacency matrix. The number of
/// actors is the number of rows; diagonal entries are ignored.
pub fn load_dense_csv<R: BufRead>(source: R) -> Result<Network, DataError> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = content
            .split(',')
            .map(|f| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(DataError::Parse {
                    line: line_no,
                    message: format!("adjacency entries must be 0 or 1, got `{other}`"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        if let Some(first) = rows.first() {
            if rows.last().map(Vec::len) != Some(first.len()) {
                return Err(DataError::Parse {
                    line: line_no,
                    message: "ragged adjacency row".into(),
                });
            }
        }
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(DataError::Parse {
            line: 1,
            message: format!("adjacency matrix must be square, found {n} rows"),
        });
    }
    let flat: Vec<bool> = rows.into_iter().flatten().collect();
    Ok(Network::from_adjacency(n, &flat))
}
