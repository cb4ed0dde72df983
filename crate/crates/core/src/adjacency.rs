//! Symmetric 0/1 adjacency in compressed-row form.

use crate::error::{Error, Result};

/// Undirected graph stored as a symmetric CSR pattern.
///
/// Neighbour lists never contain self-loops. Pooled graphs may still carry
/// "diagonal" entries (a clique adjacent to itself); those live in
/// [`SparseAdjacency::diagonal`] and are not used for message passing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseAdjacency {
    row_offsets: Vec<usize>,
    column_indices: Vec<usize>,
    diagonal: Vec<bool>,
}

impl SparseAdjacency {
    /// Builds from an undirected edge list. Duplicates and orientation are
    /// ignored; `(i, i)` pairs set the diagonal flag instead of a neighbour.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut diagonal = vec![false; n];
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange { index: a.max(b), len: n });
            }
            if a == b {
                diagonal[a] = true;
            } else {
                rows[a].push(b);
                rows[b].push(a);
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut column_indices = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            column_indices.extend_from_slice(&row);
            row_offsets.push(column_indices.len());
        }
        Ok(Self { row_offsets, column_indices, diagonal })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self { row_offsets: vec![0; n + 1], column_indices: Vec::new(), diagonal: vec![false; n] }
    }

    pub fn n_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Number of undirected off-diagonal edges.
    pub fn n_edges(&self) -> usize {
        self.column_indices.len() / 2
    }

    /// Sorted neighbours of `i`, excluding `i` itself.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.column_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return self.diagonal[i];
        }
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn diagonal(&self) -> &[bool] {
        &self.diagonal
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn column_indices(&self) -> &[usize] {
        &self.column_indices
    }

    /// Copy without diagonal flags.
    pub fn without_diagonal(&self) -> Self {
        Self { diagonal: vec![false; self.n_nodes()], ..self.clone() }
    }

    /// Directed edge list `(receiver, sender)`, grouped by receiver with
    /// senders ascending. Each undirected edge appears once per direction.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_nodes())
            .flat_map(|i| self.neighbors(i).iter().map(move |&j| (i, j)))
            .collect()
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        check_permutation(perm, n)?;
        let mut edges = Vec::with_capacity(self.column_indices.len() / 2 + n);
        for i in 0..n {
            for &j in self.neighbors(i) {
                if i < j {
                    edges.push((perm[i], perm[j]));
                }
            }
            if self.diagonal[i] {
                edges.push((perm[i], perm[i]));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Breadth-first check that every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Checks symmetry, sortedness, uniqueness, and absence of self-loops.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.diagonal.len() != n || self.row_offsets[0] != 0 {
            return Err(Error::InvalidGraph("inconsistent lengths".into()));
        }
        for i in 0..n {
            if self.row_offsets[i] > self.row_offsets[i + 1] {
                return Err(Error::InvalidGraph(format!("row offsets decrease at {i}")));
            }
            let row = self.neighbors(i);
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidGraph(format!("row {i} not strictly ascending")));
                }
            }
            for &j in row {
                if j >= n || j == i {
                    return Err(Error::InvalidGraph(format!("bad neighbour {j} in row {i}")));
                }
                if self.neighbors(j).binary_search(&i).is_err() {
                    return Err(Error::InvalidGraph(format!("edge ({i},{j}) not symmetric")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::ShapeMismatch(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidGraph("not a permutation".into()));
        }
    }
    Ok(())
}
