use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjacency::SparseAdjacency;
use crate::error::{Error, Result};

/// Largest clique the greedy growth will produce.
pub const MAX_CLIQUE: usize = 3;

/// Disjoint cover of a parent graph's nodes by small cliques.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliquePartition {
    cliques: Vec<Vec<usize>>,
    /// Parent node -> clique index.
    assignment: Vec<usize>,
    seed: u64,
}

impl CliquePartition {
    /// Builds from explicit cliques, checking that they are disjoint, cover
    /// `0..n_parent`, and have between 1 and 3 members. Member order is kept.
    pub fn from_cliques(cliques: Vec<Vec<usize>>, n_parent: usize, seed: u64) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n_parent];
        for (c, members) in cliques.iter().enumerate() {
            if members.is_empty() || members.len() > MAX_CLIQUE {
                return Err(Error::InvalidGraph(format!("clique {c} has {} members", members.len())));
            }
            for &v in members {
                if v >= n_parent {
                    return Err(Error::IndexOutOfRange { index: v, len: n_parent });
                }
                if assignment[v] != usize::MAX {
                    return Err(Error::InvalidGraph(format!("node {v} appears in two cliques")));
                }
                assignment[v] = c;
            }
        }
        if let Some(v) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidGraph(format!("node {v} is not covered")));
        }
        Ok(Self { cliques, assignment, seed })
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_cliques(&self) -> usize {
        self.cliques.len()
    }

    pub fn n_parent(&self) -> usize {
        self.assignment.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Counts of cliques of size 1, 2 and 3.
    pub fn size_histogram(&self) -> [usize; MAX_CLIQUE] {
        let mut h = [0; MAX_CLIQUE];
        for c in &self.cliques {
            h[c.len() - 1] += 1;
        }
        h
    }

    /// Relabels parent nodes by `parent_perm` and cliques by `clique_perm`.
    /// Member order inside each clique is preserved.
    pub fn relabeled(&self, parent_perm: &[usize], clique_perm: &[usize]) -> Result<Self> {
        crate::adjacency::check_permutation(parent_perm, self.n_parent())?;
        crate::adjacency::check_permutation(clique_perm, self.n_cliques())?;
        let mut cliques = vec![Vec::new(); self.n_cliques()];
        for (c, members) in self.cliques.iter().enumerate() {
            cliques[clique_perm[c]] = members.iter().map(|&v| parent_perm[v]).collect();
        }
        Self::from_cliques(cliques, self.n_parent(), self.seed)
    }
}

/// Greedy random clique partition.
///
/// Repeatedly draws a seed node uniformly from the nodes not yet assigned,
/// then scans its remaining neighbours in ascending order, admitting each
/// one that is adjacent to every current member, until the clique holds
/// three nodes. Assigned nodes are removed from the working graph.
pub fn partition_cliques(adjacency: &SparseAdjacency, seed: u64) -> CliquePartition {
    let n = adjacency.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut available: Vec<usize> = (0..n).collect();
    let mut removed = vec![false; n];
    let mut cliques = Vec::new();

    while !available.is_empty() {
        let v = available[rng.random_range(0..available.len())];
        let mut clique = vec![v];
        for &u in adjacency.neighbors(v) {
            if clique.len() == MAX_CLIQUE {
                break;
            }
            if removed[u] {
                continue;
            }
            if clique.iter().all(|&w| adjacency.has_edge(w, u)) {
                clique.push(u);
            }
        }
        for &w in &clique {
            removed[w] = true;
        }
        available.retain(|&w| !removed[w]);
        clique.sort_unstable();
        cliques.push(clique);
    }

    CliquePartition::from_cliques(cliques, n, seed).expect("greedy partition is always valid")
}

/// Adjacency between cliques: `r` and `c` are connected when any member of
/// one is adjacent to any member of the other. Multi-node cliques get their
/// diagonal flag set (their internal edges map onto themselves).
pub fn pooled_adjacency(
    adjacency: &SparseAdjacency,
    partition: &CliquePartition,
) -> Result<SparseAdjacency> {
    let n = adjacency.n_nodes();
    if partition.n_parent() != n {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {} nodes, graph has {n}",
            partition.n_parent()
        )));
    }
    let assign = partition.assignment();
    let mut edges = Vec::new();
    for u in 0..n {
        for &v in adjacency.neighbors(u) {
            if u < v {
                edges.push((assign[u], assign[v]));
            }
        }
        if adjacency.diagonal()[u] {
            edges.push((assign[u], assign[u]));
        }
    }
    SparseAdjacency::from_edges(partition.n_cliques(), &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> SparseAdjacency {
        SparseAdjacency::from_edges(n, edges).unwrap()
    }

    #[test]
    fn triangle_is_one_clique() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        for seed in 0..20 {
            let p = partition_cliques(&g, seed);
            assert_eq!(p.cliques(), &[vec![0, 1, 2]]);
        }
    }

    #[test]
    fn isolated_node_is_singleton() {
        let p = partition_cliques(&SparseAdjacency::empty(1), 3);
        assert_eq!(p.cliques(), &[vec![0]]);
    }

    #[test]
    fn k4_caps_at_three() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for seed in 0..20 {
            let mut sizes: Vec<_> = partition_cliques(&g, seed).cliques().iter().map(Vec::len).collect();
            sizes.sort_unstable();
            assert_eq!(sizes, vec![1, 3]);
        }
    }

    #[test]
    fn path_pooled_adjacency() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let p = CliquePartition::from_cliques(vec![vec![0, 1], vec![2, 3]], 4, 0).unwrap();
        let pooled = pooled_adjacency(&g, &p).unwrap();
        assert!(pooled.has_edge(0, 1));
        assert_eq!(pooled.diagonal(), &[true, true]);
    }

    #[test]
    fn disconnected_pairs_have_no_cross_edge() {
        let g = graph(4, &[(0, 1), (2, 3)]);
        let p = CliquePartition::from_cliques(vec![vec![0, 1], vec![2, 3]], 4, 0).unwrap();
        let pooled = pooled_adjacency(&g, &p).unwrap();
        assert_eq!(pooled.n_edges(), 0);
        assert_eq!(pooled.diagonal(), &[true, true]);
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(CliquePartition::from_cliques(vec![vec![0, 1]], 3, 0).is_err());
        assert!(CliquePartition::from_cliques(vec![vec![0, 1], vec![1, 2]], 3, 0).is_err());
        assert!(CliquePartition::from_cliques(vec![vec![0, 1, 2, 3]], 4, 0).is_err());
        assert!(CliquePartition::from_cliques(vec![vec![0, 5]], 2, 0).is_err());
        let g = graph(3, &[(0, 1)]);
        let p = CliquePartition::from_cliques(vec![vec![0, 1, 2]], 3, 0).unwrap();
        assert!(pooled_adjacency(&graph(2, &[(0, 1)]), &p).is_err());
        assert!(pooled_adjacency(&g, &p).is_ok());
    }

    #[test]
    fn deterministic_for_seed() {
        let g = crate::mesh::grid_adjacency(10, 10, crate::Neighborhood::Moore8);
        assert_eq!(partition_cliques(&g, 11), partition_cliques(&g, 11));
        assert_ne!(partition_cliques(&g, 11), partition_cliques(&g, 12));
    }
}
