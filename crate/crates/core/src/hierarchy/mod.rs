//! Multi-resolution graph hierarchies built by repeated clique pooling.

mod partition;
mod pooling;

pub use partition::{partition_cliques, pooled_adjacency, CliquePartition, MAX_CLIQUE};
pub use pooling::{pool_features, unpool_features, CliqueIndexMatrix, PoolMode};

use std::fmt::Write as _;

use crate::adjacency::SparseAdjacency;
use crate::error::{Error, Result};

/// Transition from one level to the next coarser one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pooling {
    pub partition: CliquePartition,
    pub index: CliqueIndexMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub adjacency: SparseAdjacency,
    /// `None` on the coarsest level.
    pub pooling: Option<Pooling>,
}

impl Level {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }
}

/// Graphs from finest (level 0, the mesh graph) to coarsest. The adjacency
/// of level `k + 1` is the pooled adjacency of level `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelHierarchy {
    levels: Vec<Level>,
    requested: usize,
}

impl LevelHierarchy {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k]
    }

    /// Depth actually built, which may be below the requested depth.
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn requested_levels(&self) -> usize {
        self.requested
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Level::n_nodes).collect()
    }

    /// Clique-size histogram summed over all pooling transitions.
    pub fn clique_histogram(&self) -> [usize; MAX_CLIQUE] {
        let mut h = [0; MAX_CLIQUE];
        for p in self.levels.iter().filter_map(|l| l.pooling.as_ref()) {
            for (acc, v) in h.iter_mut().zip(p.partition.size_histogram()) {
                *acc += v;
            }
        }
        h
    }

    /// Node coordinates on every level; coarse nodes sit at the mean of
    /// their clique members.
    pub fn level_positions(&self, base: &[[f64; 2]]) -> Result<Vec<Vec<[f64; 2]>>> {
        if base.len() != self.levels[0].n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions for {} nodes",
                base.len(),
                self.levels[0].n_nodes()
            )));
        }
        let mut out = vec![base.to_vec()];
        for level in &self.levels {
            let Some(pooling) = &level.pooling else { break };
            let prev = out.last().unwrap();
            let next = pooling
                .partition
                .cliques()
                .iter()
                .map(|members| {
                    let k = members.len() as f64;
                    let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &v| {
                        (sx + prev[v][0], sy + prev[v][1])
                    });
                    [sx / k, sy / k]
                })
                .collect();
            out.push(next);
        }
        Ok(out)
    }

    /// Relabels nodes on every level: node `i` of level `k` becomes
    /// `perms[k][i]`. Clique member order and index-matrix row layout are
    /// carried over unchanged, so pooling sums in the same order.
    pub fn relabeled(&self, perms: &[Vec<usize>]) -> Result<Self> {
        if perms.len() != self.levels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} permutations for {} levels",
                perms.len(),
                self.levels.len()
            )));
        }
        let mut levels = Vec::with_capacity(self.levels.len());
        for (k, level) in self.levels.iter().enumerate() {
            let adjacency = level.adjacency.permuted(&perms[k])?;
            let pooling = match &level.pooling {
                Some(p) => {
                    let partition = p.partition.relabeled(&perms[k], &perms[k + 1])?;
                    let index = CliqueIndexMatrix::from_partition(&partition);
                    Some(Pooling { partition, index })
                }
                None => None,
            };
            levels.push(Level { adjacency, pooling });
        }
        Ok(Self { levels, requested: self.requested })
    }

    /// Text dump: a header per level followed by one clique per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (k, level) in self.levels.iter().enumerate() {
            let _ = write!(
                s,
                "# level {k}: {} nodes, {} edges",
                level.n_nodes(),
                level.adjacency.n_edges()
            );
            match &level.pooling {
                Some(p) => {
                    let _ = writeln!(s, ", {} cliques (seed {})", p.partition.n_cliques(), p.partition.seed());
                    for members in p.partition.cliques() {
                        let line: Vec<String> = members.iter().map(usize::to_string).collect();
                        let _ = writeln!(s, "{}", line.join(" "));
                    }
                }
                None => {
                    let _ = writeln!(s, ", coarsest");
                }
            }
        }
        s
    }
}

/// Builds up to `n_levels` resolutions. Level `k` is partitioned with seed
/// `seed + k`. Construction stops early when the next level would have
/// fewer than two nodes or would not shrink.
pub fn build_hierarchy(
    adjacency: &SparseAdjacency,
    n_levels: usize,
    seed: u64,
) -> Result<LevelHierarchy> {
    if n_levels == 0 {
        return Err(Error::InvalidConfig("n_levels must be >= 1".into()));
    }
    if !adjacency.is_connected() {
        log::warn!("building a hierarchy over a disconnected graph");
    }
    let mut levels = Vec::with_capacity(n_levels);
    let mut current = adjacency.clone();
    for k in 0..n_levels - 1 {
        let partition = partition_cliques(&current, seed.wrapping_add(k as u64));
        let n_next = partition.n_cliques();
        if n_next < 2 || n_next >= current.n_nodes() {
            log::info!("hierarchy stopped at depth {} of {n_levels}", k + 1);
            break;
        }
        let pooled = pooled_adjacency(&current, &partition)?;
        let index = CliqueIndexMatrix::from_partition(&partition);
        levels.push(Level { adjacency: current, pooling: Some(Pooling { partition, index }) });
        current = pooled;
    }
    levels.push(Level { adjacency: current, pooling: None });
    Ok(LevelHierarchy { levels, requested: n_levels })
}
