use std::sync::Arc;

use super::config::EDGE_INPUT_WIDTH;
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, CliqueIndexMatrix, LevelHierarchy};
use crate::mesh::CavityMesh;
use super::config::ModelConfig;
use crate::matrix::Matrix;

/// Message-passing structure of one resolution.
#[derive(Debug, Clone)]
pub struct GraphLevel {
    pub n_nodes: usize,
    /// Directed edges grouped by receiver, senders ascending within a group.
    pub receivers: Arc<[usize]>,
    pub senders: Arc<[usize]>,
    /// Per directed edge: `(dx, dy, |d|)` of receiver minus sender, in
    /// units of the finest mesh spacing.
    pub edge_geometry: Matrix,
    /// Transition to the next coarser level, if any.
    pub pool_index: Option<Arc<CliqueIndexMatrix>>,
    pub assignment: Option<Arc<[usize]>>,
}

impl GraphLevel {
    pub fn n_edges(&self) -> usize {
        self.receivers.len()
    }
}

/// Everything the model needs from a hierarchy, precomputed once per mesh.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    levels: Vec<GraphLevel>,
}

impl ModelGraph {
    /// `positions` are the finest-level node coordinates; `spacing` scales
    /// displacements to order one.
    pub fn new(hierarchy: &LevelHierarchy, positions: &[[f64; 2]], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidConfig(format!("spacing must be positive, got {spacing}")));
        }
        let all_positions = hierarchy.level_positions(positions)?;
        let levels = hierarchy
            .levels()
            .iter()
            .zip(&all_positions)
            .map(|(level, pos)| {
                let edges = level.adjacency.directed_edges();
                let mut geometry = Matrix::zeros(edges.len(), EDGE_INPUT_WIDTH);
                for (e, &(i, j)) in edges.iter().enumerate() {
                    let dx = (pos[i][0] - pos[j][0]) / spacing;
                    let dy = (pos[i][1] - pos[j][1]) / spacing;
                    geometry.row_mut(e).copy_from_slice(&[dx, dy, dx.hypot(dy)]);
                }
                GraphLevel {
                    n_nodes: level.n_nodes(),
                    receivers: edges.iter().map(|e| e.0).collect(),
                    senders: edges.iter().map(|e| e.1).collect(),
                    edge_geometry: geometry,
                    pool_index: level.pooling.as_ref().map(|p| Arc::new(p.index.clone())),
                    assignment: level
                        .pooling
                        .as_ref()
                        .map(|p| Arc::from(p.partition.assignment().to_vec())),
                }
            })
            .collect();
        Ok(Self { levels })
    }

    /// Builds the hierarchy a model with `cfg` expects on `mesh`. Fails if
    /// the mesh is too small for the requested depth.
    pub fn for_mesh(mesh: &CavityMesh, cfg: &ModelConfig) -> Result<Self> {
        let adjacency = mesh.adjacency(cfg.neighborhood);
        let hierarchy = build_hierarchy(&adjacency, cfg.n_levels, cfg.hierarchy_seed)?;
        if hierarchy.n_levels() != cfg.n_levels {
            return Err(Error::InvalidConfig(format!(
                "{}x{} mesh supports only {} of {} levels",
                mesh.nx(),
                mesh.ny(),
                hierarchy.n_levels(),
                cfg.n_levels
            )));
        }
        Self::new(&hierarchy, mesh.cell_centers(), mesh.spacing())
    }

    pub fn levels(&self) -> &[GraphLevel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &GraphLevel {
        &self.levels[k]
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.levels[0].n_nodes
    }
}
