//! Multi-stage graph neural network surrogate for buoyancy-driven flow in
//! rectangular cavities.
//!
//! The crate covers the whole pipeline: ground-truth generation with a
//! Boussinesq projection solver ([`solver`]), mesh graphs and clique-pooled
//! hierarchies ([`mesh`], [`hierarchy`]), a small reverse-mode
//! differentiation engine ([`autodiff`]), the message-passing model
//! ([`model`]), and training, rollout and evaluation ([`train`],
//! [`metrics`]).

pub mod adjacency;
pub mod autodiff;
pub mod error;
pub mod exec;
pub mod hierarchy;
pub mod matrix;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod train;
pub mod trajectory;

pub use adjacency::SparseAdjacency;
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use hierarchy::{build_hierarchy, LevelHierarchy};
pub use matrix::Matrix;
pub use mesh::{CavityMesh, Neighborhood, NodeRole, Snapshot};
pub use trajectory::{PhysicalParams, Trajectory};
