//! Structured cavity meshes and boundary-role labels.
//!
//! One graph node per cell. Cells are stored row-major from the bottom
//! row upward, so node `j * width + i` is column `i` of row `j`.

use crate::error::{Error, Result};

/// Structured quad mesh of a rectangular cavity of height `height` and
/// width `aspect_ratio * height`.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityMesh {
    aspect_ratio: u32,
    cells_per_height: u32,
    height: f64,
    cell_centers: Vec<[f64; 2]>,
}

impl CavityMesh {
    /// Builds the uniform mesh with spacing `height / n` in both directions.
    pub fn new(aspect_ratio: u32, cells_per_height: u32, height: f64) -> Result<Self> {
        if aspect_ratio == 0 {
            return Err(Error::InvalidMesh(format!(
                "aspect ratio must be >= 1, got {aspect_ratio}"
            )));
        }
        if cells_per_height < 4 {
            return Err(Error::InvalidMesh(format!(
                "need at least 4 cells per height, got {cells_per_height}"
            )));
        }
        if !(height.is_finite() && height > 0.0) {
            return Err(Error::InvalidMesh(format!("height must be positive, got {height}")));
        }
        let n = cells_per_height as usize;
        let width = aspect_ratio as usize * n;
        let h = height / cells_per_height as f64;
        let mut cell_centers = Vec::with_capacity(width * n);
        for j in 0..n {
            for i in 0..width {
                cell_centers.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
        Ok(Self { aspect_ratio, cells_per_height, height, cell_centers })
    }

    /// Rebuilds a mesh from stored coordinates, checking they match the
    /// uniform layout bit for bit.
    pub(crate) fn from_parts(
        aspect_ratio: u32,
        cells_per_height: u32,
        height: f64,
        cell_centers: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let expected = Self::new(aspect_ratio, cells_per_height, height)?;
        if expected.cell_centers.len() != cell_centers.len() {
            return Err(Error::InvalidMesh(format!(
                "expected {} cell centers, found {}",
                expected.cell_centers.len(),
                cell_centers.len()
            )));
        }
        Ok(Self { cell_centers, ..expected })
    }

    pub fn aspect_ratio(&self) -> u32 {
        self.aspect_ratio
    }

    pub fn cells_per_height(&self) -> u32 {
        self.cells_per_height
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn cavity_width(&self) -> f64 {
        self.aspect_ratio as f64 * self.height
    }

    /// Cell size `H / n`.
    pub fn spacing(&self) -> f64 {
        self.height / self.cells_per_height as f64
    }

    /// Number of cell columns (`AR * n`).
    pub fn nx(&self) -> usize {
        self.aspect_ratio as usize * self.cells_per_height as usize
    }

    /// Number of cell rows (`n`).
    pub fn ny(&self) -> usize {
        self.cells_per_height as usize
    }

    pub fn n_nodes(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn cell_centers(&self) -> &[[f64; 2]] {
        &self.cell_centers
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Builds the cell-neighbour graph.
    pub fn adjacency(&self, neighborhood: Neighborhood) -> crate::SparseAdjacency {
        grid_adjacency(self.nx(), self.ny(), neighborhood)
    }

    /// Labels each cell by the wall it touches; see [`grid_roles`].
    pub fn node_roles(&self) -> Vec<NodeRole> {
        grid_roles(self.nx(), self.ny())
    }
}

/// Neighbour graph of an `nx` by `ny` cell grid, nodes numbered row-major.
pub fn grid_adjacency(nx: usize, ny: usize, neighborhood: Neighborhood) -> crate::SparseAdjacency {
    let node = |i: usize, j: usize| j * nx + i;
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let a = node(i, j);
            if i + 1 < nx {
                edges.push((a, node(i + 1, j)));
            }
            if j + 1 < ny {
                edges.push((a, node(i, j + 1)));
            }
            if neighborhood == Neighborhood::Moore8 && j + 1 < ny {
                if i + 1 < nx {
                    edges.push((a, node(i + 1, j + 1)));
                }
                if i > 0 {
                    edges.push((a, node(i - 1, j + 1)));
                }
            }
        }
    }
    crate::SparseAdjacency::from_edges(nx * ny, &edges).expect("grid edges are always in range")
}

/// Rows touching the top or bottom wall are isothermal (corners included);
/// remaining cells in the first or last column are adiabatic.
pub fn grid_roles(nx: usize, ny: usize) -> Vec<NodeRole> {
    let mut roles = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let role = if j == 0 || j + 1 == ny {
                NodeRole::Isothermal
            } else if i == 0 || i + 1 == nx {
                NodeRole::Adiabatic
            } else {
                NodeRole::Interior
            };
            roles.push(role);
        }
    }
    roles
}

/// Graph connectivity stencil for a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// Face-sharing cells only. Triangle-free, so pooling degenerates to pairs.
    Face4,
    /// Face- and corner-sharing cells.
    #[default]
    Moore8,
}

impl std::str::FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "face4" => Ok(Self::Face4),
            "moore8" => Ok(Self::Moore8),
            other => Err(Error::Parse(format!("unknown neighborhood '{other}'"))),
        }
    }
}

impl std::fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Face4 => "face4",
            Self::Moore8 => "moore8",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Interior,
    Isothermal,
    Adiabatic,
}

impl NodeRole {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Self::Interior => [1.0, 0.0, 0.0],
            Self::Isothermal => [0.0, 1.0, 0.0],
            Self::Adiabatic => [0.0, 0.0, 1.0],
        }
    }

    /// Byte code used by the trajectory file format.
    pub fn code(self) -> u8 {
        match self {
            Self::Interior => 0,
            Self::Isothermal => 1,
            Self::Adiabatic => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Interior),
            1 => Some(Self::Isothermal),
            2 => Some(Self::Adiabatic),
            _ => None,
        }
    }
}

/// One recorded temperature field.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step_index: u32,
    pub time: f64,
    pub temperatures: Vec<f64>,
}
