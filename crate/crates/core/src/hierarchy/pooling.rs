//! Fixed-width pooling and unpooling of node features.
//!
//! Every clique is stored as a row of exactly three node indices; shorter
//! cliques repeat their last member. Pooling averages the three gathered
//! rows, so a pair `{a, b}` pools to `(a + b + b) / 3` unless
//! [`PoolMode::TrueMean`] is selected.

use super::CliquePartition;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// Divide the padded three-row sum by 3.
    #[default]
    Padded,
    /// Average over the distinct clique members only.
    TrueMean,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "padded" => Ok(Self::Padded),
            "true_mean" | "truemean" => Ok(Self::TrueMean),
            other => Err(Error::Parse(format!("unknown pool mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for PoolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Padded => "padded",
            Self::TrueMean => "true_mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueIndexMatrix {
    rows: Vec<[usize; 3]>,
    sizes: Vec<u8>,
}

impl CliqueIndexMatrix {
    /// Each row lists the clique members in stored order, padded by
    /// repeating the last one.
    pub fn from_partition(partition: &CliquePartition) -> Self {
        let mut rows = Vec::with_capacity(partition.n_cliques());
        let mut sizes = Vec::with_capacity(partition.n_cliques());
        for members in partition.cliques() {
            let last = *members.last().expect("cliques are non-empty");
            let mut row = [last; 3];
            row[..members.len()].copy_from_slice(members);
            rows.push(row);
            sizes.push(members.len() as u8);
        }
        Self { rows, sizes }
    }

    pub fn rows(&self) -> &[[usize; 3]] {
        &self.rows
    }

    /// Distinct member count per row.
    pub fn sizes(&self) -> &[u8] {
        &self.sizes
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.rows.iter().flat_map(|r| r.iter().copied()).max()
    }
}

/// Pools an `N x C` feature matrix to `rows x C`.
///
/// The three index columns are gathered as whole slices and combined row
/// by row as `((f[r0] + f[r1]) + f[r2]) / 3`.
pub fn pool_features(
    features: &Matrix,
    index: &CliqueIndexMatrix,
    mode: PoolMode,
) -> Result<Matrix> {
    if let Some(max) = index.max_index() {
        if max >= features.rows() {
            return Err(Error::IndexOutOfRange { index: max, len: features.rows() });
        }
    }
    let c = features.cols();
    let mut out = Matrix::zeros(index.n_rows(), c);
    let src = features.as_slice();
    let dst = out.as_mut_slice();
    for (r, (row, &size)) in index.rows.iter().zip(&index.sizes).enumerate() {
        let a = &src[row[0] * c..(row[0] + 1) * c];
        let b = &src[row[1] * c..(row[1] + 1) * c];
        let d = &src[row[2] * c..(row[2] + 1) * c];
        let o = &mut dst[r * c..(r + 1) * c];
        match mode {
            PoolMode::Padded => {
                for k in 0..c {
                    o[k] = (a[k] + b[k] + d[k]) / 3.0;
                }
            }
            PoolMode::TrueMean => match size {
                1 => o.copy_from_slice(a),
                2 => {
                    for k in 0..c {
                        o[k] = (a[k] + b[k]) / 2.0;
                    }
                }
                _ => {
                    for k in 0..c {
                        o[k] = (a[k] + b[k] + d[k]) / 3.0;
                    }
                }
            },
        }
    }
    Ok(out)
}

/// Broadcasts each pooled row back to every member of its clique.
pub fn unpool_features(pooled: &Matrix, partition: &CliquePartition, n: usize) -> Result<Matrix> {
    if partition.n_parent() != n {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {} nodes, expected {n}",
            partition.n_parent()
        )));
    }
    if pooled.rows() != partition.n_cliques() {
        return Err(Error::ShapeMismatch(format!(
            "{} pooled rows for {} cliques",
            pooled.rows(),
            partition.n_cliques()
        )));
    }
    Ok(pooled.gather_rows(partition.assignment()))
}
