//! Trajectory files: a mesh, its node roles, and a sequence of
//! temperature snapshots, stored little-endian with a CRC32 trailer.
//!
//! Layout:
//!
//! ```text
//! "CMGN" | version u32 = 1
//! AR u32 | n u32 | n_nodes u32 | n_steps u32
//! H dt rho0 nu alpha beta g T0 T_hot T_cold   (f64 each)
//! n_nodes x (x f64, y f64)
//! n_nodes x role u8
//! n_steps x n_nodes x temperature f64
//! CRC32 u32 over every preceding byte
//! ```
//!
//! `dt` is the interval between stored frames; frame `k` has
//! `step_index = k` and `time = k * dt`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{CavityMesh, NodeRole, Snapshot};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"CMGN";
pub const TRAJECTORY_VERSION: u32 = 1;

/// Physical constants attached to a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Frame interval in seconds.
    pub dt: f64,
    pub rho0: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Gravity magnitude, acting downward.
    pub g: f64,
    pub t_ref: f64,
    pub t_hot: f64,
    pub t_cold: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            rho0: 1000.0,
            nu: 1e-3,
            alpha: 1e-3,
            beta: 1e-3,
            g: 9.81,
            t_ref: 300.0,
            t_hot: 301.4,
            t_cold: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mesh: CavityMesh,
    pub roles: Vec<NodeRole>,
    pub params: PhysicalParams,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    /// Wraps raw frames, numbering them and stamping times from `params.dt`.
    pub fn from_frames(
        mesh: CavityMesh,
        params: PhysicalParams,
        frames: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let roles = mesh.node_roles();
        let snapshots = frames
            .into_iter()
            .enumerate()
            .map(|(k, temperatures)| Snapshot {
                step_index: k as u32,
                time: k as f64 * params.dt,
                temperatures,
            })
            .collect();
        let t = Self { mesh, roles, params, snapshots };
        t.validate()?;
        Ok(t)
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.snapshots[k].temperatures
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.roles.len() != n {
            return Err(Error::ShapeMismatch(format!("{} roles for {n} nodes", self.roles.len())));
        }
        for s in &self.snapshots {
            if s.temperatures.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "snapshot {} has {} values for {n} nodes",
                    s.step_index,
                    s.temperatures.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(expected_len(n, self.snapshots.len()));
        out.extend_from_slice(&TRAJECTORY_MAGIC);
        put_u32(&mut out, TRAJECTORY_VERSION);
        put_u32(&mut out, self.mesh.aspect_ratio());
        put_u32(&mut out, self.mesh.cells_per_height());
        put_u32(&mut out, n as u32);
        put_u32(&mut out, self.snapshots.len() as u32);
        let p = &self.params;
        for v in [
            self.mesh.height(),
            p.dt,
            p.rho0,
            p.nu,
            p.alpha,
            p.beta,
            p.g,
            p.t_ref,
            p.t_hot,
            p.t_cold,
        ] {
            put_f64(&mut out, v);
        }
        for c in self.mesh.cell_centers() {
            put_f64(&mut out, c[0]);
            put_f64(&mut out, c[1]);
        }
        out.extend(self.roles.iter().map(|r| r.code()));
        for s in &self.snapshots {
            for &t in &s.temperatures {
                put_f64(&mut out, t);
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array::<4>()?;
        if magic != TRAJECTORY_MAGIC {
            return Err(Error::BadMagic { expected: TRAJECTORY_MAGIC, found: magic });
        }
        let version = r.u32()?;
        if version != TRAJECTORY_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let ar = r.u32()?;
        let cells = r.u32()?;
        let n = r.u32()? as usize;
        let n_steps = r.u32()? as usize;
        let needed = expected_len(n, n_steps);
        if bytes.len() < needed {
            return Err(Error::Truncated { needed, found: bytes.len() });
        }
        if bytes.len() > needed {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - needed)));
        }
        let stored = u32::from_le_bytes(bytes[needed - 4..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..needed - 4]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }

        let height = r.f64()?;
        let params = PhysicalParams {
            dt: r.f64()?,
            rho0: r.f64()?,
            nu: r.f64()?,
            alpha: r.f64()?,
            beta: r.f64()?,
            g: r.f64()?,
            t_ref: r.f64()?,
            t_hot: r.f64()?,
            t_cold: r.f64()?,
        };
        let mut centers = Vec::with_capacity(n);
        for _ in 0..n {
            centers.push([r.f64()?, r.f64()?]);
        }
        let mesh = CavityMesh::from_parts(ar, cells, height, centers)?;
        let roles = r
            .take(n)?
            .iter()
            .map(|&c| NodeRole::from_code(c).ok_or_else(|| Error::Malformed(format!("role code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut snapshots = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let temperatures = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            snapshots.push(Snapshot { step_index: k as u32, time: k as f64 * params.dt, temperatures });
        }
        Ok(Self { mesh, roles, params, snapshots })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn expected_len(n_nodes: usize, n_steps: usize) -> usize {
    4 + 4 + 4 * 4 + 10 * 8 + n_nodes * 16 + n_nodes + n_steps * n_nodes * 8 + 4
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or(
            Error::Truncated { needed: self.pos.saturating_add(len), found: self.bytes.len() },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }
}
