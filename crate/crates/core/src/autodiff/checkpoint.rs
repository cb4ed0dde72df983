//! Parameter checkpoints.
//!
//! ```text
//! "CMGP" | version u32 = 1
//! metadata_len u32 | metadata UTF-8 (key=value lines)
//! n_params u32
//! n_params x (name_len u32 | name | rows u32 | cols u32 | rows*cols f64)
//! CRC32 u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trajectory::{put_f64, put_u32, Reader};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CMGP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.metadata.len() as u32);
        out.extend_from_slice(self.metadata.as_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for (_, name, value) in self.params.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, value.rows() as u32);
            put_u32(&mut out, value.cols() as u32);
            for &v in value.as_slice() {
                put_f64(&mut out, v);
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array::<4>()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes.len() < 12 {
            return Err(Error::Truncated { needed: 12, found: bytes.len() });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let mut r = Reader::new(body);
        r.take(8)?;
        let meta_len = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Malformed("metadata is not UTF-8".into()))?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Malformed("parameter name is not UTF-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.add(name, Matrix::from_vec(rows, cols, data)?);
        }
        if r.position() != body.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", body.len() - r.position())));
        }
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        Ok(Self { metadata, params })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
