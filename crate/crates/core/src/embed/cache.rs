//! `.vecs` files: a small header followed by row-major little-endian f32.
//!
//! ```text
//! magic    8 bytes  "SCIRVECS"
//! version  u32 LE
//! dim      u32 LE
//! count    u64 LE
//! model_id u32 LE length + UTF-8 bytes
//! payload  count * dim * 4 bytes
//! ```

use std::io::Write;
use std::path::Path;

use super::{EmbedError, EmbeddingVector};

pub const CACHE_MAGIC: [u8; 8] = *b"SCIRVECS";
pub const CACHE_VERSION: u32 = 1;
pub const CACHE_EXTENSION: &str = "vecs";

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("not a vector cache (bad magic bytes)")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("cache length mismatch: expected {expected} bytes, found {actual}")]
    Length { expected: u64, actual: u64 },
    #[error("model id is not valid UTF-8")]
    ModelId,
    #[error("vectors disagree on {0}")]
    Mixed(&'static str),
    #[error("payload of {values} values is not a multiple of dim {dim}")]
    Shape { values: usize, dim: usize },
    #[error(transparent)]
    Vector(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub version: u32,
    pub dim: u32,
    pub count: u64,
    pub model_id: String,
}

impl CacheHeader {
    pub fn encoded_len(&self) -> u64 {
        8 + 4 + 4 + 8 + 4 + self.model_id.len() as u64
    }

    pub fn payload_len(&self) -> u64 {
        self.count * u64::from(self.dim) * 4
    }
}

/// Write a header and `data` (row-major, `dim` values per row).
pub fn encode_cache(
    out: &mut impl Write,
    model_id: &str,
    dim: usize,
    data: &[f32],
) -> Result<u64, CacheError> {
    if dim == 0 && !data.is_empty() || dim != 0 && data.len() % dim != 0 {
        return Err(CacheError::Shape {
            values: data.len(),
            dim,
        });
    }
    let header = CacheHeader {
        version: CACHE_VERSION,
        dim: dim as u32,
        count: if dim == 0 { 0 } else { (data.len() / dim) as u64 },
        model_id: model_id.to_string(),
    };
    out.write_all(&CACHE_MAGIC)?;
    out.write_all(&header.version.to_le_bytes())?;
    out.write_all(&header.dim.to_le_bytes())?;
    out.write_all(&header.count.to_le_bytes())?;
    out.write_all(&(model_id.len() as u32).to_le_bytes())?;
    out.write_all(model_id.as_bytes())?;
    let mut payload = Vec::with_capacity(data.len() * 4);
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    Ok(header.encoded_len() + header.payload_len())
}

/// Parse a whole cache image. Nothing is returned unless the byte length
/// matches the header exactly.
pub fn decode_cache(bytes: &[u8]) -> Result<(CacheHeader, Vec<f32>), CacheError> {
    let short = |need: u64| CacheError::Length {
        expected: need,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 8 {
        return Err(if CACHE_MAGIC.starts_with(bytes) { short(28) } else { CacheError::BadMagic });
    }
    if bytes[..8] != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    if bytes.len() < 28 {
        return Err(short(28));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != CACHE_VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let dim = u32_at(12);
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let name_len = u32_at(24) as usize;
    if bytes.len() < 28 + name_len {
        return Err(short(28 + name_len as u64));
    }
    let model_id = std::str::from_utf8(&bytes[28..28 + name_len])
        .map_err(|_| CacheError::ModelId)?
        .to_string();
    let header = CacheHeader {
        version,
        dim,
        count,
        model_id,
    };
    let expected = header
        .count
        .checked_mul(u64::from(dim))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(header.encoded_len()))
        .unwrap_or(u64::MAX);
    if expected != bytes.len() as u64 {
        return Err(CacheError::Length {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes[28 + name_len..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((header, data))
}

/// Write vectors sharing one dimension and model id. Returns bytes written.
pub fn write_vector_cache(path: &Path, vectors: &[EmbeddingVector]) -> Result<u64, CacheError> {
    let (model_id, dim) = match vectors.first() {
        Some(v) => (v.model_id(), v.dim()),
        None => ("", 0),
    };
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(CacheError::Mixed("dimension"));
    }
    if vectors.iter().any(|v| v.model_id() != model_id) {
        return Err(CacheError::Mixed("model id"));
    }
    let data: Vec<f32> = vectors.iter().flat_map(|v| v.values().iter().copied()).collect();
    let mut buf = Vec::new();
    let n = encode_cache(&mut buf, model_id, dim, &data)?;
    write_atomically(path, &buf)?;
    Ok(n)
}

pub fn read_vector_cache(path: &Path) -> Result<Vec<EmbeddingVector>, CacheError> {
    let bytes = std::fs::read(path)?;
    let (header, data) = decode_cache(&bytes)?;
    if header.dim == 0 {
        return Ok(Vec::new());
    }
    data.chunks_exact(header.dim as usize)
        .map(|row| Ok(EmbeddingVector::new(header.model_id.clone(), row.to_vec())?))
        .collect()
}

/// Readers never observe a half-written file.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
