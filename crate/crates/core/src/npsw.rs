//! NPSW weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NPSW" | u32 version (=1) | u32 tensor count
//! per tensor: u16 name length | UTF-8 name | u8 ndim | ndim × u32 dims | f32 data (row-major)
//! u32 CRC32 (IEEE) of every preceding byte
//! ```
//!
//! Reserved names: `vgg19.<layer>.weight|bias`, `vgg19.mean`,
//! `contentnet.<layer>.weight|bias`.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"NPSW";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NpswError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported NPSW version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated data: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("{0} unexpected bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("tensor `{name}` cannot be encoded: {reason}")]
    Unencodable { name: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl NpswError {
    /// Stable numeric code, used as a process-level diagnostic.
    pub fn code(&self) -> u8 {
        match self {
            NpswError::BadMagic(_) => 1,
            NpswError::UnsupportedVersion(_) => 2,
            NpswError::Truncated { .. } => 3,
            NpswError::ChecksumMismatch { .. } => 4,
            NpswError::InvalidName => 5,
            NpswError::DuplicateName(_) => 6,
            NpswError::TrailingBytes(_) => 7,
            NpswError::Unencodable { .. } => 8,
            NpswError::Io(_) => 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "weight dims do not match data length");
        WeightTensor { dims, data }
    }

    pub fn scalar_list(values: &[f32]) -> Self {
        WeightTensor::new(vec![values.len()], values.to_vec())
    }
}

/// Named tensors, kept in name order so encoding is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightTable {
    tensors: BTreeMap<String, WeightTensor>,
}

impl WeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: WeightTensor) -> Option<WeightTensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Tensors whose name starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a WeightTensor)> + 'a {
        self.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    pub fn merge(&mut self, other: WeightTable) {
        self.tensors.extend(other.tensors);
    }
}

pub fn encode(table: &WeightTable) -> Result<Vec<u8>, NpswError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(table.len()).map_err(|_| NpswError::Unencodable {
        name: String::new(),
        reason: "too many tensors".into(),
    })?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in table.iter() {
        let bad = |reason: &str| NpswError::Unencodable {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let name_len = u16::try_from(name.len()).map_err(|_| bad("name longer than 65535 bytes"))?;
        let ndim = u8::try_from(t.dims.len()).map_err(|_| bad("more than 255 dims"))?;
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(bad("dims do not match data length"));
        }
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(ndim);
        for &d in &t.dims {
            let d = u32::try_from(d).map_err(|_| bad("dim exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NpswError> {
        if self.buf.len() - self.pos < n {
            return Err(NpswError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NpswError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NpswError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NpswError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<WeightTable, NpswError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(NpswError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NpswError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut table = WeightTable::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| NpswError::InvalidName)?.to_string();
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(NpswError::Truncated {
                offset: r.pos,
                needed: usize::MAX,
            })?;
        let raw = r.take(n)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if table.contains(&name) {
            return Err(NpswError::DuplicateName(name));
        }
        table.insert(name, WeightTensor { dims, data });
    }
    let payload_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(NpswError::TrailingBytes(bytes.len() - r.pos));
    }
    let computed = crc32fast::hash(&bytes[..payload_end]);
    if stored != computed {
        return Err(NpswError::ChecksumMismatch { stored, computed });
    }
    Ok(table)
}

pub fn write_weights(path: impl AsRef<Path>, table: &WeightTable) -> Result<(), NpswError> {
    let bytes = encode(table)?;
    std::fs::write(path, bytes).map_err(|e| NpswError::Io(e.to_string()))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightTable, NpswError> {
    let bytes = std::fs::read(path).map_err(|e| NpswError::Io(e.to_string()))?;
    decode(&bytes)
}
