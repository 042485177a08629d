//! Binary dump of an encoded matrix, little-endian throughout:
//!
//! ```text
//! 0   8 bytes  magic "CXAUGENC"
//! 8   u32      format version (1)
//! 12  u64      rows
//! 20  u64      columns
//! 28  u8       flags: bit 0 labels present, bit 1 row ids present
//! 29  columns x (u32 length, UTF-8 name)
//!     rows x columns f64, row-major
//!     rows x u64 labels   (if flagged)
//!     rows x u64 row ids  (if flagged)
//! ```

use std::path::Path;

use crossaug_core::Tensor;

use super::{read_bytes, write_bytes};
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"CXAUGENC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCache {
    pub columns: Vec<String>,
    pub data: Tensor,
    pub labels: Option<Vec<usize>>,
    pub row_ids: Option<Vec<u64>>,
}

pub fn to_bytes(c: &EncodedCache) -> Vec<u8> {
    let (rows, cols) = (c.data.shape()[0], c.data.shape()[1]);
    let mut out = MAGIC.to_vec();
    out.extend(VERSION.to_le_bytes());
    out.extend((rows as u64).to_le_bytes());
    out.extend((cols as u64).to_le_bytes());
    out.push(u8::from(c.labels.is_some()) | (u8::from(c.row_ids.is_some()) << 1));
    for name in &c.columns {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
    }
    for v in c.data.data() {
        out.extend(v.to_le_bytes());
    }
    for &l in c.labels.iter().flatten() {
        out.extend((l as u64).to_le_bytes());
    }
    for &id in c.row_ids.iter().flatten() {
        out.extend(id.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| CliError::Format {
            path: self.path.to_path_buf(),
            offset: self.bytes.len() as u64,
            message: format!("truncated cache, needed {n} bytes at {}", self.at),
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<EncodedCache> {
    let mut cur = Cursor { path, bytes, at: 0 };
    let bad = |offset: usize, message: String| CliError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if cur.take(8)? != MAGIC {
        return Err(bad(0, "bad magic, not an encoded-dataset cache".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(bad(8, format!("unsupported cache version {version}")));
    }
    let rows = cur.u64()? as usize;
    let cols = cur.u64()? as usize;
    let flags = cur.take(1)?[0];
    let mut columns = Vec::with_capacity(cols);
    for _ in 0..cols {
        let at = cur.at;
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?).map_err(|_| bad(at, "column name is not UTF-8".into()))?;
        columns.push(name.to_string());
    }
    let n = rows.checked_mul(cols).ok_or_else(|| bad(12, "matrix size overflows".into()))?;
    let raw = cur.take(n.checked_mul(8).ok_or_else(|| bad(12, "matrix size overflows".into()))?)?;
    let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    let labels = if flags & 1 != 0 {
        Some((0..rows).map(|_| cur.u64().map(|l| l as usize)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let row_ids = if flags & 2 != 0 {
        Some((0..rows).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    if cur.at != bytes.len() {
        return Err(bad(cur.at, "trailing bytes after cache payload".into()));
    }
    Ok(EncodedCache {
        columns,
        data: Tensor::new(vec![rows, cols], data)?,
        labels,
        row_ids,
    })
}

pub fn write_cache(path: &Path, c: &EncodedCache) -> Result<()> {
    write_bytes(path, &to_bytes(c))
}

pub fn read_cache(path: &Path) -> Result<EncodedCache> {
    from_bytes(path, &read_bytes(path)?)
}
