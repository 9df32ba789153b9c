//! On-disk embedding cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "AKEC"
//! version    u16
//! dim        u32
//! rows       u64
//! model      u16 length + UTF-8 bytes
//! manifest   rows x (u16 length + UTF-8 id bytes)
//! data       rows x dim f32, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"AKEC";
pub const CACHE_VERSION: u16 = 1;

/// Writes the matrix atomically: a temporary file in the target directory is
/// renamed over `path` once fully flushed.
pub fn write_cache(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let bad = |message: String| Error::Cache {
        path: path.to_path_buf(),
        message,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Error::io(format!("write cache {}", path.display()), e);

    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
        let dim = u32::try_from(matrix.dim()).map_err(|_| bad("dimension exceeds u32".into()))?;
        w.write_all(&dim.to_le_bytes()).map_err(io)?;
        w.write_all(&(matrix.len() as u64).to_le_bytes()).map_err(io)?;
        write_str(&mut w, matrix.model()).map_err(|e| bad(e))?;
        for id in matrix.ids() {
            write_str(&mut w, id).map_err(|e| bad(e))?;
        }
        for x in matrix.as_slice() {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> std::result::Result<(), String> {
    let len = u16::try_from(s.len()).map_err(|_| format!("string longer than 65535 bytes: {s:.32}..."))?;
    w.write_all(&len.to_le_bytes()).map_err(|e| e.to_string())?;
    w.write_all(s.as_bytes()).map_err(|e| e.to_string())
}

pub fn read_cache(path: &Path) -> Result<EmbeddingMatrix> {
    let bad = |message: String| Error::Cache {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(format!("open cache {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let eof = |what: &str, e: std::io::Error| bad(format!("truncated while reading {what}: {e}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| eof("magic", e))?;
    if &magic != CACHE_MAGIC {
        return Err(bad(format!("bad magic {magic:02x?}, not an embedding cache")));
    }
    let version = u16::from_le_bytes(read_array(&mut r).map_err(|e| eof("version", e))?);
    if version != CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(read_array(&mut r).map_err(|e| eof("dim", e))?) as usize;
    let rows = u64::from_le_bytes(read_array(&mut r).map_err(|e| eof("row count", e))?);
    let rows = usize::try_from(rows).map_err(|_| bad("row count overflows usize".into()))?;
    let model = read_str(&mut r).map_err(|e| bad(format!("model name: {e}")))?;
    let mut ids = Vec::with_capacity(rows.min(1 << 20));
    for i in 0..rows {
        ids.push(read_str(&mut r).map_err(|e| bad(format!("manifest entry {i}: {e}")))?);
    }
    let n = rows
        .checked_mul(dim)
        .ok_or_else(|| bad("rows x dim overflows".into()))?;
    let mut bytes = vec![0u8; n.checked_mul(4).ok_or_else(|| bad("data size overflows".into()))?];
    r.read_exact(&mut bytes).map_err(|e| eof("row data", e))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| eof("trailer", e))? != 0 {
        return Err(bad("trailing bytes after row data".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingMatrix::new(model, dim, ids, data).map_err(|e| match e {
        Error::Invalid(m) => bad(m),
        other => other,
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str(r: &mut impl Read) -> std::result::Result<String, String> {
    let len = u16::from_le_bytes(read_array(r).map_err(|e| e.to_string())?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}
