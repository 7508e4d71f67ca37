//! Binary checkpoint format.
//!
//! Layout (all integers little-endian u32, payload little-endian f32):
//!
//! ```text
//! magic   8 bytes  "IDNCKPT1"
//! count   u32      number of parameter records
//! record  repeated count times, in ascending name order:
//!   name_len u32, name bytes (UTF-8),
//!   rank u32, dims rank x u32,
//!   payload prod(dims) x f32
//! ```
//!
//! Parameters are f64 in memory and truncate to f32 on disk; momentum buffers
//! are not persisted and come back zeroed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"IDNCKPT1";

/// Serialize all parameters to `path`, creating parent dirs as needed.
pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    let count = u32::try_from(params.len())
        .map_err(|_| Error::Format("too many parameters for checkpoint".into()))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in params.iter() {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
    }
    let mut file =
        fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Read a checkpoint back into a [`ParamSet`] with zeroed velocities.
pub fn load(path: &Path) -> Result<ParamSet> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cur = Cursor { bytes: &bytes, at: 0 };
    let magic = cur.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?} in {}",
            String::from_utf8_lossy(magic),
            path.display()
        )));
    }
    let count = cur.u32("count")?;
    let mut params = ParamSet::new();
    for rec in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name_bytes = cur.take(name_len, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| Error::Format(format!("record {rec}: parameter name is not UTF-8")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        let payload = cur.take(len * 4, &format!("payload of {name}"))?;
        let mut data = Vec::with_capacity(len);
        for chunk in payload.chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
        }
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    if cur.at != bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - cur.at
        )));
    }
    Ok(params)
}
