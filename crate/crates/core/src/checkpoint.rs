//! Binary weight checkpoints (`.gnck`).
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "GNCK"
//! version  u32      1
//! count    u32      number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8), ndim u8, dims ndim x u32,
//!   data     product(dims) x f32, row-major
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Sequential;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GNCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &Sequential<f32>) -> Self {
        Self {
            tensors: model.named_tensors(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(
            &u32::try_from(self.tensors.len())
                .map_err(too_large)?
                .to_le_bytes(),
        );
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len()).map_err(too_large)?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::try_from(t.ndim()).map_err(too_large)?);
            for &d in t.shape() {
                out.extend_from_slice(&u32::try_from(d).map_err(too_large)?.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "version mismatch: file has {version}, expected {VERSION}"
            )));
        }
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let name_len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap());
            let name = std::str::from_utf8(r.take(name_len as usize, "name")?)
                .map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not UTF-8")))?
                .to_string();
            let ndim = r.take(1, "ndim")?[0] as usize;
            let dims = (0..ndim)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4, &format!("data of '{name}'"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&dims, data)
                .map_err(|e| Error::Checkpoint(format!("tensor '{name}': {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { tensors })
    }

    /// Write atomically: a temporary file in the target directory is renamed
    /// over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&bytes)
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copy the weights into a model built from the matching config.
    pub fn apply_to(&self, model: &mut Sequential<f32>) -> Result<()> {
        model.set_tensors(&self.tensors)
    }
}

fn too_large<E>(_: E) -> Error {
    Error::Checkpoint("value does not fit the checkpoint field width".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated file while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(model: &Sequential<f32>, path: &Path) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_checkpoint(path: &Path, model: &mut Sequential<f32>) -> Result<()> {
    Checkpoint::load(path)?.apply_to(model)
}
