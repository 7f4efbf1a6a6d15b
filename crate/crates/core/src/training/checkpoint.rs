//! Binary checkpoint format.
//!
//! ```text
//! "SRNC" | version u32 | record count u32 | records...
//! record: name length u32 | name (utf-8) | n c h w (u32 each) | n*c*h*w f64
//! ```
//!
//! All integers and floats are little-endian. Batch-norm running statistics
//! are stored as `<layer>.running_mean` and `<layer>.running_var` records.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nnops::RunningStats;
use crate::srnet::params::affine_shape;
use crate::srnet::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"SRNC";
pub const VERSION: u32 = 1;

const MEAN_SUFFIX: &str = ".running_mean";
const VAR_SUFFIX: &str = ".running_var";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    for d in t.shape().dims() {
        put_u32(out, d)?;
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn to_bytes(params: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = params.len() + 2 * params.stats_iter().count();
    put_u32(&mut out, count)?;
    for (name, p) in params.iter() {
        put_record(&mut out, name, &p.value)?;
    }
    for (layer, stats) in params.stats_iter() {
        let s = affine_shape(stats.mean.len());
        put_record(&mut out, &format!("{layer}{MEAN_SUFFIX}"), &Tensor::new(s, stats.mean.clone())?)?;
        put_record(&mut out, &format!("{layer}{VAR_SUFFIX}"), &Tensor::new(s, stats.var.clone())?)?;
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Decode every record in file order.
pub fn read_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not an SRNC checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint(format!("record name at byte {} is not utf-8", r.pos - len)))?
            .to_string();
        let shape = Shape::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?)?;
        let raw = r.take(shape.numel() * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        records.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(records)
}

/// Overwrite every parameter and statistic of `params` from `bytes`. The
/// checkpoint must hold exactly the same names and shapes.
pub fn load_into(params: &mut ParamStore, bytes: &[u8]) -> Result<()> {
    let records = read_records(bytes)?;
    let expected = params.len() + 2 * params.stats_iter().count();
    if records.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} records, model expects {expected}",
            records.len()
        )));
    }
    for (name, t) in records {
        let mismatch = |want: Shape| Error::Checkpoint(format!("`{name}` has shape {}, model expects {want}", t.shape()));
        if let Some(layer) = name.strip_suffix(MEAN_SUFFIX).or_else(|| name.strip_suffix(VAR_SUFFIX)) {
            let stats: &mut RunningStats = params
                .stats_mut(layer)
                .ok_or_else(|| Error::Checkpoint(format!("unknown statistics `{name}`")))?;
            let want = affine_shape(stats.mean.len());
            if t.shape() != want {
                return Err(mismatch(want));
            }
            let slot = if name.ends_with(MEAN_SUFFIX) { &mut stats.mean } else { &mut stats.var };
            *slot = t.into_data();
        } else {
            let entry = params
                .get_mut(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            if t.shape() != entry.value.shape() {
                return Err(mismatch(entry.value.shape()));
            }
            entry.value = t;
        }
    }
    Ok(())
}

pub fn save(path: &Path, params: &ParamStore) -> Result<()> {
    fs::write(path, to_bytes(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, params: &mut ParamStore) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_into(params, &bytes)
}
