//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "BSCKPT01"
//! cfg_len    u32, then cfg_len bytes of `key=value` model config text
//! step       u64 optimizer step
//! count      u32 number of records
//! record     u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f32
//! ```
//!
//! Records are the parameters by name, Adam moments as `adam.m/<name>` and
//! `adam.v/<name>`, and the feature normalization as `buffer/feature_max`.

use super::{InfillError, InfillModel, ModelConfig};
use crate::nn::c;
use crate::Scalar;
use ndarray::Array2;
use std::path::Path;

const MAGIC: &[u8; 8] = b"BSCKPT01";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record<T: Scalar>(out: &mut Vec<u8>, name: &str, a: &Array2<T>) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, a.nrows());
    put_u32(out, a.ncols());
    for v in a.iter() {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], InfillError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| InfillError::Checkpoint("truncated file".into()))?;
        let out = &self.b[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, InfillError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, InfillError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl<T: Scalar> InfillModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let cfg = self.cfg.to_text();
        put_u32(&mut out, cfg.len());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.opt.step.to_le_bytes());
        put_u32(&mut out, 3 * self.params.len() + 1);
        for (name, v) in self.params.iter() {
            put_record(&mut out, name, v);
        }
        for (i, (name, _)) in self.params.iter().enumerate() {
            put_record(&mut out, &format!("adam.m/{name}"), &self.opt.m[i]);
            put_record(&mut out, &format!("adam.v/{name}"), &self.opt.v[i]);
        }
        let fm = Array2::from_shape_vec((1, self.feature_max.len()), self.feature_max.clone()).expect("1 x n");
        put_record(&mut out, "buffer/feature_max", &fm);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, InfillError> {
        let mut r = Reader { b: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(InfillError::Checkpoint("bad magic".into()));
        }
        let n = r.u32()?;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| InfillError::Checkpoint("config is not UTF-8".into()))?;
        let cfg = ModelConfig::from_text(text).map_err(InfillError::Checkpoint)?;
        let mut model = InfillModel::<T>::new(cfg)?;
        model.opt.step = r.u64()?;
        let count = r.u32()?;
        let mut seen = 0;
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| InfillError::Checkpoint("record name is not UTF-8".into()))?
                .to_string();
            let (rows, cols) = (r.u32()?, r.u32()?);
            let raw = r.take(rows * cols * 4)?;
            let vals: Vec<T> = raw
                .chunks_exact(4)
                .map(|ch| c::<T>(f32::from_le_bytes(ch.try_into().expect("4 bytes")) as f64))
                .collect();
            let arr = Array2::from_shape_vec((rows, cols), vals).expect("sized");
            let slot = if name == "buffer/feature_max" {
                model.feature_max = arr.iter().map(|v| v.to_f64().unwrap_or(1.0)).collect();
                continue;
            } else if let Some(base) = name.strip_prefix("adam.m/") {
                model.params.id(base).map(|id| &mut model.opt.m[id.0])
            } else if let Some(base) = name.strip_prefix("adam.v/") {
                model.params.id(base).map(|id| &mut model.opt.v[id.0])
            } else {
                seen += 1;
                model.params.id(&name).map(|id| model.params.get_mut(id))
            };
            let slot = slot.ok_or_else(|| InfillError::Checkpoint(format!("unknown record {name}")))?;
            if slot.dim() != arr.dim() {
                return Err(InfillError::Checkpoint(format!("shape mismatch for {name}")));
            }
            *slot = arr;
        }
        if seen != model.params.len() {
            return Err(InfillError::Checkpoint(format!(
                "expected {} parameters, found {seen}",
                model.params.len()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), InfillError> {
        crate::io::atomic_write(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, InfillError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
