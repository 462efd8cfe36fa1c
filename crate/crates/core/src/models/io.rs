//! Self-describing binary model files.
//!
//! Layout (little-endian): magic `CGHMODEL`, `u32` format version, `u32`
//! family tag, `u64` header length, JSON header (spec, input shape, seed,
//! standardizer, calibration, loss trace), `u64` parameter count, then the
//! parameters as `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Calibration, Family, InputShape, ModelError, ModelSpec, Standardizer, TrainedModel};

pub const MODEL_MAGIC: &[u8; 8] = b"CGHMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    shape: InputShape,
    seed: u64,
    standardizer: Standardizer,
    calibration: Calibration,
    loss_trace: Vec<f64>,
}

pub fn model_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let header = Header {
        spec: model.spec.clone(),
        shape: model.shape,
        seed: model.seed,
        standardizer: model.standardizer.clone(),
        calibration: model.calibration,
        loss_trace: model.loss_trace.clone(),
    };
    let json = serde_json::to_vec(&header).expect("model header serializes");
    let mut out = Vec::with_capacity(32 + json.len() + 8 * model.params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.family().tag().to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(ModelError::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let tag = r.u32("family tag")?;
    let family = Family::from_tag(tag).ok_or_else(|| ModelError::Format(format!("unknown family tag {tag}")))?;
    let header_len = r.u64("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| ModelError::Format(format!("header: {e}")))?;
    if header.spec.family() != family {
        return Err(ModelError::Format(format!("family tag {family} disagrees with spec {}", header.spec.family())));
    }
    let n = r.u64("parameter count")? as usize;
    let blob = r.take(n.checked_mul(8).ok_or_else(|| ModelError::Format("parameter count overflows".into()))?, "parameters")?;
    let params = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if r.pos != bytes.len() {
        return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    TrainedModel::from_parts(header.spec, header.shape, header.seed, header.standardizer, header.calibration, params, header.loss_trace)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    model_from_bytes(&std::fs::read(path)?)
}
