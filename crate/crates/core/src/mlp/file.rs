//! Model file.
//!
//! ```text
//! "SPMLP1" | version u32 | layer count u32 | (outputs u32, inputs u32) per layer
//! | weights then bias per layer (f64) | config echo (u32 length + UTF-8)
//! | best_epoch u32 | best_val_loss f64 | CRC-32 of everything before it (u32)
//! ```

use std::fs;
use std::path::Path;

use super::{Dense, MlpParams};
use crate::binio::{self, Reader};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 6] = b"SPMLP1";
pub const MODEL_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    /// Resolved run configuration the model was trained under.
    pub config_echo: String,
    pub best_epoch: u32,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: MlpParams,
    pub meta: ModelMeta,
}

fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    if !model.params.is_finite() {
        return Err(Error::Precondition("refusing to save non-finite parameters".into()));
    }
    let mut out = Vec::with_capacity(64 + model.params.num_params() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    binio::put_u32(&mut out, MODEL_VERSION);
    binio::put_u32(&mut out, model.params.layers.len() as u32);
    for l in &model.params.layers {
        binio::put_u32(&mut out, l.outputs as u32);
        binio::put_u32(&mut out, l.inputs as u32);
    }
    for l in &model.params.layers {
        for &v in l.weights.iter().chain(&l.bias) {
            binio::put_f64(&mut out, v);
        }
    }
    binio::put_u32(&mut out, model.meta.config_echo.len() as u32);
    out.extend_from_slice(model.meta.config_echo.as_bytes());
    binio::put_u32(&mut out, model.meta.best_epoch);
    binio::put_f64(&mut out, model.meta.best_val_loss);
    let crc = crc32fast::hash(&out);
    binio::put_u32(&mut out, crc);
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    if bytes.len() < MODEL_MAGIC.len() + 4 + 4 {
        return Err(Error::Format("model file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    binio::check_crc(body, u32::from_le_bytes(tail.try_into().unwrap()))?;

    let mut r = Reader::new(body);
    r.take(MODEL_MAGIC.len())?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let n_layers = r.u32()? as usize;
    if n_layers == 0 {
        return Err(Error::Format("model has no layers".into()));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let outputs = r.u32()? as usize;
        let inputs = r.u32()? as usize;
        if let Some(&(prev_out, _)) = shapes.last() {
            if prev_out != inputs {
                return Err(Error::Format(format!("layer {i} takes {inputs} inputs but layer {} has {prev_out} outputs", i - 1)));
            }
        }
        shapes.push((outputs, inputs));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (outputs, inputs) in shapes {
        let mut d = Dense::zeros(outputs, inputs);
        for v in d.weights.iter_mut().chain(d.bias.iter_mut()) {
            *v = r.f64()?;
        }
        layers.push(d);
    }
    let echo_len = r.u32()? as usize;
    let config_echo = std::str::from_utf8(r.take(echo_len)?)
        .map_err(|_| Error::Format("config echo is not UTF-8".into()))?
        .to_string();
    let best_epoch = r.u32()?;
    let best_val_loss = r.f64()?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    let params = MlpParams { layers };
    if !params.is_finite() {
        return Err(Error::Format("model holds non-finite parameters".into()));
    }
    Ok(TrainedModel { params, meta: ModelMeta { config_echo, best_epoch, best_val_loss } })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    decode(&fs::read(path)?)
}
