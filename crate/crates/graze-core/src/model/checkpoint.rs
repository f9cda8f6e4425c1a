//! On-disk ensemble checkpoints.
//!
//! Layout: magic "GRZM", version u16, u32-length-prefixed JSON header
//! (model config + member count), then per member its init seed (u64)
//! followed by every parameter tensor in declared order as f64
//! little-endian, and finally a CRC32 of everything before it. Values are
//! stored at full width, so save -> load is bit-exact.

use super::config::ModelConfig;
use super::params::{param_shapes, EnsembleParams, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{LstmParams, Tensor};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const GRZM_MAGIC: [u8; 4] = *b"GRZM";
pub const GRZM_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    members: usize,
}

pub fn encode_checkpoint(ensemble: &EnsembleParams) -> Result<Vec<u8>> {
    ensemble.validate()?;
    let header = serde_json::to_vec(&CheckpointHeader {
        config: ensemble.config.clone(),
        members: ensemble.members.len(),
    })?;
    let per_member: usize = 8 + 8 * ensemble.members[0].parameter_count();
    let mut buf = Vec::with_capacity(14 + header.len() + per_member * ensemble.members.len());
    buf.extend_from_slice(&GRZM_MAGIC);
    buf.extend_from_slice(&GRZM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for member in &ensemble.members {
        buf.extend_from_slice(&member.init_seed.to_le_bytes());
        for tensor in member.tensors() {
            for &v in tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EnsembleParams> {
    if bytes.len() < 14 {
        return Err(Error::Format("checkpoint shorter than its fixed header".into()));
    }
    let crc_stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let crc_computed = crc32fast::hash(&bytes[..bytes.len() - 4]);
    if crc_stored != crc_computed {
        return Err(Error::Checksum { stored: crc_stored, computed: crc_computed });
    }
    let body = &bytes[..bytes.len() - 4];
    if body[..4] != GRZM_MAGIC {
        return Err(Error::Format("bad magic (not a GRZM checkpoint)".into()));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != GRZM_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {GRZM_VERSION})"
        )));
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let mut pos = 10;
    if pos + header_len > body.len() {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[pos..pos + header_len])?;
    pos += header_len;
    header.config.validate()?;
    if header.members == 0 {
        return Err(Error::Format("checkpoint declares zero members".into()));
    }

    let shapes = param_shapes(&header.config);
    let mut members = Vec::with_capacity(header.members);
    for _ in 0..header.members {
        if pos + 8 > body.len() {
            return Err(Error::Format("truncated member seed".into()));
        }
        let init_seed = u64::from_le_bytes(body[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in &shapes {
            let count: usize = shape.iter().product();
            if pos + 8 * count > body.len() {
                return Err(Error::Format("truncated parameter tensor".into()));
            }
            let data: Vec<f64> = body[pos..pos + 8 * count]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos += 8 * count;
            tensors.push(Tensor::new(shape.clone(), data)?);
        }
        let mut it = tensors.into_iter();
        let member = ModelParams {
            conv_kernels: it.next().unwrap(),
            conv_bias: it.next().unwrap(),
            lstm_fwd: LstmParams {
                w_input: it.next().unwrap(),
                w_hidden: it.next().unwrap(),
                bias: it.next().unwrap(),
            },
            lstm_bwd: LstmParams {
                w_input: it.next().unwrap(),
                w_hidden: it.next().unwrap(),
                bias: it.next().unwrap(),
            },
            classifier_weights: it.next().unwrap(),
            classifier_bias: it.next().unwrap(),
            init_seed,
        };
        members.push(member);
    }
    if pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last member",
            body.len() - pos
        )));
    }
    let ensemble = EnsembleParams { config: header.config, members };
    ensemble.validate()?;
    Ok(ensemble)
}

pub fn save_checkpoint(ensemble: &EnsembleParams, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(ensemble)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EnsembleParams> {
    decode_checkpoint(&fs::read(path)?)
}
