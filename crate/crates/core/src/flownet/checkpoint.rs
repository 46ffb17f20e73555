//! Binary checkpoint container. The byte layout is described in
//! `docs/checkpoint-format.md`.

use std::path::Path;

use super::net::{NetConfig, VelocityNet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FTCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const ACTIVATION_SILU: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PretrainMeta {
    pub steps: u64,
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: VelocityNet,
    pub meta: PretrainMeta,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let cfg = ckpt.net.config();
    let dims = cfg.layer_dims();
    let params = ckpt.net.params();
    let mut out = Vec::with_capacity(64 + 4 * dims.len() + 8 * params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        ACTIVATION_SILU,
        cfg.state_dim as u32,
        cfg.time_embed as u32,
        cfg.cond_embed as u32,
        cfg.num_conditions as u32,
        dims.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    out.extend_from_slice(&ckpt.meta.steps.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.final_loss.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if r.u32()? != ACTIVATION_SILU {
        return Err(Error::CorruptCheckpoint("unknown activation".into()));
    }
    let state_dim = r.u32()? as usize;
    let time_embed = r.u32()? as usize;
    let cond_embed = r.u32()? as usize;
    let num_conditions = r.u32()? as usize;
    let n_dims = r.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible layer count {n_dims}"
        )));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(r.u32()? as usize);
    }
    let meta = PretrainMeta {
        steps: r.u64()?,
        final_loss: r.f64()?,
        seed: r.u64()?,
    };
    let count = r.u64()? as usize;
    let body = r.take(
        count
            .checked_mul(8)
            .ok_or_else(|| Error::CorruptCheckpoint("parameter count overflows".into()))?,
    )?;
    let covered = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    if crc32fast::hash(&bytes[..covered]) != stored {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let config = NetConfig {
        state_dim,
        hidden: dims[1..n_dims - 1].to_vec(),
        time_embed,
        cond_embed,
        num_conditions,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if config.layer_dims() != dims {
        return Err(Error::CorruptCheckpoint(
            "layer dims disagree with header".into(),
        ));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let net = VelocityNet::from_params(config, params)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if !net.all_finite() {
        return Err(Error::CorruptCheckpoint("non-finite parameters".into()));
    }
    Ok(Checkpoint { net, meta })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
