//! `BNCK` container: config text, graph text, parameters, optimizer state
//! and run scalars, little-endian, closed by a CRC32 of everything before it.

use std::path::Path;

use crate::binarize::ApproxKind;
use crate::bitcore::serial::{read_dense, write_dense, ByteReader};
use crate::error::{Error, Result};
use crate::layers::{LayerParams, ParamKind};
use crate::models::LayerGraph;
use crate::net::Network;

use super::optim::{OptimState, OptimizerKind};
use super::state::{Phase, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Canonical run configuration, kept for provenance.
    pub config: String,
    pub state: TrainState,
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_str(r: &mut ByteReader<'_>) -> Result<String> {
    let at = r.position();
    let len = r.u32_le()? as usize;
    String::from_utf8(r.bytes(len)?.to_vec()).map_err(|_| Error::format(at, "text is not UTF-8"))
}

fn write_params(out: &mut Vec<u8>, params: &[LayerParams<f32>]) -> Result<()> {
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let slots: Vec<_> = p.iter().collect();
        out.push(slots.len() as u8);
        for (kind, t) in slots {
            out.push(kind.code());
            write_dense(out, t)?;
        }
    }
    Ok(())
}

fn read_params(r: &mut ByteReader<'_>) -> Result<Vec<LayerParams<f32>>> {
    let n = r.u32_le()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let mut p = LayerParams::default();
        for _ in 0..r.u8()? {
            let at = r.position();
            let kind = ParamKind::from_code(r.u8()?).ok_or_else(|| Error::format(at, "unknown parameter kind"))?;
            *p.slot_mut(kind) = Some(read_dense(r)?);
        }
        out.push(p);
    }
    Ok(out)
}

fn approx_code(k: ApproxKind) -> u8 {
    match k {
        ApproxKind::Sigmoid => 0,
        ApproxKind::Softsign => 1,
        ApproxKind::Tanh => 2,
        ApproxKind::Hard => 3,
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.state;
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        write_str(&mut out, &self.config);
        write_str(&mut out, &s.net.graph().to_text());
        write_params(&mut out, s.net.params())?;
        out.push(match s.optim.kind {
            OptimizerKind::RmsProp => 0,
            OptimizerKind::Adam => 1,
        });
        out.extend_from_slice(&s.optim.step.to_le_bytes());
        write_params(&mut out, &s.optim.m)?;
        write_params(&mut out, &s.optim.v)?;
        out.extend_from_slice(&(s.epoch as u64).to_le_bytes());
        out.extend_from_slice(&s.step.to_le_bytes());
        out.push(s.phase.code());
        out.push(approx_code(s.approx));
        out.extend_from_slice(&s.lambda.to_le_bytes());
        out.extend_from_slice(&s.rng_seed.to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::format(bytes.len() as u64, "checkpoint truncated"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::format(body.len() as u64, "checkpoint CRC mismatch"));
        }
        let mut r = ByteReader::new(body);
        if r.bytes(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32_le()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let config = read_str(&mut r)?;
        let graph = LayerGraph::from_text(&read_str(&mut r)?)?;
        let net = Network::from_parts(graph, read_params(&mut r)?)?;
        let at = r.position();
        let kind = match r.u8()? {
            0 => OptimizerKind::RmsProp,
            1 => OptimizerKind::Adam,
            c => return Err(Error::format(at, format!("unknown optimizer code {c}"))),
        };
        let step = r.u64_le()?;
        let m = read_params(&mut r)?;
        let v = read_params(&mut r)?;
        let epoch = r.u64_le()? as usize;
        let iter = r.u64_le()?;
        let at = r.position();
        let phase = Phase::from_code(r.u8()?).ok_or_else(|| Error::format(at, "unknown phase"))?;
        let at = r.position();
        let approx = match r.u8()? {
            0 => ApproxKind::Sigmoid,
            1 => ApproxKind::Softsign,
            2 => ApproxKind::Tanh,
            3 => ApproxKind::Hard,
            c => return Err(Error::format(at, format!("unknown approximator code {c}"))),
        };
        let lambda = r.f64_le()?;
        let rng_seed = r.u64_le()?;
        if r.remaining() != 0 {
            return Err(Error::format(r.position(), "trailing bytes in checkpoint"));
        }
        let optim = OptimState { kind, step, m, v };
        Ok(Checkpoint { config, state: TrainState { net, optim, epoch, step: iter, phase, approx, lambda, rng_seed } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_pose_model, HourglassSpec};

    fn sample() -> Checkpoint {
        let net = Network::init(build_pose_model(&HourglassSpec::new(1, 8, 2, 4), 1, 2, true).unwrap(), 7);
        let mut state = TrainState::new(net, OptimizerKind::Adam, ApproxKind::Tanh, 32.0, 99);
        state.epoch = 3;
        state.step = 42;
        state.phase = Phase::BinFeatures;
        Checkpoint { config: "train.epochs = 3\n".into(), state }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { .. })));
        assert!(Checkpoint::from_bytes(&bytes[..3]).is_err());
    }
}
