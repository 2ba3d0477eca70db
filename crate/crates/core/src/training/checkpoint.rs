//! Training-state sidecar written next to each weights checkpoint.
//!
//! ```text
//! "RTXS"            4 bytes magic
//! version           u32
//! phase             u8   (0 decom, 1 enhance, 2 finetune)
//! next iteration    u64
//! total iterations  u64
//! learning rate     f64
//! sampler seed      32 bytes
//! sampler stream    u64
//! sampler word pos  u128
//! record count      u32
//! records           momentum buffers, weights-file record layout
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Phase;
use crate::error::{Error, Result};
use crate::model::{decode_records, encode_records, save_weights, write_atomic, Reader, WeightStore};
use crate::numerics::Tensor;

pub const STATE_MAGIC: &[u8; 4] = b"RTXS";
pub const STATE_VERSION: u32 = 1;

/// Exact position of the patch sampler's generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl SamplerState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything besides the weights needed to continue a phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub phase: Phase,
    /// Next iteration to run.
    pub iteration: usize,
    pub total_iterations: usize,
    pub lr: f64,
    pub sampler: SamplerState,
    pub velocity: BTreeMap<String, Tensor<f32>>,
}

impl TrainState {
    pub fn is_finished(&self) -> bool {
        self.iteration >= self.total_iterations
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        out.push(self.phase.index());
        out.extend_from_slice(&(self.iteration as u64).to_le_bytes());
        out.extend_from_slice(&(self.total_iterations as u64).to_le_bytes());
        out.extend_from_slice(&self.lr.to_le_bytes());
        out.extend_from_slice(&self.sampler.seed);
        out.extend_from_slice(&self.sampler.stream.to_le_bytes());
        out.extend_from_slice(&self.sampler.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.velocity.len() as u32).to_le_bytes());
        encode_records(&mut out, self.velocity.iter().map(|(k, v)| (k.as_str(), v)));
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        if r.take(4)? != STATE_MAGIC {
            return Err(Error::format(path, "bad magic, expected \"RTXS\""));
        }
        let version = r.u32()?;
        if version != STATE_VERSION {
            return Err(Error::format(path, format!("unsupported state version {version}")));
        }
        let phase = Phase::from_index(r.u8()?).ok_or_else(|| r.error("unknown phase"))?;
        let iteration = r.u64()? as usize;
        let total_iterations = r.u64()? as usize;
        let lr = r.f64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = r.u128()?;
        let count = r.u32()? as usize;
        let velocity = decode_records(&mut r, count)?.into_iter().collect();
        r.finish()?;
        Ok(Self {
            phase,
            iteration,
            total_iterations,
            lr,
            sampler: SamplerState { seed, stream, word_pos },
            velocity,
        })
    }
}

/// Sidecar path for a weights checkpoint: `<weights>.state`.
pub fn state_path(weights: &Path) -> PathBuf {
    let mut p = weights.as_os_str().to_owned();
    p.push(".state");
    PathBuf::from(p)
}

pub fn save_checkpoint(weights_path: &Path, store: &WeightStore, state: &TrainState) -> Result<()> {
    save_weights(store, weights_path)?;
    write_atomic(&state_path(weights_path), &state.to_bytes())
}

pub fn load_state(weights_path: &Path) -> Result<TrainState> {
    let path = state_path(weights_path);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    TrainState::from_bytes(&bytes, &path)
}
