//! Resumable training state: model parameters plus optimizer moments.
//!
//! Layout: magic, version, next epoch, then per network a nested model
//! checkpoint followed by the Adam step counter and both moment vectors as
//! little-endian f64. Because all run-time randomness is keyed by
//! (seed, epoch, sample), restoring this state reproduces the remaining
//! trajectory bit for bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{read_checkpoint_bytes, write_checkpoint_bytes, ConvNet};
use crate::scalar::Scalar;
use crate::train::adam::AdamState;

const STATE_MAGIC: &[u8; 8] = b"DTFTRST\0";
const STATE_VERSION: u32 = 1;

/// One trainable network with its optimizer state.
pub struct NetState<S> {
    pub tag: String,
    pub net: ConvNet<S>,
    pub adam: AdamState<S>,
}

/// Snapshot taken between epochs.
pub struct TrainState<S> {
    /// Epoch the resumed run starts at.
    pub next_epoch: usize,
    pub nets: Vec<NetState<S>>,
}

impl<S: Scalar> TrainState<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.next_epoch as u32).to_le_bytes());
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for entry in &self.nets {
            let ckpt = write_checkpoint_bytes(&entry.tag, &entry.net);
            out.extend_from_slice(&(ckpt.len() as u64).to_le_bytes());
            out.extend_from_slice(&ckpt);
            out.extend_from_slice(&entry.adam.step.to_le_bytes());
            for moments in [&entry.adam.m, &entry.adam.v] {
                for value in moments.iter() {
                    out.extend_from_slice(&value.as_f64().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(bad("truncated training state"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(8)? != STATE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != STATE_VERSION {
            return Err(bad(&format!("unsupported state version {version}")));
        }
        let next_epoch = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let n_nets = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let ckpt_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let ckpt = read_checkpoint_bytes::<S>(take(ckpt_len)?, path)?;
            let step = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let mut adam = AdamState::zeros_like(ckpt.net.params());
            for moments in [&mut adam.m, &mut adam.v] {
                for value in moments.iter_mut() {
                    *value = S::from_f64(f64::from_le_bytes(take(8)?.try_into().unwrap()));
                }
            }
            adam.step = step;
            nets.push(NetState {
                tag: ckpt.tag,
                net: ckpt.net,
                adam,
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(TrainState { next_epoch, nets })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }
}
