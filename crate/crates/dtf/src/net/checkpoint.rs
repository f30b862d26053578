//! Self-describing binary checkpoints for network parameters.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic    8 bytes  "DTFCKPT\0"
//! version  u32
//! tag      u32 length + utf-8 architecture tag
//! layers   u32 count, then per layer:
//!          in u32, out u32, kernel u32, dilation u32, activation u8
//! values   per layer: weights then biases, f64 little-endian
//! ```

use std::path::Path;

use super::{Activation, ConvLayerSpec, ConvNet, NetworkParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DTFCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A parsed checkpoint: architecture tag plus a ready network.
pub struct Checkpoint<S> {
    pub tag: String,
    pub net: ConvNet<S>,
}

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::LeakyRelu01 => 0,
        Activation::Linear => 1,
    }
}

fn act_from_code(c: u8) -> Option<Activation> {
    match c {
        0 => Some(Activation::LeakyRelu01),
        1 => Some(Activation::Linear),
        _ => None,
    }
}

/// Serializes a network; parameter values are stored as f64 regardless of
/// the in-memory scalar type.
pub fn write_checkpoint_bytes<S: Scalar>(tag: &str, net: &ConvNet<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + net.param_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    out.extend_from_slice(tag.as_bytes());
    out.extend_from_slice(&(net.specs().len() as u32).to_le_bytes());
    for spec in net.specs() {
        out.extend_from_slice(&(spec.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(spec.out_channels as u32).to_le_bytes());
        out.extend_from_slice(&(spec.kernel as u32).to_le_bytes());
        out.extend_from_slice(&(spec.dilation as u32).to_le_bytes());
        out.push(act_code(spec.activation));
    }
    for layer in &net.params().layers {
        for v in layer.iter() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint {
                path: self.path.to_path_buf(),
                reason: "truncated file".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses checkpoint bytes. `path` is only used in error messages.
pub fn read_checkpoint_bytes<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Checkpoint<S>> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let bad = |reason: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let tag_len = cur.u32()? as usize;
    let tag = std::str::from_utf8(cur.take(tag_len)?)
        .map_err(|_| bad("tag is not utf-8"))?
        .to_string();
    let n_layers = cur.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_channels = cur.u32()? as usize;
        let out_channels = cur.u32()? as usize;
        let kernel = cur.u32()? as usize;
        let dilation = cur.u32()? as usize;
        let activation = act_from_code(cur.u8()?).ok_or_else(|| bad("unknown activation code"))?;
        specs.push(ConvLayerSpec {
            in_channels,
            out_channels,
            kernel,
            dilation,
            activation,
        });
    }
    let mut params = NetworkParams::<S>::zeros(&specs);
    for layer in params.layers.iter_mut() {
        for v in layer.iter_mut() {
            *v = S::from_f64(cur.f64()?);
        }
    }
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let net = ConvNet::from_parts(specs, params).map_err(|e| bad(&e.to_string()))?;
    Ok(Checkpoint { tag, net })
}

/// Writes a checkpoint file.
pub fn save_checkpoint<S: Scalar>(path: &Path, tag: &str, net: &ConvNet<S>) -> Result<()> {
    std::fs::write(path, write_checkpoint_bytes(tag, net)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a checkpoint file, optionally enforcing the architecture tag.
pub fn load_checkpoint<S: Scalar>(path: &Path, expected_tag: Option<&str>) -> Result<Checkpoint<S>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ckpt = read_checkpoint_bytes::<S>(&bytes, path)?;
    if let Some(expected) = expected_tag {
        if ckpt.tag != expected {
            return Err(Error::ArchitectureTag {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                found: ckpt.tag,
            });
        }
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn toy_net(seed: u64) -> ConvNet<f64> {
        ConvNet::new(
            vec![
                ConvLayerSpec {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    dilation: 2,
                    activation: Activation::LeakyRelu01,
                },
                ConvLayerSpec {
                    in_channels: 3,
                    out_channels: 1,
                    kernel: 1,
                    dilation: 1,
                    activation: Activation::Linear,
                },
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn bytes_roundtrip_bitwise() {
        let net = toy_net(5);
        let bytes = write_checkpoint_bytes("toy-v1", &net);
        let ckpt = read_checkpoint_bytes::<f64>(&bytes, &PathBuf::from("mem")).unwrap();
        assert_eq!(ckpt.tag, "toy-v1");
        assert_eq!(ckpt.net.specs(), net.specs());
        assert_eq!(ckpt.net.params(), net.params());
        // identical nets serialize identically
        assert_eq!(bytes, write_checkpoint_bytes("toy-v1", &ckpt.net));
    }

    #[test]
    fn truncated_and_corrupt_inputs_error() {
        let net = toy_net(6);
        let bytes = write_checkpoint_bytes("toy-v1", &net);
        assert!(read_checkpoint_bytes::<f64>(&bytes[..bytes.len() - 3], &PathBuf::from("mem")).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(read_checkpoint_bytes::<f64>(&corrupt, &PathBuf::from("mem")).is_err());
    }

    #[test]
    fn file_roundtrip_with_tag_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = toy_net(7);
        save_checkpoint(&path, "toy-v1", &net).unwrap();
        let ok = load_checkpoint::<f64>(&path, Some("toy-v1")).unwrap();
        assert_eq!(ok.net.params(), net.params());
        let err = load_checkpoint::<f64>(&path, Some("other-v1"));
        assert!(matches!(err, Err(Error::ArchitectureTag { .. })));
    }
}
