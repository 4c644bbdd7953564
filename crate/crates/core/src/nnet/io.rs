//! Model file format (all integers little-endian):
//!
//! ```text
//! "BLPR"                      magic, 4 bytes
//! u32 version                 currently 1
//! u32 rank, rank × u32        input shape
//! u32 layer count, then per layer: u8 kind, u32 argument
//!     kind 1 conv2d(out_channels) 2 relu 3 maxpool2 4 flatten
//!          5 dense(out_features) 6 residual_block(channels) 7 softmax
//! u32 class count, then per class: u32 byte length + UTF-8 token
//! u64 parameter count, then that many f64 values, layer by layer
//! u32 CRC-32 (IEEE) of every preceding byte
//! ```

use std::path::Path;

use super::network::{LayerSpec, Network};
use super::NnetError;

pub const MAGIC: &[u8; 4] = b"BLPR";
pub const FORMAT_VERSION: u32 = 1;

fn kind_code(spec: LayerSpec) -> (u8, u32) {
    match spec {
        LayerSpec::Conv2d { out_channels } => (1, out_channels as u32),
        LayerSpec::Relu => (2, 0),
        LayerSpec::MaxPool2 => (3, 0),
        LayerSpec::Flatten => (4, 0),
        LayerSpec::Dense { out_features } => (5, out_features as u32),
        LayerSpec::ResidualBlock { channels } => (6, channels as u32),
        LayerSpec::Softmax => (7, 0),
    }
}

fn spec_from_code(kind: u8, arg: u32) -> Result<LayerSpec, NnetError> {
    let arg = arg as usize;
    Ok(match kind {
        1 => LayerSpec::Conv2d { out_channels: arg },
        2 => LayerSpec::Relu,
        3 => LayerSpec::MaxPool2,
        4 => LayerSpec::Flatten,
        5 => LayerSpec::Dense { out_features: arg },
        6 => LayerSpec::ResidualBlock { channels: arg },
        7 => LayerSpec::Softmax,
        other => return Err(NnetError::Malformed(format!("unknown layer kind {other}"))),
    })
}

pub fn model_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.input_shape().len() as u32).to_le_bytes());
    for &d in net.input_shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let specs = net.specs();
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for spec in specs {
        let (kind, arg) = kind_code(spec);
        out.push(kind);
        out.extend_from_slice(&arg.to_le_bytes());
    }
    out.extend_from_slice(&(net.classes().len() as u32).to_le_bytes());
    for c in net.classes() {
        out.extend_from_slice(&(c.len() as u32).to_le_bytes());
        out.extend_from_slice(c.as_bytes());
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for layer in net.params() {
        for t in layer {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnetError::Malformed("unexpected end of model data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnetError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NnetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Network, NnetError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(NnetError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(NnetError::ChecksumMismatch);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(NnetError::VersionMismatch(version, FORMAT_VERSION));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(NnetError::ChecksumMismatch);
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let rank = r.u32()? as usize;
    let input_shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let n_layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let arg = r.u32()?;
        specs.push(spec_from_code(kind, arg)?);
    }
    let n_classes = r.u32()? as usize;
    let mut classes = Vec::with_capacity(n_classes.min(1024));
    for _ in 0..n_classes {
        let len = r.u32()? as usize;
        let s = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NnetError::Malformed("class token is not UTF-8".into()))?;
        classes.push(s.to_string());
    }
    let mut net = Network::new(&input_shape, &specs, classes)?;
    let count = r.u64()?;
    if count != net.param_count() as u64 {
        return Err(NnetError::Malformed(format!(
            "parameter count {count} does not match architecture ({})",
            net.param_count()
        )));
    }
    for layer in net.params_mut() {
        for t in layer.iter_mut() {
            for v in t.data_mut() {
                *v = r.f64()?;
            }
        }
    }
    if r.pos != body.len() {
        return Err(NnetError::Malformed("trailing bytes after parameters".into()));
    }
    Ok(net)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<(), NnetError> {
    std::fs::write(path, model_to_bytes(net))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network, NnetError> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Architecture, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(arch: Architecture) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        Network::build(arch, (0..17).map(|i| format!("c{i}")).collect(), &mut rng)
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let original = net(Architecture::BlprResnet);
        save_model(&original, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, original);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = Tensor::from_vec(&[3, 32, 32], (0..3072).map(|_| rng.gen::<f64>()).collect());
            assert_eq!(original.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }
    }

    #[test]
    fn header_layout() {
        let bytes = model_to_bytes(&net(Architecture::BlprCnn));
        assert_eq!(&bytes[..4], b"BLPR");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        assert_eq!(&bytes[bytes.len() - 4..], &crc.to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model_to_bytes(&net(Architecture::BlprCnn));
        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(
            model_from_bytes(truncated),
            Err(NnetError::ChecksumMismatch | NnetError::BadMagic)
        ));
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(model_from_bytes(&wrong_magic), Err(NnetError::BadMagic)));
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(model_from_bytes(&flipped), Err(NnetError::ChecksumMismatch)));
        let mut future = bytes.clone();
        future[4] = 2;
        assert!(matches!(model_from_bytes(&future), Err(NnetError::VersionMismatch(2, 1))));
        assert!(matches!(model_from_bytes(b"BL"), Err(NnetError::BadMagic)));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_model("/no/such/model.bin"), Err(NnetError::Io(_))));
    }
}
