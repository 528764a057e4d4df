//! Binary checkpoint format:
//!
//! ```text
//! "GENR" | u32 LE version | u64 LE header length | JSON header | f32 LE payload
//! ```
//!
//! The header carries the architecture, configuration, training seed and a
//! manifest of `(name, shape, offset)` entries. Offsets count bytes from the
//! start of the payload. Batch-norm running statistics are stored as ordinary
//! manifest entries after the trainable tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autonet::Real;
use crate::error::{Error, Result};
use crate::model::{Architecture, GenerConfig, Network};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GENR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ManifestEntry {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub config: GenerConfig,
    pub seed: u64,
    pub manifest: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payload: Vec<f32>,
}

impl Checkpoint {
    /// Snapshot of a network. 64-bit weights are rounded to `f32`.
    pub fn from_network<T: Real>(network: &Network<T>, seed: u64) -> Self {
        let mut manifest = Vec::new();
        let mut payload = Vec::new();
        for (name, tensor) in network.named_tensors() {
            manifest.push(ManifestEntry {
                name,
                shape: tensor.shape().to_vec(),
                offset: payload.len() * 4,
            });
            payload.extend(tensor.data().iter().map(|v| v.to_f64() as f32));
        }
        Checkpoint {
            header: CheckpointHeader {
                architecture: network.architecture,
                config: network.config.clone(),
                seed,
                manifest,
            },
            payload,
        }
    }

    pub fn input_length(&self) -> usize {
        self.header.config.length
    }

    /// Rebuilds the network; fails if the manifest does not match the
    /// architecture implied by the stored configuration.
    pub fn to_network<T: Real>(&self) -> Result<Network<T>> {
        let mut net = Network::<T>::uninitialized(self.header.architecture, &self.header.config)?;
        let mut tensors = net.named_tensors_mut();
        if tensors.len() != self.header.manifest.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} tensors, architecture needs {}",
                self.header.manifest.len(),
                tensors.len()
            )));
        }
        for ((name, tensor), entry) in tensors.iter_mut().zip(&self.header.manifest) {
            if *name != entry.name || tensor.shape() != entry.shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint entry {} {:?} does not match {} {:?}",
                    entry.name,
                    entry.shape,
                    name,
                    tensor.shape()
                )));
            }
            let start = entry.offset / 4;
            let values = &self.payload[start..start + entry.numel()];
            for (dst, &src) in tensor.data_mut().iter_mut().zip(values) {
                *dst = T::from_f64(src as f64);
            }
        }
        drop(tensors);
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic);
        }
        let truncated = || Error::PayloadLengthMismatch {
            expected: 16,
            found: bytes.len(),
        };
        let version = u32::from_le_bytes(bytes.get(4..8).ok_or_else(truncated)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let header_len = u64::from_le_bytes(bytes.get(8..16).ok_or_else(truncated)?.try_into().unwrap()) as usize;
        let header_end = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(truncated)?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])?;

        let mut expected = 0usize;
        for entry in &header.manifest {
            if entry.offset != expected {
                return Err(Error::ShapeMismatch(format!(
                    "manifest entry {} at offset {}, expected {}",
                    entry.name, entry.offset, expected
                )));
            }
            expected += 4 * entry.numel();
        }
        let body = &bytes[header_end..];
        if body.len() != expected {
            return Err(Error::PayloadLengthMismatch {
                expected,
                found: body.len(),
            });
        }
        let payload = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint { header, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::pipeline::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::Tensor;
    use crate::model::{build_cnn_only, build_gener, Batch};
    use crate::rng::Rng;

    fn config() -> GenerConfig {
        GenerConfig {
            conv_filters: vec![3, 4, 4],
            conv_kernels: vec![3, 3, 1],
            branch_feature_dim: 6,
            dense_units: 5,
            ..GenerConfig::default()
        }
        .with_length(10)
    }

    fn batch(n: usize) -> Batch<f32> {
        let mut rng = Rng::new(4);
        let stacked: Vec<f64> = (0..n * 20).map(|_| rng.normal()).collect();
        let product: Vec<f64> = stacked.chunks(20).flat_map(|r| (0..10).map(move |i| r[i] * r[10 + i])).collect();
        Batch {
            stacked: Tensor::from_f64(&[n, 2, 10], &stacked).unwrap(),
            product: Tensor::from_f64(&[n, 10], &product).unwrap(),
            labels: vec![0; n],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut net = build_gener::<f32>(&config(), 3).unwrap();
        // Move the running statistics away from their initial values.
        let mut rng = Rng::new(1);
        net.forward(&batch(6), crate::autonet::Mode::Train, &mut rng).unwrap();
        let ckpt = Checkpoint::from_network(&net, 3);
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let mut loaded = back.to_network::<f32>().unwrap();
        let b = batch(7);
        assert_eq!(net.predict_proba(&b).unwrap(), loaded.predict_proba(&b).unwrap());
        let expected: usize = ckpt.header.manifest.iter().map(|e| 4 * e.numel()).sum();
        assert_eq!(bytes.len() - 16 - serde_json::to_vec(&ckpt.header).unwrap().len(), expected);
    }

    #[test]
    fn layout_prefix() {
        let bytes = Checkpoint::from_network(&build_cnn_only::<f32>(&config(), 1).unwrap(), 1)
            .to_bytes()
            .unwrap();
        assert_eq!(&bytes[..4], b"GENR");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hl]).unwrap();
        assert_eq!(header["architecture"], "cnn_only");
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = Checkpoint::from_network(&build_gener::<f32>(&config(), 1).unwrap(), 1)
            .to_bytes()
            .unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::PayloadLengthMismatch { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::VersionUnsupported(2))));
        assert!(matches!(Checkpoint::from_bytes(b"GE"), Err(Error::BadMagic)));
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let mut ckpt = Checkpoint::from_network(&build_gener::<f32>(&config(), 1).unwrap(), 1);
        ckpt.header.architecture = Architecture::CnnOnly;
        assert!(ckpt.to_network::<f32>().is_err());
    }
}
