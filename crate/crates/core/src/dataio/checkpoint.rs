//! Single-file model checkpoint: `"EINV"` magic, u16 version, a JSON
//! manifest (the architecture config plus the ordered tensor directory),
//! raw little-endian f4 blobs in manifest order, and a trailing CRC-32 of
//! everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::crc32::crc32;
use crate::error::{Error, Result};
use crate::netgraph::{ArchConfig, NetworkGraph};

const MAGIC: &[u8; 4] = b"EINV";
const VERSION: u16 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    arch: ArchConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Serialize net architecture and parameters. The eval behavior of the
/// loaded network is bit-identical, pruned topologies included.
pub fn save_checkpoint(net: &NetworkGraph<f32>, path: impl AsRef<Path>) -> Result<()> {
    let named = net.named_tensors();
    let manifest = Manifest {
        arch: net.to_config(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest)?;

    let blob_len: usize = named.iter().map(|(_, t)| t.len() * 4).sum();
    let mut bytes = Vec::with_capacity(4 + 2 + 4 + manifest_json.len() + blob_len + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for (_, t) in &named {
        for &v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkGraph<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 14 || &bytes[..4] != MAGIC {
        return Err(Error::CheckpointBadMagic);
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32(&bytes[..bytes.len() - 4]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let mlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + mlen + 4 {
        return Err(Error::ManifestMismatch("manifest extends past end of file".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[10..10 + mlen])?;

    let mut net = NetworkGraph::<f32>::from_config(&manifest.arch)?;
    let blob = &bytes[10 + mlen..bytes.len() - 4];
    let expected: usize = manifest.tensors.iter().map(|e| e.shape.iter().product::<usize>() * 4).sum();
    if blob.len() != expected {
        return Err(Error::ManifestMismatch(format!(
            "manifest declares {expected} blob bytes, file holds {}",
            blob.len()
        )));
    }

    let mut offset = 0usize;
    let named = net.named_tensors_mut();
    if named.len() != manifest.tensors.len() {
        return Err(Error::ManifestMismatch(format!(
            "architecture expects {} tensors, manifest lists {}",
            named.len(),
            manifest.tensors.len()
        )));
    }
    for ((name, tensor), entry) in named.into_iter().zip(&manifest.tensors) {
        if name != entry.name || tensor.shape() != entry.shape.as_slice() {
            return Err(Error::ManifestMismatch(format!(
                "tensor {name} {:?} vs manifest {} {:?}",
                tensor.shape(),
                entry.name,
                entry.shape
            )));
        }
        let n = tensor.len();
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(blob[offset..offset + n * 4].chunks_exact(4)) {
            *dst = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        offset += n * 4;
    }
    net.validate()?;
    Ok(net)
}
