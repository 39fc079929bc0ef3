//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "SAPCKPT\0"
//! version  u32
//! hlen     u64       byte length of the JSON header
//! header   hlen bytes UTF-8 JSON: architecture, provenance, value count
//! values   value_count × f64, layer order (weight, bias | gamma, beta, mean, var)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, Model};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    /// Hex SHA-256 of the configuration that produced the model.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    provenance: Provenance,
    value_count: usize,
}

pub fn encode_checkpoint(model: &Model, provenance: &Provenance) -> Vec<u8> {
    let state = model.state();
    let value_count: usize = state.iter().map(|s| s.len()).sum();
    let header = Header {
        architecture: model.architecture(),
        provenance: provenance.clone(),
        value_count,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * value_count);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for block in state {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 {
        return Err(Error::format("checkpoint is shorter than its fixed header"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format("not a checkpoint (bad magic bytes)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let body = &bytes[20..];
    let hlen = usize::try_from(hlen)
        .ok()
        .filter(|&h| h <= body.len())
        .ok_or_else(|| Error::format("checkpoint header is truncated"))?;
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
    let values = &body[hlen..];

    let expected: usize = header
        .architecture
        .layers
        .iter()
        .map(|l| l.state_len())
        .sum();
    if header.value_count != expected {
        return Err(Error::format(format!(
            "header declares {} values, architecture needs {expected}",
            header.value_count
        )));
    }
    if values.len() != 8 * expected {
        return Err(Error::format(format!(
            "checkpoint holds {} value bytes, expected {}",
            values.len(),
            8 * expected
        )));
    }

    let mut model = Model::init(&header.architecture, 0)
        .map_err(|e| Error::format(format!("checkpoint architecture: {e}")))?;
    let mut chunks = values.chunks_exact(8);
    for block in model.state_mut() {
        for (slot, raw) in block.iter_mut().zip(&mut chunks) {
            *slot = f64::from_le_bytes(raw.try_into().expect("8 bytes"));
        }
    }
    let model = model
        .revalidated()
        .map_err(|e| Error::format(format!("checkpoint parameters: {e}")))?;
    Ok(Checkpoint {
        model,
        provenance: header.provenance,
    })
}

pub fn save_checkpoint(model: &Model, provenance: &Provenance, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, provenance)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TensorShape;
    use crate::nn::ArchitectureBuilder;

    fn model() -> Model {
        let arch = ArchitectureBuilder::new(TensorShape::new(1, 4, 4))
            .conv2d(2, 3, 1, 1)
            .batchnorm()
            .relu()
            .dense(5)
            .batchnorm()
            .relu()
            .dense(3)
            .finish(3);
        Model::init(&arch, 11).unwrap()
    }

    fn prov() -> Provenance {
        Provenance {
            seed: 11,
            config_digest: "abc".into(),
        }
    }

    #[test]
    fn bytes_round_trip() {
        let m = model();
        let bytes = encode_checkpoint(&m, &prov());
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.provenance, prov());
        assert_eq!(encode_checkpoint(&ck.model, &ck.provenance), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&model(), &prov());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad_magic),
            Err(Error::Format(_))
        ));

        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        let err = decode_checkpoint(&bad_version).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");

        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..15]),
            Err(Error::Format(_))
        ));

        let mut bad_header = bytes.clone();
        bad_header[21] = b'#';
        assert!(matches!(
            decode_checkpoint(&bad_header),
            Err(Error::Format(_))
        ));
    }
}
