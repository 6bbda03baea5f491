//! Binary checkpoint layout:
//!
//! ```text
//! magic  b"STGANCKP"
//! u32    format version, little-endian
//! u64    manifest length in bytes, little-endian
//! [u8]   manifest, UTF-8 JSON
//! [f64]  payload sections, little-endian, in manifest order
//! ```
//!
//! The manifest carries the configurations, preprocessing statistics, the
//! Adam step count and, per section, its name, shape, byte offset into the
//! payload and SHA-256 digest.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeatureSchema, PreprocessStats};
use crate::model::ModelConfig;
use crate::ndgrad::{AdamConfig, AdamState, Matrix, ParamSet};
use crate::stgraph::GraphConfig;

use super::{TrainError, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"STGANCKP";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub adam: AdamState,
    pub loss_trace: Vec<f64>,
    /// The run configuration that produced this checkpoint, verbatim.
    pub run_config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Section {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct AdamManifest {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model_config: ModelConfig,
    graph_config: GraphConfig,
    schema: FeatureSchema,
    stats: PreprocessStats,
    adam: AdamManifest,
    run_config: serde_json::Value,
    sections: Vec<Section>,
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, TrainError> {
    let params = &ck.model.params;
    if ck.adam.m.len() != params.len() || ck.adam.v.len() != params.len() {
        return Err(TrainError::Contract("optimizer state does not match parameters".into()));
    }
    let mut blocks: Vec<(String, usize, usize, &[f64])> = Vec::new();
    for (name, m) in params.iter() {
        blocks.push((format!("param/{name}"), m.rows(), m.cols(), m.as_slice()));
    }
    for (kind, moments) in [("adam_m", &ck.adam.m), ("adam_v", &ck.adam.v)] {
        for (name, m) in params.names().iter().zip(moments) {
            blocks.push((format!("{kind}/{name}"), m.rows(), m.cols(), m.as_slice()));
        }
    }
    blocks.push(("loss_trace".into(), ck.loss_trace.len(), 1, &ck.loss_trace));

    let mut payload = Vec::new();
    let mut sections = Vec::with_capacity(blocks.len());
    for (name, rows, cols, data) in blocks {
        let bytes = encode(data);
        sections.push(Section { name, rows, cols, offset: payload.len() as u64, sha256: digest(&bytes) });
        payload.extend(bytes);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_config: ck.model.model.clone(),
        graph_config: ck.model.graph,
        schema: ck.model.schema.clone(),
        stats: ck.model.stats.clone(),
        adam: AdamManifest { config: ck.adam.config, step: ck.adam.step },
        run_config: ck.run_config.clone(),
        sections,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| TrainError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend(json);
    out.extend(payload);
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, TrainError> {
    let fmt = |m: &str| TrainError::Format(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(fmt("missing magic header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(TrainError::Version { found: version, expected: FORMAT_VERSION });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..).ok_or_else(|| fmt("truncated"))?;
    let json = body.get(..len).ok_or_else(|| fmt("truncated manifest"))?;
    let payload = &body[len..];
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| TrainError::Integrity(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TrainError::Version { found: manifest.format_version, expected: FORMAT_VERSION });
    }

    let mut params = ParamSet::new();
    let (mut m, mut v, mut trace) = (Vec::new(), Vec::new(), None);
    for s in &manifest.sections {
        let start = s.offset as usize;
        let end = start + s.rows * s.cols * 8;
        let raw = payload.get(start..end).ok_or_else(|| TrainError::Integrity(s.name.clone()))?;
        if digest(raw) != s.sha256 {
            return Err(TrainError::Integrity(s.name.clone()));
        }
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let (kind, name) = s.name.split_once('/').unwrap_or((s.name.as_str(), ""));
        let matrix = || Matrix::from_vec(s.rows, s.cols, data.clone()).map_err(|e| TrainError::Format(e.to_string()));
        match kind {
            "param" => {
                params.insert(name, matrix()?)?;
            }
            "adam_m" => m.push(matrix()?),
            "adam_v" => v.push(matrix()?),
            "loss_trace" => trace = Some(data),
            _ => return Err(fmt(&format!("unknown section {}", s.name))),
        }
    }
    if m.len() != params.len() || v.len() != params.len() {
        return Err(fmt("optimizer sections do not match parameters"));
    }
    Ok(Checkpoint {
        model: TrainedModel {
            model: manifest.model_config,
            graph: manifest.graph_config,
            schema: manifest.schema,
            stats: manifest.stats,
            params,
        },
        adam: AdamState { config: manifest.adam.config, step: manifest.adam.step, m, v },
        loss_trace: trace.ok_or_else(|| fmt("missing loss trace"))?,
        run_config: manifest.run_config,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), TrainError> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(ck)?).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GraphBatch, Variant};
    use crate::trainer::tests::tiny_setup;
    use crate::trainer::{train, TrainConfig};

    fn trained() -> (Checkpoint, GraphBatch) {
        let (g, nodes, train_pos, schema, stats) = tiny_setup(40, 6);
        let cfg = ModelConfig { variant: Variant::Stgan, extractor_hidden: vec![8], hidden: 8, heads: 2, head_hidden: vec![8], ..Default::default() };
        let out = train(&g, &nodes, &train_pos, &cfg, &schema, &stats, &TrainConfig { epochs: 5, seed: 3, ..Default::default() })
            .unwrap();
        let batch = GraphBatch::full(&g, &nodes, schema.distress_slot()).unwrap();
        let ck = Checkpoint {
            model: out.model,
            adam: out.adam,
            loss_trace: out.loss_trace,
            run_config: serde_json::json!({"seed": 3}),
        };
        (ck, batch)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (ck, batch) = trained();
        let bytes = write_checkpoint(&ck).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
        assert_eq!(back.model.predict_batch(&batch).unwrap(), ck.model.predict_batch(&batch).unwrap());
        assert_eq!(back.adam.step, 5);
    }

    #[test]
    fn bumped_version_is_rejected() {
        let (ck, _) = trained();
        let mut bytes = write_checkpoint(&ck).unwrap();
        bytes[8] += 1;
        assert!(matches!(read_checkpoint(&bytes), Err(TrainError::Version { found: 2, expected: 1 })));
    }

    #[test]
    fn flipped_payload_byte_names_its_section() {
        let (ck, _) = trained();
        let mut bytes = write_checkpoint(&ck).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x40;
        match read_checkpoint(&bytes) {
            Err(TrainError::Integrity(s)) => assert_eq!(s, "loss_trace"),
            other => panic!("expected integrity error, got {other:?}"),
        }
        let mut bytes = write_checkpoint(&ck).unwrap();
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        bytes[20 + len] ^= 1;
        match read_checkpoint(&bytes) {
            Err(TrainError::Integrity(s)) => assert_eq!(s, "param/feat.full.0.w"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }
}
