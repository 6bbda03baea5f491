//! Standardization, time rescaling, one-hot encoding and node feature layout.
//!
//! `x_full` slot order: `[lon, lat, t_norm, env.., detect_info, detect_conf?, one_hot(5)?]`.
//! `x_st` is always the first three slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DistressType, EnvFeature, RawRecord};

pub type NodeId = u64;

/// Width of the spatial-temporal vector.
pub const ST_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub include_conf: bool,
    pub include_type: bool,
    /// Environmental features dropped from `x_full`.
    #[serde(default)]
    pub masked_env: Vec<EnvFeature>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self { include_conf: true, include_type: true, masked_env: Vec::new() }
    }
}

impl FeatureSchema {
    pub fn env_features(&self) -> Vec<EnvFeature> {
        EnvFeature::ALL.into_iter().filter(|f| !self.masked_env.contains(f)).collect()
    }

    pub fn distress_slot(&self) -> usize {
        ST_DIM + self.env_features().len()
    }

    pub fn dim(&self) -> usize {
        self.distress_slot() + 1 + usize::from(self.include_conf) + if self.include_type { 5 } else { 0 }
    }

    pub fn slot_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["longitude_gcj", "latitude_gcj", "collect_time"].map(String::from).into();
        names.extend(self.env_features().iter().map(|f| f.column().to_string()));
        names.push("detect_info".into());
        if self.include_conf {
            names.push("detect_conf".into());
        }
        if self.include_type {
            names.extend(DistressType::ALL.iter().map(|t| format!("detect_result_type_{}", t.code())));
        }
        names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStat {
    pub fn standardize(&self, x: f64) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            (x - self.mean) / self.std
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub features: BTreeMap<String, FeatureStat>,
    pub t_min: f64,
    pub t_max: f64,
}

/// Standardized numeric columns.
fn numeric_columns() -> Vec<&'static str> {
    let mut cols = vec!["longitude_gcj", "latitude_gcj"];
    cols.extend(EnvFeature::ALL.iter().map(|f| f.column()));
    cols.extend(["detect_info", "detect_conf"]);
    cols
}

fn numeric_value(r: &RawRecord, col: &str) -> f64 {
    match col {
        "longitude_gcj" => r.longitude_gcj,
        "latitude_gcj" => r.latitude_gcj,
        "detect_info" => r.detect_info,
        "detect_conf" => r.detect_conf,
        other => r.env(EnvFeature::from_column(other).expect("numeric column")),
    }
}

/// Population mean / std over `train`; time range over `segment` (or `train` when empty).
pub fn fit_standardizer(train: &[RawRecord], segment: &[RawRecord]) -> Result<PreprocessStats, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Empty);
    }
    let n = train.len() as f64;
    let mut features = BTreeMap::new();
    for col in numeric_columns() {
        let mean = train.iter().map(|r| numeric_value(r, col)).sum::<f64>() / n;
        let var = train.iter().map(|r| (numeric_value(r, col) - mean).powi(2)).sum::<f64>() / n;
        features.insert(col.to_string(), FeatureStat { mean, std: var.sqrt() });
    }
    let span = if segment.is_empty() { train } else { segment };
    let t_min = span.iter().map(|r| r.collect_time).fold(f64::INFINITY, f64::min);
    let t_max = span.iter().map(|r| r.collect_time).fold(f64::NEG_INFINITY, f64::max);
    Ok(PreprocessStats { features, t_min, t_max })
}

/// One graph node's features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedNode {
    pub node_id: NodeId,
    pub location_id: u64,
    pub x_full: Vec<f64>,
    pub x_st: Vec<f64>,
    /// Raw target in source units.
    pub y: f64,
    pub t_norm: f64,
    pub t_raw: f64,
    pub lon: f64,
    pub lat: f64,
}

impl PreprocessStats {
    pub fn stat(&self, col: &str) -> &FeatureStat {
        &self.features[col]
    }

    pub fn degenerate(&self) -> Vec<&str> {
        self.features.iter().filter(|(_, s)| s.is_degenerate()).map(|(k, _)| k.as_str()).collect()
    }

    pub fn t_span(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn rescale_time(&self, t: f64) -> f64 {
        let span = self.t_span();
        if span <= 0.0 {
            0.0
        } else {
            ((t - self.t_min) / span).clamp(0.0, 1.0)
        }
    }

    pub fn spatial_temporal(&self, lon: f64, lat: f64, t: f64) -> [f64; ST_DIM] {
        [
            self.stat("longitude_gcj").standardize(lon),
            self.stat("latitude_gcj").standardize(lat),
            self.rescale_time(t),
        ]
    }

    pub fn standardize_target(&self, y: f64) -> f64 {
        self.stat("detect_info").standardize(y)
    }

    pub fn apply(&self, node_id: NodeId, r: &RawRecord, schema: &FeatureSchema) -> ProcessedNode {
        let st = self.spatial_temporal(r.longitude_gcj, r.latitude_gcj, r.collect_time);
        let mut x = Vec::with_capacity(schema.dim());
        x.extend_from_slice(&st);
        for f in schema.env_features() {
            x.push(self.stat(f.column()).standardize(r.env(f)));
        }
        x.push(self.standardize_target(r.detect_info));
        if schema.include_conf {
            x.push(self.stat("detect_conf").standardize(r.detect_conf));
        }
        if schema.include_type {
            x.extend_from_slice(&r.distress_type.one_hot());
        }
        ProcessedNode {
            node_id,
            location_id: r.location_id,
            x_st: st.to_vec(),
            x_full: x,
            y: r.detect_info,
            t_norm: st[2],
            t_raw: r.collect_time,
            lon: r.longitude_gcj,
            lat: r.latitude_gcj,
        }
    }

    /// Assigns node ids `0..n` in input order.
    pub fn apply_all(&self, records: &[RawRecord], schema: &FeatureSchema) -> Vec<ProcessedNode> {
        records.iter().enumerate().map(|(i, r)| self.apply(i as NodeId, r, schema)).collect()
    }

    /// A node with only spatial-temporal information; every other slot is zero.
    pub fn query_node(
        &self,
        node_id: NodeId,
        location_id: u64,
        lon: f64,
        lat: f64,
        t: f64,
        schema: &FeatureSchema,
    ) -> ProcessedNode {
        let st = self.spatial_temporal(lon, lat, t);
        let mut x = vec![0.0; schema.dim()];
        x[..ST_DIM].copy_from_slice(&st);
        ProcessedNode {
            node_id,
            location_id,
            x_full: x,
            x_st: st.to_vec(),
            y: f64::NAN,
            t_norm: st[2],
            t_raw: t,
            lon,
            lat,
        }
    }
}

/// Parses a distress type code, as `apply` would need it.
pub fn encode_type(code: u8) -> Result<[f64; 5], DatasetError> {
    DistressType::from_code(code).map(DistressType::one_hot).ok_or(DatasetError::UnknownType(code))
}
