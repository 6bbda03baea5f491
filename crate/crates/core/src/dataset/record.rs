use std::fmt;

use serde::{Deserialize, Serialize};

/// Distress category codes as they appear in the source tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistressType {
    Crack,
    NetCrack,
    PatchCrack,
    Pothole,
    PatchPothole,
}

impl DistressType {
    /// One-hot ordering: ascending by code.
    pub const ALL: [DistressType; 5] = [
        DistressType::Crack,
        DistressType::NetCrack,
        DistressType::PatchCrack,
        DistressType::Pothole,
        DistressType::PatchPothole,
    ];

    pub fn code(self) -> u8 {
        match self {
            DistressType::Crack => 11,
            DistressType::NetCrack => 13,
            DistressType::PatchCrack => 14,
            DistressType::Pothole => 15,
            DistressType::PatchPothole => 16,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }

    pub fn one_hot_index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).expect("listed")
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.one_hot_index()] = 1.0;
        v
    }
}

impl fmt::Display for DistressType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// The eight daily weather readings, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFeature {
    MinTem,
    MaxTem,
    Humidity,
    Wind,
    Pressure,
    Visibility,
    Precipitation,
    Cloud,
}

impl EnvFeature {
    pub const ALL: [EnvFeature; 8] = [
        EnvFeature::MinTem,
        EnvFeature::MaxTem,
        EnvFeature::Humidity,
        EnvFeature::Wind,
        EnvFeature::Pressure,
        EnvFeature::Visibility,
        EnvFeature::Precipitation,
        EnvFeature::Cloud,
    ];

    pub fn column(self) -> &'static str {
        match self {
            EnvFeature::MinTem => "min_tem",
            EnvFeature::MaxTem => "max_tem",
            EnvFeature::Humidity => "humidity",
            EnvFeature::Wind => "wind",
            EnvFeature::Pressure => "pressure",
            EnvFeature::Visibility => "visibility",
            EnvFeature::Precipitation => "precipitation",
            EnvFeature::Cloud => "cloud",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.column() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One observation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub location_id: u64,
    pub longitude_gcj: f64,
    pub latitude_gcj: f64,
    /// Days since the Unix epoch.
    pub collect_time: f64,
    /// Indexed by [`EnvFeature::index`].
    pub env: [f64; 8],
    pub detect_info: f64,
    pub detect_conf: f64,
    pub distress_type: DistressType,
}

impl RawRecord {
    pub fn env(&self, f: EnvFeature) -> f64 {
        self.env[f.index()]
    }

    /// Checks the per-record invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if !self.collect_time.is_finite() {
            return Err("collect_time is not finite".into());
        }
        if !self.longitude_gcj.is_finite() || !self.latitude_gcj.is_finite() {
            return Err("coordinates are not finite".into());
        }
        if !(self.detect_info >= 0.0 && self.detect_info.is_finite()) {
            return Err(format!("detect_info {} must be a finite value >= 0", self.detect_info));
        }
        if !(0.0..=1.0).contains(&self.detect_conf) {
            return Err(format!("detect_conf {} outside [0, 1]", self.detect_conf));
        }
        if let Some(f) = EnvFeature::ALL.into_iter().find(|f| !self.env(*f).is_finite()) {
            return Err(format!("{} is not finite", f.column()));
        }
        Ok(())
    }
}
