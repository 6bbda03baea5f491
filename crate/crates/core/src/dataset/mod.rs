//! Record ingestion, preprocessing into node features, temporal splits and
//! the synthetic data generator.

mod csv_io;
mod preprocess;
mod record;
mod split;
mod synthetic;

pub use csv_io::{
    columns, load_records, parse_time, read_records, save_records, sort_records, write_records, LoadReport, RowError,
    TimeFormat,
};
pub use preprocess::{
    encode_type, fit_standardizer, FeatureSchema, FeatureStat, NodeId, PreprocessStats, ProcessedNode, ST_DIM,
};
pub use record::{DistressType, EnvFeature, RawRecord};
pub use split::{split_segment, SplitFractions, SplitSizes};
pub use synthetic::{generate_synthetic, generate_with_sites, pathology_report, LatentField, PathologyReport, Segment, Site, SyntheticConfig, SyntheticWorld};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error("empty dataset")]
    Empty,
    #[error("unknown distress type code {0}")]
    UnknownType(u8),
    #[error("split: {0}")]
    Split(String),
    #[error("synthetic config: {0}")]
    Config(String),
}
