//! End-to-end runs: data, split, graph, training, held-out evaluation, and
//! the comparison matrices built from them.

mod config;
mod matrix;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    fit_standardizer, generate_synthetic, load_records, sort_records, DatasetError, EnvFeature, FeatureSchema,
    PreprocessStats, ProcessedNode, RawRecord, SplitSizes,
};
use crate::eval::{generalization_split, Axis, EvalError, EvalReport, PredictionPair};
use crate::model::{GraphBatch, ModelError};
use crate::stgraph::{build_graph, GraphError, GraphNode, StGraph};
use crate::trainer::{train, Checkpoint, Predictor, Query, Strategy, TrainError, TrainOutcome};

pub use config::{set_path, DataSource, RunConfig};
pub use matrix::{run_matrix, MatrixAxis, MatrixRow, matrix_csv};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Records split into initialization, training and test blocks, with features.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub records: Vec<RawRecord>,
    pub nodes: Vec<ProcessedNode>,
    pub stats: PreprocessStats,
    pub sizes: SplitSizes,
    /// Rows that failed to parse, when loading from a file.
    pub skipped_rows: usize,
}

impl Prepared {
    pub fn fit_range(&self) -> std::ops::Range<usize> {
        0..self.sizes.init + self.sizes.train
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.sizes.init + self.sizes.train..self.nodes.len()
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<(Vec<RawRecord>, usize), ExperimentError> {
    match &cfg.data {
        DataSource::Synthetic(s) => Ok((generate_synthetic(s)?, 0)),
        DataSource::Path { path, time_format } => {
            let report = load_records(path, *time_format)?;
            let skipped = report.skipped();
            Ok((report.records, skipped))
        }
    }
}

/// Time-sorted records split in order; statistics fitted on initialization and training rows.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, ExperimentError> {
    let (mut records, skipped_rows) = load_data(cfg)?;
    sort_records(&mut records);
    prepare_records(records, &cfg.split, &cfg.schema, skipped_rows)
}

pub fn prepare_records(
    records: Vec<RawRecord>,
    split: &crate::dataset::SplitFractions,
    schema: &FeatureSchema,
    skipped_rows: usize,
) -> Result<Prepared, ExperimentError> {
    let sizes = split.sizes(records.len())?;
    let stats = fit_standardizer(&records[..sizes.init + sizes.train], &records)?;
    let nodes = stats.apply_all(&records, schema);
    Ok(Prepared { records, nodes, stats, sizes, skipped_rows })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub graph_s: f64,
    pub train_s: f64,
    pub infer_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub graph: StGraph,
    pub report: EvalReport,
    pub timings: Timings,
    /// Largest `|sum - 1|` over attention segments during training and inference.
    pub attention_max_deviation: f64,
}

fn graph_for(nodes: &[ProcessedNode], n_init: usize, cfg: &RunConfig) -> Result<StGraph, ExperimentError> {
    let g: Vec<GraphNode> = nodes.iter().map(GraphNode::from).collect();
    Ok(build_graph(&g[..n_init], &g[n_init..], &cfg.model.variant.graph_config(&cfg.graph))?)
}

fn predict_held_out(
    outcome: &TrainOutcome,
    graph: &StGraph,
    context: &[ProcessedNode],
    test: &[ProcessedNode],
    strategy: Strategy,
    allow_past: bool,
) -> Result<(Vec<PredictionPair>, f64), ExperimentError> {
    let mut predictor = Predictor::new(&outcome.model, graph.clone(), context)?.allow_past(allow_past);
    let queries: Vec<Query> = test.iter().map(Query::for_node).collect();
    let y_hat = predictor.predict_sequence(&queries, strategy, Some(test))?;
    let pairs = test.iter().zip(y_hat).map(|(n, y_hat)| PredictionPair { node_id: n.node_id, y: n.y, y_hat }).collect();
    Ok((pairs, predictor.attention_max_deviation()))
}

fn training_config(cfg: &RunConfig) -> crate::trainer::TrainConfig {
    crate::trainer::TrainConfig { seed: cfg.seed, ..cfg.train.clone() }
}

/// Trains on the initialization and training blocks and predicts the test block in time order.
pub fn run(cfg: &RunConfig) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

/// Builds the training graph and trains; no held-out evaluation.
pub fn train_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<(StGraph, TrainOutcome, Timings), ExperimentError> {
    let fit = &prep.nodes[prep.fit_range()];
    let t0 = Instant::now();
    let graph = graph_for(fit, prep.sizes.init, cfg)?;
    let graph_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let train_pos: Vec<usize> = (prep.sizes.init..fit.len()).collect();
    let outcome = train(&graph, fit, &train_pos, &cfg.model, &cfg.schema, &prep.stats, &training_config(cfg))?;
    let train_s = t1.elapsed().as_secs_f64();
    Ok((graph, outcome, Timings { graph_s, train_s, infer_s: 0.0 }))
}

pub fn run_prepared(cfg: &RunConfig, prep: &Prepared) -> Result<RunResult, ExperimentError> {
    let (graph, outcome, mut timings) = train_prepared(cfg, prep)?;
    let t2 = Instant::now();
    let fit = &prep.nodes[prep.fit_range()];
    let test = &prep.nodes[prep.test_range()];
    let (pairs, dev) = predict_held_out(&outcome, &graph, fit, test, cfg.strategy, false)?;
    timings.infer_s = t2.elapsed().as_secs_f64();

    let split = serde_json::json!({"axis": "time", "init": prep.sizes.init, "train": prep.sizes.train, "test": prep.sizes.test});
    Ok(RunResult {
        attention_max_deviation: outcome.attention_max_deviation.max(dev),
        report: EvalReport::from_pairs(split, pairs)?,
        outcome,
        graph,
        timings,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    #[default]
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "test" => Ok(EvalSplit::Test),
            _ => Err(ExperimentError::Config(format!("split must be train or test, got {s:?}"))),
        }
    }
}

/// A checkpoint's training graph rebuilt from its data source.
#[derive(Clone, Debug)]
pub struct Restored {
    pub graph: StGraph,
    /// Every record of the segment, featurized with the checkpoint's statistics.
    pub nodes: Vec<ProcessedNode>,
    pub sizes: SplitSizes,
}

impl Restored {
    pub fn fit(&self) -> &[ProcessedNode] {
        &self.nodes[..self.sizes.init + self.sizes.train]
    }

    pub fn test(&self) -> &[ProcessedNode] {
        &self.nodes[self.sizes.init + self.sizes.train..]
    }
}

/// Rebuilds the training graph of `ck` from `cfg`'s data source.
pub fn restore(ck: &Checkpoint, cfg: &RunConfig) -> Result<Restored, ExperimentError> {
    let (mut records, _) = load_data(cfg)?;
    sort_records(&mut records);
    let sizes = cfg.split.sizes(records.len())?;
    let m = &ck.model;
    let nodes = m.stats.apply_all(&records, &m.schema);
    let g: Vec<GraphNode> = nodes[..sizes.init + sizes.train].iter().map(GraphNode::from).collect();
    let graph = build_graph(&g[..sizes.init], &g[sizes.init..], &m.graph)?;
    Ok(Restored { graph, nodes, sizes })
}

/// Evaluates a checkpoint on one split of `cfg`'s data.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    cfg: &RunConfig,
    strategy: Strategy,
    split: EvalSplit,
) -> Result<EvalReport, ExperimentError> {
    let r = restore(ck, cfg)?;
    let m = &ck.model;
    let sizes = r.sizes;
    let desc = serde_json::json!({"axis": "time", "init": sizes.init, "train": sizes.train, "test": sizes.test, "split": split});
    let pairs = match split {
        EvalSplit::Train => {
            let fit = r.fit();
            let batch = GraphBatch::full(&r.graph, fit, m.target_slot())?;
            let y_hat = m.predict_batch(&batch)?;
            (sizes.init..fit.len())
                .map(|p| PredictionPair { node_id: fit[p].node_id, y: fit[p].y, y_hat: y_hat[p] })
                .collect()
        }
        EvalSplit::Test => {
            let mut predictor = Predictor::new(m, r.graph.clone(), r.fit())?;
            let queries: Vec<Query> = r.test().iter().map(Query::for_node).collect();
            let y_hat = predictor.predict_sequence(&queries, strategy, Some(r.test()))?;
            r.test().iter().zip(y_hat).map(|(n, y_hat)| PredictionPair { node_id: n.node_id, y: n.y, y_hat }).collect()
        }
    };
    Ok(EvalReport::from_pairs(desc, pairs)?)
}

/// Checkpoint for a finished training run, embedding `cfg` verbatim.
pub fn checkpoint_of(cfg: &RunConfig, outcome: &TrainOutcome) -> Checkpoint {
    Checkpoint {
        model: outcome.model.clone(),
        adam: outcome.adam.clone(),
        loss_trace: outcome.loss_trace.clone(),
        run_config: cfg.to_json(),
    }
}

/// Trains on the first `k` nodes along `axis`, drops the next `s`, and predicts the rest.
/// Held-out nodes may fall between training timestamps; each sees only earlier nodes.
pub fn run_generalization(cfg: &RunConfig, axis: Axis, k: usize, s: usize) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let (mut records, _) = load_data(cfg)?;
    sort_records(&mut records);
    let all = cfg.split.sizes(records.len())?;
    let provisional: Vec<ProcessedNode> = records
        .iter()
        .enumerate()
        .map(|(i, r)| ProcessedNode {
            node_id: i as u64,
            location_id: r.location_id,
            x_full: Vec::new(),
            x_st: Vec::new(),
            y: r.detect_info,
            t_norm: 0.0,
            t_raw: r.collect_time,
            lon: r.longitude_gcj,
            lat: r.latitude_gcj,
        })
        .collect();
    let split = generalization_split(&provisional, axis, k, s)?;
    let mut train_ids = split.train.clone();
    train_ids.sort_unstable();
    let fit_records: Vec<RawRecord> = train_ids.iter().map(|&i| records[i as usize].clone()).collect();
    let stats = fit_standardizer(&fit_records, &records)?;
    let nodes = stats.apply_all(&records, &cfg.schema);
    let by_id: HashMap<u64, &ProcessedNode> = nodes.iter().map(|n| (n.node_id, n)).collect();

    // ids ascend with time, so this keeps time order
    let fit: Vec<ProcessedNode> = train_ids.iter().map(|id| by_id[id].clone()).collect();
    let n_init = ((fit.len() * all.init) / (all.init + all.train)).clamp(1, fit.len() - 1);
    let t0 = Instant::now();
    let graph = graph_for(&fit, n_init, cfg)?;
    let graph_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let train_pos: Vec<usize> = (n_init..fit.len()).collect();
    let outcome = train(&graph, &fit, &train_pos, &cfg.model, &cfg.schema, &stats, &training_config(cfg))?;
    let train_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut test_ids = split.test.clone();
    test_ids.sort_unstable();
    let test: Vec<ProcessedNode> = test_ids.iter().map(|id| by_id[id].clone()).collect();
    let (pairs, dev) = predict_held_out(&outcome, &graph, &fit, &test, Strategy::Ignore, true)?;
    let infer_s = t2.elapsed().as_secs_f64();

    let desc = serde_json::json!({"axis": axis, "k": k, "s": s});
    Ok(RunResult {
        attention_max_deviation: outcome.attention_max_deviation.max(dev),
        report: EvalReport::from_pairs(desc, pairs)?,
        outcome,
        graph,
        timings: Timings { graph_s, train_s, infer_s },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingRow {
    pub feature: EnvFeature,
    pub test_mae: f64,
    /// Test MAE with the feature removed minus the full-feature test MAE.
    pub delta_mae: f64,
}

/// Retrains once per environmental feature with that feature removed from the input.
pub fn env_masking_study(cfg: &RunConfig) -> Result<(f64, Vec<MaskingRow>), ExperimentError> {
    if !cfg.schema.masked_env.is_empty() {
        return Err(ExperimentError::Config("base config must keep every environmental feature".into()));
    }
    let base = run(cfg)?.report.metrics.mae;
    let mut rows = Vec::with_capacity(EnvFeature::ALL.len());
    for feature in EnvFeature::ALL {
        let mut c = cfg.clone();
        c.schema.masked_env = vec![feature];
        let mae = run(&c)?.report.metrics.mae;
        rows.push(MaskingRow { feature, test_mae: mae, delta_mae: mae - base });
    }
    Ok((base, rows))
}
