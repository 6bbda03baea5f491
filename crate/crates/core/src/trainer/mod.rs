//! Full-batch training, autoregressive inference and checkpoints.

mod checkpoint;
mod infer;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetError, FeatureSchema, FeatureStat, PreprocessStats, ProcessedNode};
use crate::model::{forward, init_params, Bound, GraphBatch, ModelConfig, ModelError};
use crate::ndgrad::{AdamConfig, AdamState, GradError, Matrix, ParamSet, Tape};
use crate::stgraph::{GraphConfig, GraphError, StGraph};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION};
pub use infer::{Predictor, Query, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("training diverged at epoch {epoch}: non-finite value from {op}")]
    Divergence { epoch: usize, op: &'static str },
    #[error("query at t={t} precedes latest node at t={latest}")]
    Temporal { t: f64, latest: f64 },
    #[error("unknown location {0}")]
    UnknownLocation(u64),
    #[error("{0}")]
    Contract(String),
    #[error("io: {0}")]
    Io(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint integrity check failed in section {0:?}")]
    Integrity(String),
    #[error("checkpoint format: {0}")]
    Format(String),
}

impl From<GradError> for TrainError {
    fn from(e: GradError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Print the loss every this many epochs; 0 disables.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, adam: AdamConfig::default(), seed: 0, log_every: 0 }
    }
}

/// Affine map between raw target units and the model's standardized output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetScale {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScale {
    pub fn from_stat(stat: &FeatureStat) -> Self {
        Self { mean: stat.mean, scale: if stat.std > 0.0 { stat.std } else { 1.0 } }
    }

    pub fn to_model(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn to_raw(&self, z: f64) -> f64 {
        self.mean + self.scale * z
    }
}

/// Everything needed to turn records into predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: ModelConfig,
    pub graph: GraphConfig,
    pub schema: FeatureSchema,
    pub stats: PreprocessStats,
    pub params: ParamSet,
}

impl TrainedModel {
    pub fn target_scale(&self) -> TargetScale {
        TargetScale::from_stat(self.stats.stat("detect_info"))
    }

    pub fn target_slot(&self) -> usize {
        self.schema.distress_slot()
    }

    /// Raw-unit predictions for every row of `batch`.
    pub fn predict_batch(&self, batch: &GraphBatch) -> Result<Vec<f64>, TrainError> {
        let scale = self.target_scale();
        Ok(crate::model::predict(&self.params, &self.model, batch)?.into_iter().map(|z| scale.to_raw(z)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub adam: AdamState,
    /// Raw-unit training MAE before each update.
    pub loss_trace: Vec<f64>,
    /// Raw-unit training MAE with the final parameters.
    pub final_train_mae: f64,
    /// Largest `|sum - 1|` over attention segments seen during training.
    pub attention_max_deviation: f64,
    /// Node ids the training forward pass read.
    pub touched_ids: Vec<u64>,
}

/// Largest deviation from 1 of any per-target, per-head coefficient sum.
pub fn attention_deviation(coef: &Matrix, batch: &GraphBatch) -> f64 {
    let mut worst = 0.0f64;
    for seg in batch.segments.iter() {
        for h in 0..coef.cols() {
            let s: f64 = seg.clone().map(|e| coef.get(e, h)).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

/// Trains on `graph` (initialization and training nodes) with the loss over `train_positions`.
///
/// `nodes[p]` holds the features of graph position `p`.
pub fn train(
    graph: &StGraph,
    nodes: &[ProcessedNode],
    train_positions: &[usize],
    model_cfg: &ModelConfig,
    schema: &FeatureSchema,
    stats: &PreprocessStats,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = init_params(model_cfg, schema.dim(), &mut rng)?;
    let mut model =
        TrainedModel { model: model_cfg.clone(), graph: *graph.config(), schema: schema.clone(), stats: stats.clone(), params };
    let scale = model.target_scale();
    let batch = GraphBatch::full(graph, nodes, schema.distress_slot())?;
    let rows: Arc<[usize]> = train_positions.iter().map(|&p| batch.row_of(p).expect("position in graph")).collect();
    let targets: Arc<[f64]> = train_positions.iter().map(|&p| scale.to_model(nodes[p].y)).collect();
    if rows.is_empty() {
        return Err(TrainError::Contract("no training nodes".into()));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(TrainError::Contract("training targets must be finite".into()));
    }

    let mut adam = AdamState::new(cfg.adam, &model.params);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut deviation = 0.0f64;
    let mut step = |params: &mut ParamSet, adam: Option<&mut AdamState>, epoch: usize| -> Result<f64, TrainError> {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let out = forward(&mut tape, &Bound { params, vars: &vars }, &batch, model_cfg)?;
        let loss = tape.mae(out.pred, rows.clone(), targets.clone())?;
        let value = tape.value(loss).item().expect("scalar loss");
        if !value.is_finite() {
            let op = tape.first_non_finite().unwrap_or("mae");
            return Err(TrainError::Divergence { epoch, op });
        }
        for &a in &out.attention {
            deviation = deviation.max(attention_deviation(tape.value(a), &batch));
        }
        if let Some(adam) = adam {
            let grads = tape.backward(loss)?;
            let g = params.collect_grads(&grads, &vars);
            adam.step(params, &g)?;
        }
        Ok(value * scale.scale)
    };
    for epoch in 0..cfg.epochs {
        let mae = step(&mut model.params, Some(&mut adam), epoch)?;
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            eprintln!("epoch {epoch:>5}  train_mae {mae:.6}");
        }
        trace.push(mae);
    }
    let final_train_mae = step(&mut model.params, None, cfg.epochs)?;
    Ok(TrainOutcome {
        model,
        adam,
        loss_trace: trace,
        final_train_mae,
        attention_max_deviation: deviation,
        touched_ids: batch.ids.clone(),
    })
}

/// `epoch,mae` rows.
pub fn loss_csv(trace: &[f64]) -> String {
    let mut s = String::from("epoch,mae\n");
    for (e, v) in trace.iter().enumerate() {
        s.push_str(&format!("{e},{v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fit_standardizer, generate_synthetic, SplitFractions, SyntheticConfig};
    use crate::model::Variant;
    use crate::stgraph::{build_graph, GraphNode};

    pub(crate) fn tiny_setup(
        n_records: usize,
        seed: u64,
    ) -> (StGraph, Vec<ProcessedNode>, Vec<usize>, FeatureSchema, PreprocessStats) {
        let recs = generate_synthetic(&SyntheticConfig {
            n_locations: n_records / 3 + 1,
            n_records: Some(n_records),
            seed,
            ..Default::default()
        })
        .unwrap();
        let sizes = SplitFractions::default().sizes(recs.len()).unwrap();
        let fit = &recs[..sizes.init + sizes.train];
        let stats = fit_standardizer(fit, &recs).unwrap();
        let schema = FeatureSchema::default();
        let nodes = stats.apply_all(&recs, &schema);
        let g: Vec<GraphNode> = nodes[..sizes.init + sizes.train].iter().map(GraphNode::from).collect();
        let graph = build_graph(&g[..sizes.init], &g[sizes.init..], &GraphConfig::default()).unwrap();
        let train: Vec<usize> = (sizes.init..sizes.init + sizes.train).collect();
        (graph, nodes, train, schema, stats)
    }

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig { variant, extractor_hidden: vec![16], hidden: 16, heads: 2, head_hidden: vec![16], ..Default::default() }
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let (g, nodes, train_pos, schema, stats) = tiny_setup(30, 1);
        let cfg = TrainConfig { epochs: 0, seed: 5, ..Default::default() };
        let out = train(&g, &nodes, &train_pos, &small(Variant::Stgan), &schema, &stats, &cfg).unwrap();
        let init = init_params(&small(Variant::Stgan), schema.dim(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(out.model.params, init);
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn overfits_five_nodes() {
        let (g, nodes, _, schema, stats) = tiny_setup(30, 2);
        let g = g.prefix(5);
        let train_pos: Vec<usize> = (1..5).collect();
        let cfg = TrainConfig { epochs: 2000, seed: 1, ..Default::default() };
        let out = train(&g, &nodes, &train_pos, &small(Variant::Stgan), &schema, &stats, &cfg).unwrap();
        assert!(out.final_train_mae < 0.05, "{}", out.final_train_mae);
    }

    #[test]
    fn training_is_deterministic_and_normalized() {
        let (g, nodes, train_pos, schema, stats) = tiny_setup(60, 3);
        let cfg = TrainConfig { epochs: 15, seed: 9, ..Default::default() };
        for v in Variant::ALL {
            let a = train(&g, &nodes, &train_pos, &small(v), &schema, &stats, &cfg).unwrap();
            let b = train(&g, &nodes, &train_pos, &small(v), &schema, &stats, &cfg).unwrap();
            assert_eq!(a.loss_trace, b.loss_trace, "{v}");
            assert_eq!(a.model.params, b.model.params, "{v}");
            assert!(a.attention_max_deviation < 1e-12);
            assert!(a.touched_ids.iter().all(|&id| g.position(id).is_some()));
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let (g, nodes, train_pos, schema, stats) = tiny_setup(30, 4);
        let cfg = TrainConfig { epochs: 3, adam: AdamConfig { lr: f64::INFINITY, ..Default::default() }, ..Default::default() };
        let err = train(&g, &nodes, &train_pos, &small(Variant::Gcn), &schema, &stats, &cfg).unwrap_err();
        assert!(matches!(err, TrainError::Divergence { epoch: 1, .. }), "{err}");
    }
}
