use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{NodeId, ProcessedNode};
use crate::model::{forward, Bound, GraphBatch};
use crate::ndgrad::Tape;
use crate::stgraph::{GraphNode, StGraph};

use super::{attention_deviation, TrainError, TrainedModel};

/// How a predicted node feeds later predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Commit each node with its observed features after predicting it.
    #[serde(rename = "true")]
    TrueFeedback,
    /// Commit each node with the prediction in the target slot and unknown slots zeroed.
    #[serde(rename = "predicted")]
    PredictedFeedback,
    /// Evaluate every query against the untouched graph.
    #[default]
    Ignore,
}

impl std::str::FromStr for Strategy {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true" => Ok(Strategy::TrueFeedback),
            "predicted" => Ok(Strategy::PredictedFeedback),
            "ignore" => Ok(Strategy::Ignore),
            _ => Err(TrainError::Contract(format!("strategy must be one of true, predicted, ignore; got {s:?}"))),
        }
    }
}

/// A request for the target value at a location and time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub location_id: u64,
    pub t: f64,
    /// Explicit coordinates; otherwise looked up from known locations.
    pub coords: Option<(f64, f64)>,
    /// Id for the inserted node; otherwise a fresh one.
    pub node_id: Option<NodeId>,
}

impl Query {
    pub fn at(location_id: u64, t: f64) -> Self {
        Self { location_id, t, coords: None, node_id: None }
    }

    /// A query reproducing a known node's location, time and id.
    pub fn for_node(n: &ProcessedNode) -> Self {
        Self { location_id: n.location_id, t: n.t_raw, coords: Some((n.lon, n.lat)), node_id: Some(n.node_id) }
    }
}

/// Incremental predictor over a trained model and its graph.
#[derive(Clone, Debug)]
pub struct Predictor<'m> {
    model: &'m TrainedModel,
    graph: StGraph,
    nodes: Vec<ProcessedNode>,
    locations: HashMap<u64, (f64, f64)>,
    allow_past: bool,
    max_t: f64,
    next_id: NodeId,
    attention_max_deviation: f64,
}

impl<'m> Predictor<'m> {
    /// `features[p]` holds the features of graph position `p`; extra entries are ignored.
    pub fn new(model: &'m TrainedModel, graph: StGraph, features: &[ProcessedNode]) -> Result<Self, TrainError> {
        if features.len() < graph.len() {
            return Err(TrainError::Contract(format!("{} feature rows for {} graph nodes", features.len(), graph.len())));
        }
        let nodes = features[..graph.len()].to_vec();
        for (p, n) in nodes.iter().enumerate() {
            if graph.node(p).id != n.node_id {
                return Err(crate::model::ModelError::Features(graph.node(p).id).into());
            }
        }
        let locations = nodes.iter().map(|n| (n.location_id, (n.lon, n.lat))).collect();
        let max_t = nodes.iter().fold(f64::NEG_INFINITY, |a, n| a.max(n.t_raw));
        let next_id = nodes.iter().map(|n| n.node_id + 1).max().unwrap_or(0);
        Ok(Self { model, graph, nodes, locations, allow_past: false, max_t, next_id, attention_max_deviation: 0.0 })
    }

    /// Accept queries earlier than existing nodes; parents remain restricted to earlier nodes.
    pub fn allow_past(mut self, yes: bool) -> Self {
        self.allow_past = yes;
        self
    }

    pub fn graph(&self) -> &StGraph {
        &self.graph
    }

    pub fn nodes(&self) -> &[ProcessedNode] {
        &self.nodes
    }

    /// Largest `|sum - 1|` over attention segments evaluated so far.
    pub fn attention_max_deviation(&self) -> f64 {
        self.attention_max_deviation
    }

    fn insert(&mut self, node: ProcessedNode) -> Result<usize, TrainError> {
        let g = GraphNode::from(&node);
        let pos = if self.allow_past { self.graph.expand_interpolating(g)? } else { self.graph.expand(g)? };
        self.next_id = self.next_id.max(node.node_id + 1);
        self.max_t = self.max_t.max(node.t_raw);
        self.locations.entry(node.location_id).or_insert((node.lon, node.lat));
        self.nodes.push(node);
        Ok(pos)
    }

    fn evaluate(&mut self, pos: usize) -> Result<f64, TrainError> {
        let m = self.model;
        let batch = GraphBatch::closure(&self.graph, &self.nodes, pos, m.model.layers, m.target_slot())?;
        let mut tape = Tape::new();
        let vars = m.params.register(&mut tape);
        let out = forward(&mut tape, &Bound { params: &m.params, vars: &vars }, &batch, &m.model)?;
        for &a in &out.attention {
            self.attention_max_deviation = self.attention_max_deviation.max(attention_deviation(tape.value(a), &batch));
        }
        let row = batch.row_of(pos).expect("query in its own closure");
        Ok(m.target_scale().to_raw(tape.value(out.pred).get(row, 0)))
    }

    /// Predicts the target at `query`. With `commit`, the node stays in the graph
    /// carrying its prediction; otherwise the predictor is left unchanged.
    pub fn predict_one(&mut self, query: &Query, commit: bool) -> Result<f64, TrainError> {
        let (lon, lat) = match query.coords {
            Some(c) => c,
            None => *self.locations.get(&query.location_id).ok_or(TrainError::UnknownLocation(query.location_id))?,
        };
        if !self.allow_past && query.t < self.max_t {
            return Err(TrainError::Temporal { t: query.t, latest: self.max_t });
        }
        let id = query.node_id.unwrap_or(self.next_id);
        let m = self.model;
        let node = m.stats.query_node(id, query.location_id, lon, lat, query.t, &m.schema);
        let saved = (self.graph.len(), self.next_id, self.max_t, self.locations.contains_key(&query.location_id));
        let pos = self.insert(node)?;
        let result = self.evaluate(pos);
        match (&result, commit) {
            (Ok(y), true) => {
                let slot = m.target_slot();
                let n = self.nodes.last_mut().expect("inserted node");
                n.x_full[slot] = m.stats.standardize_target(*y);
                n.y = *y;
            }
            _ => {
                self.graph.truncate(saved.0);
                self.nodes.truncate(saved.0);
                self.next_id = saved.1;
                self.max_t = saved.2;
                if !saved.3 {
                    self.locations.remove(&query.location_id);
                }
            }
        }
        result
    }

    /// Inserts an observed node with its full features.
    pub fn commit_observed(&mut self, node: ProcessedNode) -> Result<usize, TrainError> {
        if node.x_full.len() != self.model.schema.dim() {
            return Err(TrainError::Contract(format!("observation {} has wrong feature width", node.node_id)));
        }
        if !self.allow_past && node.t_raw < self.max_t {
            return Err(TrainError::Temporal { t: node.t_raw, latest: self.max_t });
        }
        self.insert(node)
    }

    /// Predicts `queries` in order. `observations[i]` must describe query `i` for
    /// [`Strategy::TrueFeedback`].
    pub fn predict_sequence(
        &mut self,
        queries: &[Query],
        strategy: Strategy,
        observations: Option<&[ProcessedNode]>,
    ) -> Result<Vec<f64>, TrainError> {
        if strategy == Strategy::TrueFeedback && observations.is_none_or(|o| o.len() != queries.len()) {
            return Err(TrainError::Contract("true feedback needs one observation per query".into()));
        }
        let mut out = Vec::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            match strategy {
                Strategy::Ignore => out.push(self.predict_one(q, false)?),
                Strategy::PredictedFeedback => out.push(self.predict_one(q, true)?),
                Strategy::TrueFeedback => {
                    out.push(self.predict_one(q, false)?);
                    let obs = observations.expect("checked above")[i].clone();
                    self.commit_observed(obs)?;
                }
            }
        }
        Ok(out)
    }
}
