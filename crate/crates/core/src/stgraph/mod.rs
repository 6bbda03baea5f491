//! Directed spatiotemporal graph over `(location, time)` nodes.
//!
//! Edges point parent → child. A child's parents are earlier-or-equal nodes
//! that either fall inside both distance and time thresholds (hard edges) or
//! rank among its `k` nearest under a joint space-time score (TOP edges). The
//! first block of nodes is connected with mutual hard edges only.

mod build;
mod json;

use serde::{Deserialize, Serialize};

use crate::dataset::{NodeId, ProcessedNode};

pub use build::{build_graph, build_init_graph, hard_edges, top_edges, top_score};
pub use json::{EdgeJson, GraphJson, NodeJson};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("graph config: {0}")]
    Config(String),
    #[error("initialization block is empty")]
    EmptyInit,
    #[error("node {id} at t={t} precedes latest node at t={latest}")]
    TemporalOrder { id: NodeId, t: f64, latest: f64 },
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("non-finite coordinate or time for node {0}")]
    NonFinite(NodeId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Equirectangular,
    Haversine,
}

/// How TOP edges combine with hard edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopMode {
    /// TOP ranks all earlier nodes; overlaps with hard edges are merged.
    #[default]
    Merged,
    /// TOP ranks only nodes not already selected by the hard condition.
    Additional,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Distance threshold, meters.
    pub l_res: f64,
    /// Time threshold, days.
    pub t_res: f64,
    pub k: usize,
    pub metric: DistanceMetric,
    pub top_mode: TopMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { l_res: 200.0, t_res: 14.0, k: 5, metric: DistanceMetric::Equirectangular, top_mode: TopMode::Merged }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.l_res > 0.0 && self.l_res.is_finite()) || !(self.t_res > 0.0 && self.t_res.is_finite()) {
            return Err(GraphError::Config(format!("l_res={} and t_res={} must be positive", self.l_res, self.t_res)));
        }
        Ok(())
    }

    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self.metric {
            DistanceMetric::Equirectangular => location_distance(a, b),
            DistanceMetric::Haversine => haversine_distance(a, b),
        }
    }
}

/// Equirectangular distance in meters between `(lon, lat)` pairs in degrees.
/// Non-finite input yields NaN.
pub fn location_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, pa) = (a.0.to_radians(), a.1.to_radians());
    let (lb, pb) = (b.0.to_radians(), b.1.to_radians());
    let x = (lb - la) * ((pa + pb) / 2.0).cos();
    EARTH_RADIUS_M * x.hypot(pb - pa)
}

pub fn haversine_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, pa) = (a.0.to_radians(), a.1.to_radians());
    let (lb, pb) = (b.0.to_radians(), b.1.to_radians());
    let h = ((pb - pa) / 2.0).sin().powi(2) + pa.cos() * pb.cos() * ((lb - la) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Position and time of a graph node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub lon: f64,
    pub lat: f64,
    pub t_raw: f64,
    pub t_norm: f64,
}

impl GraphNode {
    pub fn coords(&self) -> (f64, f64) {
        (self.lon, self.lat)
    }

    fn check_finite(&self) -> Result<(), GraphError> {
        if [self.lon, self.lat, self.t_raw, self.t_norm].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GraphError::NonFinite(self.id))
        }
    }
}

impl From<&ProcessedNode> for GraphNode {
    fn from(n: &ProcessedNode) -> Self {
        Self { id: n.node_id, lon: n.lon, lat: n.lat, t_raw: n.t_raw, t_norm: n.t_norm }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    Hard,
    Top,
    Init,
}

/// An incoming edge, stored on the child.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentEdge {
    /// Position of the parent in the graph's node list.
    pub parent: usize,
    pub origin: EdgeOrigin,
    /// `|t_raw(child) - t_raw(parent)|`, days.
    pub dt_raw: f64,
    pub dist_m: f64,
}

/// Per-edge inputs consumed by attention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeAnnotation {
    pub dt_norm: f64,
    pub dist_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StGraph {
    config: GraphConfig,
    nodes: Vec<GraphNode>,
    parents: Vec<Vec<ParentEdge>>,
    init_count: usize,
    positions: std::collections::HashMap<NodeId, usize>,
    latest: f64,
}

impl StGraph {
    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn init_count(&self) -> usize {
        self.init_count
    }

    pub fn is_init(&self, pos: usize) -> bool {
        pos < self.init_count
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, pos: usize) -> &GraphNode {
        &self.nodes[pos]
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn parents(&self, pos: usize) -> &[ParentEdge] {
        &self.parents[pos]
    }

    pub fn parent_ids(&self, pos: usize) -> Vec<NodeId> {
        self.parents[pos].iter().map(|e| self.nodes[e.parent].id).collect()
    }

    pub fn in_degree(&self, pos: usize) -> usize {
        self.parents[pos].len()
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Latest timestamp among nodes inserted after the initialization block.
    pub fn latest_time(&self) -> f64 {
        self.latest
    }

    /// `(parent id, child id, origin)` for every edge, ordered by child then parent position.
    pub fn edge_list(&self) -> Vec<(NodeId, NodeId, EdgeOrigin)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |e| (self.nodes[e.parent].id, self.nodes[c].id, e.origin)))
            .collect()
    }

    /// Annotations aligned with each node's parent list.
    pub fn edge_annotations(&self) -> Vec<Vec<EdgeAnnotation>> {
        (0..self.len()).map(|c| self.annotations_of(c)).collect()
    }

    pub fn annotations_of(&self, pos: usize) -> Vec<EdgeAnnotation> {
        let tc = self.nodes[pos].t_norm;
        self.parents[pos]
            .iter()
            .map(|e| EdgeAnnotation { dt_norm: (tc - self.nodes[e.parent].t_norm).abs(), dist_m: e.dist_m })
            .collect()
    }

    /// Positions of every node reachable from `pos` along parent edges within `hops`, including `pos`, ascending.
    pub fn ancestors(&self, pos: usize, hops: usize) -> Vec<usize> {
        let mut seen = std::collections::BTreeSet::from([pos]);
        let mut frontier = vec![pos];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &c in &frontier {
                for e in &self.parents[c] {
                    if seen.insert(e.parent) {
                        next.push(e.parent);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        seen.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let a = (121.0, 31.0);
        assert_eq!(location_distance(a, a), 0.0);
        let b = (121.01, 31.0);
        let d = location_distance(a, b);
        assert!((d - 953.1).abs() < 0.05, "{d}");
        assert_eq!(d, location_distance(b, a));
        // equirectangular and haversine agree closely at city scale
        assert!((haversine_distance(a, b) - d).abs() < 1e-3);
        assert!(location_distance((f64::NAN, 0.0), a).is_nan());
    }

    #[test]
    fn config_validation() {
        assert!(GraphConfig::default().validate().is_ok());
        assert!(GraphConfig { l_res: 0.0, ..Default::default() }.validate().is_err());
        assert!(GraphConfig { t_res: -1.0, ..Default::default() }.validate().is_err());
    }
}
