//! Shared fixtures for the benchmarks.

use stgan::dataset::{generate_synthetic, ProcessedNode, SyntheticConfig};
use stgan::experiment::{prepare, RunConfig};
use stgan::stgraph::{build_graph, GraphConfig, GraphNode, StGraph};

/// Featurized nodes of a synthetic dataset with `n_records` rows.
pub fn nodes(n_records: usize) -> Vec<ProcessedNode> {
    let mut cfg = RunConfig::synthetic(0);
    if let stgan::experiment::DataSource::Synthetic(s) = &mut cfg.data {
        s.n_records = Some(n_records);
        s.n_locations = (n_records / 5).max(1);
    }
    let prep = prepare(&cfg).expect("synthetic data prepares");
    prep.nodes
}

/// Graph over all of `nodes` with the first tenth as the initialization block.
pub fn graph(nodes: &[ProcessedNode], config: &GraphConfig) -> StGraph {
    let g: Vec<GraphNode> = nodes.iter().map(GraphNode::from).collect();
    let init = (g.len() / 10).max(1);
    build_graph(&g[..init], &g[init..], config).expect("graph builds")
}

pub fn raw_records(n_records: usize) -> Vec<stgan::dataset::RawRecord> {
    let cfg = SyntheticConfig { n_records: Some(n_records), n_locations: (n_records / 5).max(1), ..Default::default() };
    generate_synthetic(&cfg).expect("valid config")
}
