use std::sync::Arc;

use crate::dataset::{NodeId, ProcessedNode, ST_DIM};
use crate::ndgrad::{Matrix, Segments};
use crate::stgraph::{EdgeOrigin, StGraph};

use super::ModelError;

/// Dense inputs and edge lists for one forward pass over a set of graph nodes.
///
/// Edges are grouped by target row: every row's parents inside the batch,
/// then its self edge. Sources index a table of `2n` rows, the first `n`
/// holding full representations and the last `n` spatial-temporal ones, so a
/// self edge of row `r` points at `n + r`.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// Graph positions of the batch rows, ascending.
    pub positions: Vec<usize>,
    pub ids: Vec<NodeId>,
    pub x_full: Matrix,
    pub x_st: Matrix,
    pub targets: Arc<[usize]>,
    pub sources: Arc<[usize]>,
    /// `sources` folded onto `0..n`.
    pub sources_st: Arc<[usize]>,
    pub segments: Arc<Segments>,
    /// `E x 1` normalized time gaps; zero on self edges.
    pub dt_norm: Matrix,
    /// Distances over the distance threshold; zero on self edges.
    pub dist_norm: Vec<f64>,
    /// Fixed symmetric-normalized one-hop propagation of features.
    pub gcn_input: Matrix,
    /// `[x_st, mean of (x_full, target) over TOP parents]`.
    pub top_input: Matrix,
}

impl GraphBatch {
    /// Every node of the graph.
    pub fn full(graph: &StGraph, nodes: &[ProcessedNode], target_slot: usize) -> Result<Self, ModelError> {
        Self::new(graph, nodes, (0..graph.len()).collect(), target_slot)
    }

    /// The node at `pos` and its ancestors within `hops` edges; enough to evaluate
    /// `pos` exactly with `hops` attention layers.
    pub fn closure(
        graph: &StGraph,
        nodes: &[ProcessedNode],
        pos: usize,
        hops: usize,
        target_slot: usize,
    ) -> Result<Self, ModelError> {
        Self::new(graph, nodes, graph.ancestors(pos, hops.max(1)), target_slot)
    }

    /// `nodes[p]` holds the features of graph position `p`. `positions` must be ascending.
    pub fn new(
        graph: &StGraph,
        nodes: &[ProcessedNode],
        positions: Vec<usize>,
        target_slot: usize,
    ) -> Result<Self, ModelError> {
        let n = positions.len();
        if n == 0 {
            return Err(ModelError::Config("empty batch".into()));
        }
        for &p in &positions {
            let gid = graph.node(p).id;
            if nodes.get(p).map(|x| x.node_id) != Some(gid) {
                return Err(ModelError::Features(gid));
            }
        }
        let dim = nodes[positions[0]].x_full.len();
        if target_slot >= dim || positions.iter().any(|&p| nodes[p].x_full.len() != dim || nodes[p].x_st.len() != ST_DIM)
        {
            return Err(ModelError::Config(format!("feature widths disagree with target slot {target_slot}")));
        }
        let mut row_of = vec![usize::MAX; graph.len()];
        for (r, &p) in positions.iter().enumerate() {
            row_of[p] = r;
        }

        let mut x_full = Matrix::zeros(n, dim);
        let mut x_st = Matrix::zeros(n, ST_DIM);
        for (r, &p) in positions.iter().enumerate() {
            x_full.row_mut(r).copy_from_slice(&nodes[p].x_full);
            x_st.row_mut(r).copy_from_slice(&nodes[p].x_st);
        }

        let l_res = graph.config().l_res;
        let (mut targets, mut sources, mut dt, mut dist, mut lengths) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::with_capacity(n));
        for (r, &p) in positions.iter().enumerate() {
            let before = targets.len();
            for (e, a) in graph.parents(p).iter().zip(graph.annotations_of(p)) {
                let src = row_of[e.parent];
                if src != usize::MAX {
                    targets.push(r);
                    sources.push(src);
                    dt.push(a.dt_norm);
                    dist.push(a.dist_m / l_res);
                }
            }
            targets.push(r);
            sources.push(n + r);
            dt.push(0.0);
            dist.push(0.0);
            lengths.push(targets.len() - before);
        }
        let sources_st: Vec<usize> = sources.iter().map(|&s| s % n).collect();

        // propagation and pooling read the whole graph so truncated ancestors do not matter
        let degree = |p: usize| (graph.in_degree(p) + 1) as f64;
        let mut gcn_input = Matrix::zeros(n, dim);
        let mut top_input = Matrix::zeros(n, ST_DIM + dim + 1);
        for (r, &p) in positions.iter().enumerate() {
            let out = gcn_input.row_mut(r);
            let di = degree(p);
            for e in graph.parents(p) {
                let c = 1.0 / (di * degree(e.parent)).sqrt();
                for (o, &x) in out.iter_mut().zip(&nodes[e.parent].x_full) {
                    *o += c * x;
                }
            }
            for (o, &x) in out.iter_mut().zip(&nodes[p].x_st) {
                *o += x / di;
            }

            let pool = top_input.row_mut(r);
            pool[..ST_DIM].copy_from_slice(&nodes[p].x_st);
            let tops: Vec<usize> =
                graph.parents(p).iter().filter(|e| e.origin == EdgeOrigin::Top).map(|e| e.parent).collect();
            if !tops.is_empty() {
                let w = 1.0 / tops.len() as f64;
                for &b in &tops {
                    let xb = &nodes[b].x_full;
                    for (o, &x) in pool[ST_DIM..ST_DIM + dim].iter_mut().zip(xb) {
                        *o += w * x;
                    }
                    pool[ST_DIM + dim] += w * xb[target_slot];
                }
            }
        }

        Ok(Self {
            ids: positions.iter().map(|&p| graph.node(p).id).collect(),
            positions,
            x_full,
            x_st,
            segments: Arc::new(Segments::from_lengths(&lengths)?),
            targets: targets.into(),
            sources: sources.into(),
            sources_st: sources_st.into(),
            dt_norm: Matrix::column(&dt),
            dist_norm: dist,
            gcn_input,
            top_input,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn row_of(&self, pos: usize) -> Option<usize> {
        self.positions.binary_search(&pos).ok()
    }
}
