use std::collections::HashMap;

use super::{EdgeOrigin, GraphConfig, GraphError, GraphNode, ParentEdge, StGraph, TopMode};

/// Joint space-time ranking score; lower is closer.
pub fn top_score(node: &GraphNode, cand: &GraphNode, config: &GraphConfig) -> f64 {
    config.distance(node.coords(), cand.coords()) / config.l_res + (node.t_raw - cand.t_raw).abs() / config.t_res
}

fn is_hard(node: &GraphNode, cand: &GraphNode, config: &GraphConfig) -> bool {
    config.distance(node.coords(), cand.coords()) <= config.l_res && (node.t_raw - cand.t_raw).abs() <= config.t_res
}

/// Indices of `candidates` within both thresholds of `node`, ascending.
pub fn hard_edges(node: &GraphNode, candidates: &[GraphNode], config: &GraphConfig) -> Vec<usize> {
    (0..candidates.len()).filter(|&i| is_hard(node, &candidates[i], config)).collect()
}

/// Indices of the `k` best-ranked `candidates`, best first; ties go to the smaller node id.
pub fn top_edges(node: &GraphNode, candidates: &[GraphNode], config: &GraphConfig) -> Vec<usize> {
    rank(node, candidates, 0..candidates.len(), config.k, config)
}

fn rank(
    node: &GraphNode,
    nodes: &[GraphNode],
    eligible: impl Iterator<Item = usize>,
    k: usize,
    config: &GraphConfig,
) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, u64, usize)> =
        eligible.map(|i| (top_score(node, &nodes[i], config), nodes[i].id, i)).collect();
    let cmp = |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|s| s.2).collect()
}

/// Connects every pair of initialization nodes that satisfies the hard condition, in both directions.
pub fn build_init_graph(init_nodes: &[GraphNode], config: &GraphConfig) -> Result<StGraph, GraphError> {
    config.validate()?;
    if init_nodes.is_empty() {
        return Err(GraphError::EmptyInit);
    }
    let mut positions = HashMap::with_capacity(init_nodes.len());
    for (i, n) in init_nodes.iter().enumerate() {
        n.check_finite()?;
        if positions.insert(n.id, i).is_some() {
            return Err(GraphError::DuplicateId(n.id));
        }
    }
    let parents = init_nodes
        .iter()
        .enumerate()
        .map(|(i, child)| {
            (0..init_nodes.len())
                .filter(|&j| j != i && is_hard(child, &init_nodes[j], config))
                .map(|j| ParentEdge {
                    parent: j,
                    origin: EdgeOrigin::Init,
                    dt_raw: (child.t_raw - init_nodes[j].t_raw).abs(),
                    dist_m: config.distance(child.coords(), init_nodes[j].coords()),
                })
                .collect()
        })
        .collect();
    Ok(StGraph {
        config: *config,
        nodes: init_nodes.to_vec(),
        parents,
        init_count: init_nodes.len(),
        positions,
        latest: f64::NEG_INFINITY,
    })
}

/// Initialization block followed by one expansion per remaining node.
pub fn build_graph(init_nodes: &[GraphNode], rest: &[GraphNode], config: &GraphConfig) -> Result<StGraph, GraphError> {
    let mut g = build_init_graph(init_nodes, config)?;
    g.reserve(rest.len());
    for n in rest {
        g.expand(*n)?;
    }
    Ok(g)
}

impl StGraph {
    fn reserve(&mut self, extra: usize) {
        self.nodes.reserve(extra);
        self.parents.reserve(extra);
        self.positions.reserve(extra);
    }

    /// Parents `node` would receive if inserted now: every existing node no later than it,
    /// filtered by the hard condition and ranked for TOP edges.
    pub fn select_parents(&self, node: &GraphNode) -> Vec<ParentEdge> {
        let c = &self.config;
        let eligible = || (0..self.nodes.len()).filter(|&i| self.nodes[i].t_raw <= node.t_raw);
        let hard: Vec<usize> = eligible().filter(|&i| is_hard(node, &self.nodes[i], c)).collect();
        let top = match c.top_mode {
            TopMode::Merged => rank(node, &self.nodes, eligible(), c.k, c),
            TopMode::Additional => rank(node, &self.nodes, eligible().filter(|i| hard.binary_search(i).is_err()), c.k, c),
        };
        let mut edges: Vec<ParentEdge> = top
            .iter()
            .map(|&i| (i, EdgeOrigin::Top))
            .chain(hard.iter().filter(|i| !top.contains(i)).map(|&i| (i, EdgeOrigin::Hard)))
            .map(|(i, origin)| ParentEdge {
                parent: i,
                origin,
                dt_raw: (node.t_raw - self.nodes[i].t_raw).abs(),
                dist_m: c.distance(node.coords(), self.nodes[i].coords()),
            })
            .collect();
        edges.sort_by_key(|e| e.parent);
        edges
    }

    /// Appends a node no earlier than every non-initialization node; returns its position.
    pub fn expand(&mut self, node: GraphNode) -> Result<usize, GraphError> {
        if node.t_raw < self.latest {
            return Err(GraphError::TemporalOrder { id: node.id, t: node.t_raw, latest: self.latest });
        }
        self.insert(node)
    }

    /// Appends a node at any time; parents are still restricted to nodes no later than it.
    /// Used when held-out nodes fall between training timestamps.
    pub fn expand_interpolating(&mut self, node: GraphNode) -> Result<usize, GraphError> {
        self.insert(node)
    }

    fn insert(&mut self, node: GraphNode) -> Result<usize, GraphError> {
        node.check_finite()?;
        if self.positions.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        let edges = self.select_parents(&node);
        let pos = self.nodes.len();
        self.nodes.push(node);
        self.parents.push(edges);
        self.positions.insert(node.id, pos);
        self.latest = self.latest.max(node.t_raw);
        Ok(pos)
    }

    /// The graph as it was after its first `n` insertions.
    pub fn prefix(&self, n: usize) -> StGraph {
        let n = n.clamp(self.init_count.min(self.len()), self.len());
        let nodes = self.nodes[..n].to_vec();
        let latest = nodes[self.init_count..].iter().fold(f64::NEG_INFINITY, |a, b| a.max(b.t_raw));
        StGraph {
            config: self.config,
            positions: nodes.iter().enumerate().map(|(i, g)| (g.id, i)).collect(),
            nodes,
            parents: self.parents[..n].to_vec(),
            init_count: self.init_count,
            latest,
        }
    }

    /// Drops every node inserted after the first `n`; the initialization block is kept.
    pub fn truncate(&mut self, n: usize) {
        let n = n.max(self.init_count);
        if n >= self.len() {
            return;
        }
        for g in &self.nodes[n..] {
            self.positions.remove(&g.id);
        }
        self.nodes.truncate(n);
        self.parents.truncate(n);
        self.latest = self.nodes[self.init_count..].iter().fold(f64::NEG_INFINITY, |a, b| a.max(b.t_raw));
    }

    /// Same nodes rebuilt under a different configuration.
    pub fn rebuild(&self, config: &GraphConfig) -> Result<StGraph, GraphError> {
        build_graph(&self.nodes[..self.init_count], &self.nodes[self.init_count..], config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn node(id: u64, lon: f64, lat: f64, t: f64) -> GraphNode {
        GraphNode { id, lon, lat, t_raw: t, t_norm: t / 100.0 }
    }

    fn random_nodes(n: usize, seed: u64) -> Vec<GraphNode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<GraphNode> = (0..n)
            .map(|i| {
                // coarse time grid to exercise ties
                let t = (rng.random_range(0.0..100.0f64) * 2.0).round() / 2.0;
                node(i as u64, 121.0 + rng.random_range(0.0..0.02), 31.0 + rng.random_range(0.0..0.02), t)
            })
            .collect();
        v.sort_by(|a, b| a.t_raw.total_cmp(&b.t_raw).then(a.id.cmp(&b.id)));
        v
    }

    /// Quadratic construction straight from the definitions.
    fn brute_force(nodes: &[GraphNode], n_init: usize, c: &GraphConfig) -> BTreeSet<(u64, u64)> {
        let mut edges = BTreeSet::new();
        for i in 0..n_init {
            for j in 0..n_init {
                let (a, b) = (&nodes[i], &nodes[j]);
                let d = c.distance(a.coords(), b.coords());
                if i != j && d <= c.l_res && (a.t_raw - b.t_raw).abs() <= c.t_res {
                    edges.insert((b.id, a.id));
                }
            }
        }
        for i in n_init..nodes.len() {
            let me = &nodes[i];
            let cands: Vec<&GraphNode> = nodes[..i].iter().filter(|b| b.t_raw <= me.t_raw).collect();
            let mut scored: Vec<(f64, u64)> = cands
                .iter()
                .map(|b| {
                    let d = c.distance(me.coords(), b.coords());
                    if d <= c.l_res && me.t_raw - b.t_raw <= c.t_res {
                        edges.insert((b.id, me.id));
                    }
                    (d / c.l_res + (me.t_raw - b.t_raw) / c.t_res, b.id)
                })
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for s in scored.iter().take(c.k) {
                edges.insert((s.1, me.id));
            }
        }
        edges
    }

    fn edge_set(g: &StGraph) -> BTreeSet<(u64, u64)> {
        g.edge_list().into_iter().map(|(a, b, _)| (a, b)).collect()
    }

    #[test]
    fn hard_edge_examples() {
        let c = GraphConfig::default();
        let me = node(0, 121.0, 31.0, 10.0);
        assert_eq!(hard_edges(&me, &[node(1, 121.0, 31.0, 10.0)], &c), vec![0]);
        // just beyond l_res along a meridian
        let dlat = (c.l_res + 1e-3) / 6_371_000.0f64 * 180.0 / std::f64::consts::PI;
        assert!(hard_edges(&me, &[node(1, 121.0, 31.0 + dlat, 10.0)], &c).is_empty());
        let dlat_in = (c.l_res - 1e-3) / 6_371_000.0f64 * 180.0 / std::f64::consts::PI;
        assert_eq!(hard_edges(&me, &[node(1, 121.0, 31.0 + dlat_in, 10.0)], &c), vec![0]);
    }

    #[test]
    fn hard_edges_match_filter_oracle() {
        let c = GraphConfig { l_res: 800.0, t_res: 30.0, ..Default::default() };
        let nodes = random_nodes(31, 3);
        let me = nodes[30];
        let cands = &nodes[..30];
        let oracle: Vec<usize> = (0..30)
            .filter(|&i| {
                let d = location_distance_ref(me.coords(), cands[i].coords());
                d <= c.l_res && (me.t_raw - cands[i].t_raw).abs() <= c.t_res
            })
            .collect();
        assert!(!oracle.is_empty());
        assert_eq!(hard_edges(&me, cands, &c), oracle);
    }

    fn location_distance_ref(a: (f64, f64), b: (f64, f64)) -> f64 {
        let r = 6_371_000.0;
        let dphi = (b.1 - a.1).to_radians();
        let dlam = (b.0 - a.0).to_radians();
        let mean = ((a.1 + b.1) / 2.0).to_radians();
        r * (dphi * dphi + (mean.cos() * dlam).powi(2)).sqrt()
    }

    #[test]
    fn top_edge_examples() {
        let c = GraphConfig::default();
        let me = node(9, 121.0, 31.0, 50.0);
        let three = [node(1, 121.0, 31.0, 1.0), node(2, 121.0, 31.0, 2.0), node(3, 121.0, 31.0, 3.0)];
        assert_eq!(top_edges(&me, &three, &c).len(), 3);
        // identical score: lower id first regardless of order
        let tied = [node(7, 121.0, 31.0, 40.0), node(4, 121.0, 31.0, 40.0)];
        assert_eq!(top_edges(&me, &tied, &GraphConfig { k: 1, ..c }), vec![1]);

        let nodes = random_nodes(13, 11);
        let me = nodes[12];
        let mut oracle: Vec<(f64, u64, usize)> = (0..12)
            .map(|i| {
                let b = &nodes[i];
                (location_distance_ref(me.coords(), b.coords()) / c.l_res + (me.t_raw - b.t_raw).abs() / c.t_res, b.id, i)
            })
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = oracle.iter().take(5).map(|o| o.2).collect();
        assert_eq!(top_edges(&me, &nodes[..12], &c), want);
    }

    #[test]
    fn init_graph_examples() {
        let c = GraphConfig::default();
        assert_eq!(build_init_graph(&[], &c).unwrap_err(), GraphError::EmptyInit);
        let one = build_init_graph(&[node(0, 121.0, 31.0, 0.0)], &c).unwrap();
        assert_eq!((one.len(), one.num_edges()), (1, 0));
        let two = build_init_graph(&[node(0, 121.0, 31.0, 0.0), node(1, 121.0, 31.0, 0.0)], &c).unwrap();
        assert_eq!(edge_set(&two), BTreeSet::from([(0, 1), (1, 0)]));

        let c = GraphConfig { l_res: 1000.0, t_res: 40.0, ..Default::default() };
        let nodes = random_nodes(10, 5);
        let g = build_init_graph(&nodes, &c).unwrap();
        let want = brute_force(&nodes, 10, &c);
        assert!(!want.is_empty());
        assert_eq!(edge_set(&g), want);
        assert!(g.edge_list().iter().all(|e| e.2 == EdgeOrigin::Init));
    }

    #[test]
    fn expand_examples() {
        let c0 = GraphConfig { k: 0, ..Default::default() };
        let mut g = build_init_graph(&[node(0, 121.0, 31.0, 0.0)], &c0).unwrap();
        let p = g.expand(node(1, 121.5, 31.5, 100.0)).unwrap();
        assert_eq!(g.in_degree(p), 0);

        let c = GraphConfig::default();
        let init = [node(0, 121.0, 31.0, 0.0), node(1, 121.1, 31.0, 1.0), node(2, 121.2, 31.0, 2.0)];
        let mut g = build_init_graph(&init, &c).unwrap();
        let p = g.expand(node(3, 122.0, 30.0, 90.0)).unwrap();
        assert_eq!(g.in_degree(p), 3);
        assert!(g.parents(p).iter().all(|e| e.origin == EdgeOrigin::Top));

        assert_eq!(g.expand(node(3, 122.0, 30.0, 95.0)).unwrap_err(), GraphError::DuplicateId(3));
        assert!(matches!(g.expand(node(4, 122.0, 30.0, 80.0)), Err(GraphError::TemporalOrder { .. })));
        let before = g.clone();
        assert!(g.expand(node(5, f64::NAN, 30.0, 99.0)).is_err());
        assert_eq!(g, before);
    }

    #[test]
    fn interpolating_insert_only_sees_earlier_nodes() {
        let c = GraphConfig::default();
        let init = [node(0, 121.0, 31.0, 0.0)];
        let mut g = build_graph(&init, &[node(1, 121.0, 31.0, 10.0), node(2, 121.0, 31.0, 30.0)], &c).unwrap();
        let p = g.expand_interpolating(node(3, 121.0, 31.0, 20.0)).unwrap();
        assert_eq!(g.parent_ids(p), vec![0, 1]);
    }

    #[test]
    fn merged_top_marks_overlap_as_top() {
        let c = GraphConfig { k: 1, ..Default::default() };
        let init = [node(0, 121.0, 31.0, 0.0), node(1, 121.0, 31.0, 1.0)];
        let mut g = build_init_graph(&init, &c).unwrap();
        let p = g.expand(node(2, 121.0, 31.0, 2.0)).unwrap();
        let origins: Vec<(u64, EdgeOrigin)> = g.parents(p).iter().map(|e| (g.node(e.parent).id, e.origin)).collect();
        assert_eq!(origins, vec![(0, EdgeOrigin::Hard), (1, EdgeOrigin::Top)]);

        let ca = GraphConfig { k: 1, top_mode: TopMode::Additional, ..Default::default() };
        let far = [node(0, 121.0, 31.0, 0.0), node(1, 121.0, 31.0, 1.0), node(2, 121.3, 31.0, 1.5)];
        let mut g = build_init_graph(&far, &ca).unwrap();
        let p = g.expand(node(3, 121.0, 31.0, 2.0)).unwrap();
        assert_eq!(g.parent_ids(p), vec![0, 1, 2]);
    }

    #[test]
    fn annotations_match_recomputation() {
        let c = GraphConfig { l_res: 1500.0, t_res: 30.0, ..Default::default() };
        let nodes = random_nodes(10, 21);
        let g = build_graph(&nodes[..2], &nodes[2..], &c).unwrap();
        let ann = g.edge_annotations();
        for (i, a) in ann.iter().enumerate() {
            assert_eq!(a.len(), g.in_degree(i));
            for (e, x) in g.parents(i).iter().zip(a) {
                let (me, p) = (g.node(i), g.node(e.parent));
                assert_eq!(x.dt_norm, (me.t_norm - p.t_norm).abs());
                assert!((x.dist_m - location_distance_ref(me.coords(), p.coords())).abs() < 1e-6);
            }
        }
        // a parent half the normalized span away
        let half = [node(0, 121.0, 31.0, 0.0), node(1, 121.0, 31.0, 50.0)];
        let g = build_graph(&half[..1], &half[1..], &c).unwrap();
        assert_eq!(g.annotations_of(1)[0].dt_norm, 0.5);
    }

    #[test]
    fn prefix_recovers_earlier_state() {
        let c = GraphConfig::default();
        let nodes = random_nodes(40, 8);
        let full = build_graph(&nodes[..4], &nodes[4..], &c).unwrap();
        let part = build_graph(&nodes[..4], &nodes[4..25], &c).unwrap();
        assert_eq!(full.prefix(25), part);
        let mut cut = full.clone();
        cut.truncate(25);
        assert_eq!(cut, part);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn incremental_equals_brute_force(seed in 0u64..10_000, n in 12usize..60, k in 0usize..7) {
            let c = GraphConfig { l_res: 600.0, t_res: 10.0, k, ..Default::default() };
            let nodes = random_nodes(n, seed);
            let n_init = (n / 10).max(1);
            let g = build_graph(&nodes[..n_init], &nodes[n_init..], &c).unwrap();
            prop_assert_eq!(edge_set(&g), brute_force(&nodes, n_init, &c));
            for i in n_init..n {
                let prior = nodes[..i].iter().filter(|b| b.t_raw <= nodes[i].t_raw).count();
                prop_assert!(g.in_degree(i) >= k.min(prior));
                for e in g.parents(i) {
                    prop_assert!(g.node(e.parent).t_raw <= nodes[i].t_raw);
                    prop_assert!(e.parent < i);
                }
            }
            let g0 = g.rebuild(&GraphConfig { k: 0, ..c }).unwrap();
            prop_assert!(edge_set(&g0).is_subset(&edge_set(&g)));
        }
    }
}
