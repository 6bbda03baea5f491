//! Fixtures and an independent dense-matrix forward pass shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgan::dataset::{fit_standardizer, DistressType, FeatureSchema, PreprocessStats, ProcessedNode, RawRecord};
use stgan::model::{init_params, ModelConfig, Variant};
use stgan::ndgrad::ParamSet;
use stgan::stgraph::{build_graph, location_distance, EdgeOrigin, GraphConfig, GraphNode, StGraph};

/// A random record near a fixed origin; `spread_m` bounds the offsets.
pub fn random_record<R: Rng>(rng: &mut R, location_id: u64, spread_m: f64, t_span: f64) -> RawRecord {
    let deg = spread_m / 111_000.0;
    let mut env = [0.0; 8];
    for e in env.iter_mut() {
        *e = rng.random_range(-5.0..30.0);
    }
    RawRecord {
        location_id,
        longitude_gcj: 121.4 + rng.random_range(0.0..deg),
        latitude_gcj: 31.2 + rng.random_range(0.0..deg),
        // whole days make equal timestamps likely
        collect_time: 19_000.0 + rng.random_range(0..=t_span as u32) as f64,
        env,
        detect_info: rng.random_range(0.0..12.0),
        detect_conf: rng.random_range(0.5..1.0),
        distress_type: DistressType::ALL[rng.random_range(0..5)],
    }
}

/// A small time-sorted instance with its statistics, features and graph.
pub struct Instance {
    pub records: Vec<RawRecord>,
    pub stats: PreprocessStats,
    pub schema: FeatureSchema,
    pub nodes: Vec<ProcessedNode>,
    pub graph: StGraph,
}

impl Instance {
    pub fn new(records: Vec<RawRecord>, init: usize, graph_cfg: &GraphConfig) -> Self {
        let mut records = records;
        stgan::dataset::sort_records(&mut records);
        let schema = FeatureSchema::default();
        let stats = fit_standardizer(&records, &records).expect("non-empty");
        let nodes = stats.apply_all(&records, &schema);
        let g: Vec<GraphNode> = nodes.iter().map(GraphNode::from).collect();
        let graph = build_graph(&g[..init], &g[init..], graph_cfg).expect("graph builds");
        Self { records, stats, schema, nodes, graph }
    }

    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let records = (0..n).map(|i| random_record(rng, (i % 3) as u64 + 1, 400.0, 40.0)).collect();
        let cfg = GraphConfig { l_res: rng.random_range(100.0..400.0), t_res: rng.random_range(3.0..20.0), k: rng.random_range(0..4), ..Default::default() };
        let init = rng.random_range(1..=2.min(n));
        Self::new(records, init, &cfg)
    }

    pub fn target_slot(&self) -> usize {
        self.schema.distress_slot()
    }
}

/// A narrow model so dense checks and gradient checks stay fast.
pub fn small_model(variant: Variant, layers: usize, reuse: bool) -> ModelConfig {
    ModelConfig {
        variant,
        extractor_hidden: vec![5],
        hidden: 4,
        heads: 3,
        layers,
        head_hidden: vec![4],
        reuse_layer1_attention: reuse,
        eam_gamma: 0.7,
        ..Default::default()
    }
}

/// Initial parameters with biases made nonzero so every path is exercised.
pub fn random_params(cfg: &ModelConfig, input_dim: usize, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = init_params(cfg, input_dim, &mut rng).expect("valid config");
    for v in p.values_mut() {
        for x in v.as_mut_slice() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    p
}

type Dense = Vec<Vec<f64>>;

fn param(p: &ParamSet, name: &str) -> Dense {
    let m = p.require(name).expect("parameter present");
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 { x } else { x.exp() - 1.0 }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 { x } else { slope * x }
}

fn affine(p: &ParamSet, prefix: &str, k: usize, x: &Dense) -> Dense {
    let w = param(p, &format!("{prefix}.{k}.w"));
    let b = param(p, &format!("{prefix}.{k}.b"));
    matmul(x, &w).into_iter().map(|row| row.iter().zip(&b[0]).map(|(a, c)| a + c).collect()).collect()
}

fn mlp(p: &ParamSet, prefix: &str, x: &Dense, act_last: bool) -> Dense {
    let depth = (0..).take_while(|k| p.get(&format!("{prefix}.{k}.w")).is_some()).count();
    let mut h = x.clone();
    for k in 0..depth {
        h = affine(p, prefix, k, &h);
        if act_last || k + 1 < depth {
            h = h.into_iter().map(|r| r.into_iter().map(elu).collect()).collect();
        }
    }
    h
}

/// Row-wise masked softmax of an `n x n` score matrix; masked entries get zero weight.
fn masked_softmax(scores: &Dense, mask: &[Vec<bool>]) -> Dense {
    scores
        .iter()
        .zip(mask)
        .map(|(row, m)| {
            let max = row.iter().zip(m).filter(|(_, &k)| k).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().zip(m).map(|(s, &k)| if k { (s - max).exp() } else { 0.0 }).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Standardized predictions from dense masked matrices, computed without the edge-list machinery.
pub fn dense_forward(p: &ParamSet, cfg: &ModelConfig, inst: &Instance) -> Vec<f64> {
    let n = inst.nodes.len();
    let g = &inst.graph;
    let x_full: Dense = inst.nodes.iter().map(|v| v.x_full.clone()).collect();
    let x_st: Dense = inst.nodes.iter().map(|v| v.x_st.clone()).collect();
    // adjacency[i][j]: j is a parent of i
    let mut adj = vec![vec![false; n]; n];
    let mut top = vec![vec![false; n]; n];
    for i in 0..n {
        for e in g.parents(i) {
            adj[i][e.parent] = true;
            top[i][e.parent] = e.origin == EdgeOrigin::Top;
        }
    }
    let pred = match cfg.variant {
        Variant::TopMlp => {
            let slot = inst.target_slot();
            let d = x_full[0].len();
            let input: Dense = (0..n)
                .map(|i| {
                    let ks: Vec<usize> = (0..n).filter(|&j| top[i][j]).collect();
                    let mut row = x_st[i].clone();
                    let mut pool = vec![0.0; d + 1];
                    for &j in &ks {
                        for c in 0..d {
                            pool[c] += x_full[j][c] / ks.len() as f64;
                        }
                        pool[d] += x_full[j][slot] / ks.len() as f64;
                    }
                    row.extend(pool);
                    row
                })
                .collect();
            mlp(p, "mlp", &input, false)
        }
        Variant::Gcn | Variant::GcnMlp => {
            let deg: Vec<f64> = (0..n).map(|i| 1.0 + adj[i].iter().filter(|&&a| a).count() as f64).collect();
            let d = x_full[0].len();
            let input: Dense = (0..n)
                .map(|i| {
                    let mut row = vec![0.0; d];
                    for j in 0..n {
                        if adj[i][j] {
                            let c = 1.0 / (deg[i] * deg[j]).sqrt();
                            for k in 0..d {
                                row[k] += c * x_full[j][k];
                            }
                        }
                    }
                    for k in 0..x_st[i].len() {
                        row[k] += x_st[i][k] / deg[i];
                    }
                    row
                })
                .collect();
            let h = mlp(p, "gcn", &input, true);
            mlp(p, "head", &h, false)
        }
        _ => attention_dense(p, cfg, inst, &adj, &x_full, &x_st),
    };
    pred.into_iter().map(|r| r[0]).collect()
}

fn attention_dense(p: &ParamSet, cfg: &ModelConfig, inst: &Instance, adj: &[Vec<bool>], x_full: &Dense, x_st: &Dense) -> Dense {
    let n = x_full.len();
    let heads = cfg.heads;
    let v = cfg.variant;
    let full_src = matches!(v, Variant::Gat | Variant::StganEam);
    let time_slot = matches!(v, Variant::Stgan | Variant::StganNoTop);
    let z = mlp(p, "feat.full", x_full, true);
    let zs = mlp(p, "feat.st", x_st, true);
    let mask: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| j == i || adj[i][j]).collect()).collect();
    let nodes = &inst.nodes;
    let dt = |i: usize, j: usize| (nodes[i].t_norm - nodes[j].t_norm).abs();
    let l_res = inst.graph.config().l_res;
    let dist = |i: usize, j: usize| {
        if i == j { 0.0 } else { location_distance((nodes[i].lon, nodes[i].lat), (nodes[j].lon, nodes[j].lat)) / l_res }
    };

    // coefficients[h][i][j] from target rows `tgt` and source rows `src` (self column uses `self_rep`)
    let coefficients = |layer: usize, tgt: &Dense, src: &Dense, self_rep: &Dense| -> Vec<Dense> {
        let a_dst = param(p, &format!("attn.{layer}.dst"));
        let a_src = param(p, &format!("attn.{layer}.src"));
        let a_dt = if time_slot { Some(param(p, &format!("attn.{layer}.dt"))) } else { None };
        let dot = |row: &[f64], w: &Dense, h: usize| row.iter().zip(w).map(|(x, wr)| x * wr[h]).sum::<f64>();
        (0..heads)
            .map(|h| {
                let scores: Dense = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                if !mask[i][j] {
                                    return 0.0;
                                }
                                let s_src = if j == i { dot(&self_rep[i], &a_src, h) } else { dot(&src[j], &a_src, h) };
                                let mut s = dot(&tgt[i], &a_dst, h) + s_src;
                                if let Some(w) = &a_dt {
                                    s += dt(i, j) * w[0][h];
                                }
                                s = leaky(s, cfg.leaky_slope);
                                if v == Variant::StganEam {
                                    let g = cfg.eam_gamma;
                                    s *= (-g * dist(i, j)).exp() * (-g * dt(i, j)).exp();
                                }
                                s
                            })
                            .collect()
                    })
                    .collect();
                masked_softmax(&scores, &mask)
            })
            .collect()
    };

    let score_src = if full_src { &z } else { &zs };
    let coef = coefficients(0, &zs, score_src, &zs);
    // parents contribute full representations, the diagonal the spatial-temporal one
    let aggregate = |a: &[Dense], parents: &Dense, self_rep: &Dense| -> Dense {
        (0..n)
            .map(|i| {
                let mut out = Vec::new();
                for ah in a {
                    let mut acc = vec![0.0; parents[0].len()];
                    for j in 0..n {
                        let row = if j == i { &self_rep[i] } else { &parents[j] };
                        for (o, x) in acc.iter_mut().zip(row) {
                            *o += ah[i][j] * x;
                        }
                    }
                    out.extend(acc);
                }
                out
            })
            .collect()
    };
    let mut agg = aggregate(&coef, &z, &zs);
    for l in 1..cfg.layers {
        let wo = param(p, &format!("conv.{}.wo", l - 1));
        let bo = param(p, &format!("conv.{}.bo", l - 1));
        let h: Dense = matmul(&agg, &wo)
            .into_iter()
            .map(|r| r.iter().zip(&bo[0]).map(|(a, b)| elu(a + b)).collect())
            .collect();
        let c = if cfg.reuse_layer1_attention { coef.clone() } else { coefficients(l, &h, &h, &h) };
        agg = aggregate(&c, &h, &h);
    }
    mlp(p, "head", &agg, false)
}
