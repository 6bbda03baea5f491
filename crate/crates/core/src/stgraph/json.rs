use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EdgeOrigin, GraphConfig, GraphError, GraphNode, ParentEdge, StGraph};
use crate::dataset::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub lon: f64,
    pub lat: f64,
    pub t_raw: f64,
    pub t_norm: f64,
    pub is_init: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub from: NodeId,
    pub to: NodeId,
    pub origin: EdgeOrigin,
    pub dt_norm: f64,
    pub dist_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub config: GraphConfig,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
}

impl StGraph {
    pub fn to_json(&self) -> GraphJson {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeJson {
                id: n.id,
                lon: n.lon,
                lat: n.lat,
                t_raw: n.t_raw,
                t_norm: n.t_norm,
                is_init: self.is_init(i),
            })
            .collect();
        let edges = (0..self.len())
            .flat_map(|c| {
                self.parents(c).iter().zip(self.annotations_of(c)).map(move |(e, a)| EdgeJson {
                    from: self.nodes[e.parent].id,
                    to: self.nodes[c].id,
                    origin: e.origin,
                    dt_norm: a.dt_norm,
                    dist_m: e.dist_m,
                })
            })
            .collect();
        GraphJson { config: self.config, nodes, edges }
    }

    pub fn from_json(json: &GraphJson) -> Result<StGraph, GraphError> {
        json.config.validate()?;
        let init_count = json.nodes.iter().take_while(|n| n.is_init).count();
        if init_count == 0 {
            return Err(GraphError::EmptyInit);
        }
        let mut positions = HashMap::with_capacity(json.nodes.len());
        let mut nodes = Vec::with_capacity(json.nodes.len());
        for (i, n) in json.nodes.iter().enumerate() {
            if positions.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateId(n.id));
            }
            let g = GraphNode { id: n.id, lon: n.lon, lat: n.lat, t_raw: n.t_raw, t_norm: n.t_norm };
            g.check_finite()?;
            nodes.push(g);
        }
        let mut parents: Vec<Vec<ParentEdge>> = vec![Vec::new(); nodes.len()];
        for e in &json.edges {
            let from = *positions.get(&e.from).ok_or(GraphError::UnknownNode(e.from))?;
            let to = *positions.get(&e.to).ok_or(GraphError::UnknownNode(e.to))?;
            parents[to].push(ParentEdge {
                parent: from,
                origin: e.origin,
                dt_raw: (nodes[to].t_raw - nodes[from].t_raw).abs(),
                dist_m: e.dist_m,
            });
        }
        for ps in &mut parents {
            ps.sort_by_key(|e| e.parent);
        }
        let latest = nodes[init_count..].iter().fold(f64::NEG_INFINITY, |a, b| a.max(b.t_raw));
        Ok(StGraph { config: json.config, nodes, parents, init_count, positions, latest })
    }
}
