use serde::{Deserialize, Serialize};

use crate::dataset::{NodeId, ProcessedNode};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Time,
    Longitude,
    Latitude,
}

impl Axis {
    pub fn value(self, n: &ProcessedNode) -> f64 {
        match self {
            Axis::Time => n.t_raw,
            Axis::Longitude => n.lon,
            Axis::Latitude => n.lat,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" => Ok(Axis::Time),
            "longitude" => Ok(Axis::Longitude),
            "latitude" => Ok(Axis::Latitude),
            _ => Err(EvalError::Split(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationSplit {
    pub axis: Axis,
    pub k: usize,
    pub s: usize,
    pub train: Vec<NodeId>,
    pub removed: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

/// Sorts by `axis` (ties by node id): the first `k` train, the next `s` are dropped, the rest test.
pub fn generalization_split(
    nodes: &[ProcessedNode],
    axis: Axis,
    k: usize,
    s: usize,
) -> Result<GeneralizationSplit, EvalError> {
    if k + s >= nodes.len() {
        return Err(EvalError::Split(format!("k + s = {} leaves no test nodes out of {}", k + s, nodes.len())));
    }
    let mut order: Vec<(f64, NodeId)> = nodes.iter().map(|n| (axis.value(n), n.node_id)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ids: Vec<NodeId> = order.into_iter().map(|o| o.1).collect();
    Ok(GeneralizationSplit {
        axis,
        k,
        s,
        train: ids[..k].to_vec(),
        removed: ids[k..k + s].to_vec(),
        test: ids[k + s..].to_vec(),
    })
}
