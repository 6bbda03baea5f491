//! Graph attention regressor and its comparison variants, built on the tape.
//!
//! Every variant reads a node's own record only through its spatial-temporal
//! slots; full features enter solely through parent edges. Predictions are in
//! standardized target units.

mod batch;
mod forward;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ST_DIM;
use crate::ndgrad::{glorot, GradError, Matrix, ParamSet, Tape, Var};
use crate::stgraph::GraphConfig;

pub use batch::GraphBatch;
pub use forward::{forward, ForwardOutput};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("model config: {0}")]
    Config(String),
    #[error("features for node {0} missing or misaligned")]
    Features(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Stgan,
    StganNoTop,
    StganEam,
    StganNoTd,
    TopMlp,
    Gcn,
    GcnMlp,
    Gat,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Stgan,
        Variant::TopMlp,
        Variant::Gcn,
        Variant::GcnMlp,
        Variant::Gat,
        Variant::StganNoTop,
        Variant::StganEam,
        Variant::StganNoTd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Stgan => "stgan",
            Variant::StganNoTop => "stgan_no_top",
            Variant::StganEam => "stgan_eam",
            Variant::StganNoTd => "stgan_no_td",
            Variant::TopMlp => "top_mlp",
            Variant::Gcn => "gcn",
            Variant::GcnMlp => "gcn_mlp",
            Variant::Gat => "gat",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Uses learned attention over graph edges.
    pub fn is_attention(self) -> bool {
        matches!(self, Variant::Stgan | Variant::StganNoTop | Variant::StganEam | Variant::StganNoTd | Variant::Gat)
    }

    /// Attention scores read parents' full representations instead of their spatial-temporal ones.
    pub fn scores_full_source(self) -> bool {
        matches!(self, Variant::Gat | Variant::StganEam)
    }

    pub fn uses_time_slot(self) -> bool {
        matches!(self, Variant::Stgan | Variant::StganNoTop)
    }

    /// Graph construction this variant trains on.
    pub fn graph_config(self, base: &GraphConfig) -> GraphConfig {
        match self {
            Variant::StganNoTop => GraphConfig { k: 0, ..*base },
            _ => *base,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| ModelError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Hidden widths of both feature extractors before the final width `hidden`.
    pub extractor_hidden: Vec<usize>,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub leaky_slope: f64,
    /// Hidden widths of the output head.
    pub head_hidden: Vec<usize>,
    /// Decay rate for the explicit-attention variant.
    pub eam_gamma: f64,
    /// Layers after the first reuse the first layer's coefficients.
    pub reuse_layer1_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Stgan,
            extractor_hidden: vec![128],
            hidden: 256,
            heads: 5,
            layers: 1,
            leaky_slope: 0.2,
            head_hidden: vec![256],
            eam_gamma: 1.0,
            reuse_layer1_attention: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.hidden == 0 || self.extractor_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return bad("widths must be positive".into());
        }
        if self.heads == 0 || self.layers == 0 {
            return bad(format!("heads={} and layers={} must be >= 1", self.heads, self.layers));
        }
        if !self.leaky_slope.is_finite() || !(self.eam_gamma >= 0.0) {
            return bad("leaky_slope must be finite and eam_gamma non-negative".into());
        }
        Ok(())
    }

    fn extractor_widths(&self, input: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.extractor_hidden);
        w.push(self.hidden);
        w
    }

    fn head_widths(&self, input: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.head_hidden);
        w.push(1);
        w
    }

    fn attention_layers(&self) -> usize {
        if self.reuse_layer1_attention {
            1
        } else {
            self.layers
        }
    }
}

fn add_mlp<R: Rng + ?Sized>(p: &mut ParamSet, prefix: &str, widths: &[usize], rng: &mut R) -> Result<(), GradError> {
    for (k, w) in widths.windows(2).enumerate() {
        p.insert(format!("{prefix}.{k}.w"), glorot(w[0], w[1], rng))?;
        p.insert(format!("{prefix}.{k}.b"), Matrix::zeros(1, w[1]))?;
    }
    Ok(())
}

/// Glorot weights, zero biases. `input_dim` is the width of `x_full`.
pub fn init_params<R: Rng + ?Sized>(config: &ModelConfig, input_dim: usize, rng: &mut R) -> Result<ParamSet, ModelError> {
    config.validate()?;
    let mut p = ParamSet::new();
    let (h, heads) = (config.hidden, config.heads);
    match config.variant {
        v if v.is_attention() => {
            add_mlp(&mut p, "feat.full", &config.extractor_widths(input_dim), rng)?;
            add_mlp(&mut p, "feat.st", &config.extractor_widths(ST_DIM), rng)?;
            for l in 0..config.attention_layers() {
                p.insert(format!("attn.{l}.dst"), glorot(h, heads, rng))?;
                p.insert(format!("attn.{l}.src"), glorot(h, heads, rng))?;
                if v.uses_time_slot() {
                    p.insert(format!("attn.{l}.dt"), glorot(1, heads, rng))?;
                }
            }
            for l in 0..config.layers - 1 {
                p.insert(format!("conv.{l}.wo"), glorot(heads * h, h, rng))?;
                p.insert(format!("conv.{l}.bo"), Matrix::zeros(1, h))?;
            }
            add_mlp(&mut p, "head", &config.head_widths(heads * h), rng)?;
        }
        Variant::TopMlp => {
            let mut widths = vec![ST_DIM + input_dim + 1];
            widths.extend(&config.extractor_hidden);
            widths.push(h);
            widths.push(1);
            add_mlp(&mut p, "mlp", &widths, rng)?;
        }
        Variant::Gcn => {
            add_mlp(&mut p, "gcn", &[input_dim, h], rng)?;
            add_mlp(&mut p, "head", &[h, 1], rng)?;
        }
        Variant::GcnMlp => {
            add_mlp(&mut p, "gcn", &[input_dim, h], rng)?;
            add_mlp(&mut p, "head", &config.head_widths(h), rng)?;
        }
        _ => unreachable!("attention variants handled above"),
    }
    Ok(p)
}

/// Parameter variables recorded on a tape, looked up by name.
#[derive(Clone, Copy)]
pub struct Bound<'a> {
    pub params: &'a ParamSet,
    pub vars: &'a [Var],
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.params
            .id(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| GradError::UnknownParam(name.to_string()).into())
    }

    fn layers_with_prefix(&self, prefix: &str) -> usize {
        (0..).take_while(|k| self.params.id(&format!("{prefix}.{k}.w")).is_some()).count()
    }
}

/// Standardized predictions for every batch row, without gradients.
pub fn predict(params: &ParamSet, config: &ModelConfig, batch: &GraphBatch) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward(&mut tape, &Bound { params, vars: &vars }, batch, config)?;
    Ok(tape.value(out.pred).as_slice().to_vec())
}

/// Attention coefficient matrices (`E x H`, one per layer) for `batch`.
pub fn attention(params: &ParamSet, config: &ModelConfig, batch: &GraphBatch) -> Result<Vec<Matrix>, ModelError> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward(&mut tape, &Bound { params, vars: &vars }, batch, config)?;
    Ok(out.attention.iter().map(|&v| tape.value(v).clone()).collect())
}
