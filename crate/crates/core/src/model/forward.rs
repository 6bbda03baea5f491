use crate::ndgrad::{Matrix, Tape, Var};

use super::{Bound, GraphBatch, ModelConfig, ModelError, Variant};

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `n x 1` standardized predictions, one per batch row.
    pub pred: Var,
    /// Per attention layer, the `E x H` normalized coefficients.
    pub attention: Vec<Var>,
    /// Concatenated multi-head aggregation fed to the output head.
    pub aggregate: Option<Var>,
}

fn linear(tape: &mut Tape, p: &Bound, prefix: &str, k: usize, x: Var) -> Result<Var, ModelError> {
    let w = p.get(&format!("{prefix}.{k}.w"))?;
    let b = p.get(&format!("{prefix}.{k}.b"))?;
    let y = tape.matmul(x, w)?;
    Ok(tape.add_row(y, b)?)
}

/// Stacked affine layers with ELU after each; the last one stays linear unless `act_last`.
fn mlp(tape: &mut Tape, p: &Bound, prefix: &str, x: Var, act_last: bool) -> Result<Var, ModelError> {
    let depth = p.layers_with_prefix(prefix);
    let mut h = x;
    for k in 0..depth {
        h = linear(tape, p, prefix, k, h)?;
        if act_last || k + 1 < depth {
            h = tape.elu(h);
        }
    }
    Ok(h)
}

struct Scores<'a> {
    cfg: &'a ModelConfig,
    batch: &'a GraphBatch,
    decay: Option<Var>,
}

impl Scores<'_> {
    /// Normalized coefficients for one layer. `target_rep` feeds the receiving end;
    /// `source_table` has `2n` rows (see [`GraphBatch`]) or `n` rows indexed by `sources_st`.
    fn coefficients(
        &self,
        tape: &mut Tape,
        p: &Bound,
        layer: usize,
        target_rep: Var,
        source_table: Var,
    ) -> Result<Var, ModelError> {
        let b = self.batch;
        let dst = tape.matmul(target_rep, p.get(&format!("attn.{layer}.dst"))?)?;
        let src = tape.matmul(source_table, p.get(&format!("attn.{layer}.src"))?)?;
        let src_index =
            if tape.value(source_table).rows() == 2 * b.len() { b.sources.clone() } else { b.sources_st.clone() };
        let s_dst = tape.gather_rows(dst, b.targets.clone())?;
        let s_src = tape.gather_rows(src, src_index)?;
        let mut s = tape.add(s_dst, s_src)?;
        if self.cfg.variant.uses_time_slot() {
            let dt = tape.constant(b.dt_norm.clone());
            let term = tape.matmul(dt, p.get(&format!("attn.{layer}.dt"))?)?;
            s = tape.add(s, term)?;
        }
        s = tape.leaky_relu(s, self.cfg.leaky_slope);
        if let Some(decay) = self.decay {
            s = tape.mul(s, decay)?;
        }
        Ok(tape.segment_softmax(s, b.segments.clone())?)
    }
}

/// Full forward pass over `batch`; every row gets a prediction.
pub fn forward(tape: &mut Tape, p: &Bound, batch: &GraphBatch, cfg: &ModelConfig) -> Result<ForwardOutput, ModelError> {
    let n = batch.len();
    match cfg.variant {
        v if v.is_attention() => attention_forward(tape, p, batch, cfg),
        Variant::TopMlp => {
            let x = tape.constant(batch.top_input.clone());
            Ok(ForwardOutput { pred: mlp(tape, p, "mlp", x, false)?, attention: Vec::new(), aggregate: None })
        }
        Variant::Gcn | Variant::GcnMlp => {
            let x = tape.constant(batch.gcn_input.clone());
            let h = mlp(tape, p, "gcn", x, true)?;
            let pred = mlp(tape, p, "head", h, false)?;
            debug_assert_eq!(tape.value(pred).rows(), n);
            Ok(ForwardOutput { pred, attention: Vec::new(), aggregate: None })
        }
        _ => unreachable!("attention variants handled above"),
    }
}

fn attention_forward(
    tape: &mut Tape,
    p: &Bound,
    batch: &GraphBatch,
    cfg: &ModelConfig,
) -> Result<ForwardOutput, ModelError> {
    let n = batch.len();
    let heads = cfg.heads;
    let xf = tape.constant(batch.x_full.clone());
    let xs = tape.constant(batch.x_st.clone());
    let z_full = mlp(tape, p, "feat.full", xf, true)?;
    let z_st = mlp(tape, p, "feat.st", xs, true)?;

    let decay = if cfg.variant == Variant::StganEam {
        let g = cfg.eam_gamma;
        let e = batch.num_edges();
        let mut m = Matrix::zeros(e, heads);
        for (i, (&d, &t)) in batch.dist_norm.iter().zip(batch.dt_norm.as_slice()).enumerate() {
            m.row_mut(i).fill((-g * d).exp() * (-g * t).exp());
        }
        Some(tape.constant(m))
    } else {
        None
    };
    let scores = Scores { cfg, batch, decay };

    // parents contribute full representations, the self edge the spatial-temporal one
    let values_table = tape.concat_rows(&[z_full, z_st])?;
    let score_table = if cfg.variant.scores_full_source() { values_table } else { z_st };
    let coef = scores.coefficients(tape, p, 0, z_st, score_table)?;
    let values = tape.gather_rows(values_table, batch.sources.clone())?;
    let mut agg = tape.weighted_scatter(coef, values, batch.targets.clone(), n)?;
    let mut attention = vec![coef];

    for l in 1..cfg.layers {
        let wo = p.get(&format!("conv.{}.wo", l - 1))?;
        let bo = p.get(&format!("conv.{}.bo", l - 1))?;
        let mapped = tape.matmul(agg, wo)?;
        let z = tape.add_row(mapped, bo)?;
        let z = tape.elu(z);
        let coef_l = if cfg.reuse_layer1_attention { coef } else { scores.coefficients(tape, p, l, z, z)? };
        let values = tape.gather_rows(z, batch.sources_st.clone())?;
        agg = tape.weighted_scatter(coef_l, values, batch.targets.clone(), n)?;
        attention.push(coef_l);
    }

    let pred = mlp(tape, p, "head", agg, false)?;
    Ok(ForwardOutput { pred, attention, aggregate: Some(agg) })
}

