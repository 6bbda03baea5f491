use super::{GradError, ParamSet, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the max relative error.
    pub tolerance: f64,
    /// Denominator floor. Central differences carry roundoff near eps·|loss|/step
    /// (about 1e-11 at the default step), so entries whose true gradient is ~0
    /// are judged on absolute error against `tolerance * floor` instead.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, floor: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error over its entries)`.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn eval_loss<F>(forward: &F, params: &ParamSet) -> Result<(Tape, Vec<Var>, Var), GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let loss = forward(&mut tape, &vars)?;
    if !tape.value(loss).is_finite() {
        return Err(GradError::NonFinite(tape.first_non_finite().unwrap_or("loss")));
    }
    Ok((tape, vars, loss))
}

/// Compares tape gradients with central finite differences for every entry.
pub fn grad_check<F>(forward: F, params: &ParamSet, config: GradCheckConfig) -> Result<GradCheckReport, GradError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
{
    let (tape, vars, loss) = eval_loss(&forward, params)?;
    let analytic = params.collect_grads(&tape.backward(loss)?, &vars);

    let mut probe = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    for (slot, name) in params.names().iter().enumerate() {
        let mut worst = 0.0f64;
        for k in 0..params.values()[slot].len() {
            let orig = params.values()[slot].as_slice()[k];
            probe.values_mut()[slot].as_mut_slice()[k] = orig + config.step;
            let (t_plus, _, l_plus) = eval_loss(&forward, &probe)?;
            probe.values_mut()[slot].as_mut_slice()[k] = orig - config.step;
            let (t_minus, _, l_minus) = eval_loss(&forward, &probe)?;
            probe.values_mut()[slot].as_mut_slice()[k] = orig;

            let numeric = (t_plus.value(l_plus).as_slice()[0] - t_minus.value(l_minus).as_slice()[0])
                / (2.0 * config.step);
            let a = analytic[slot].as_slice()[k];
            let denom = a.abs().max(numeric.abs()).max(config.floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
        per_param.push((name.clone(), worst));
    }
    let max_rel_err = per_param.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport { per_param, max_rel_err, tolerance: config.tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{glorot, Matrix, Segments};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(5, 3, &mut rng);
        let mut ps = ParamSet::new();
        ps.insert("w", random(3, 2, &mut rng)).unwrap();
        let report = grad_check(
            |t, v| {
                let xc = t.constant(x.clone());
                let y = t.matmul(xc, v[0])?;
                Ok(t.sum(y))
            },
            &ps,
            GradCheckConfig { tolerance: 1e-9, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn two_layer_elu_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(6, 4, &mut rng);
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ps = ParamSet::new();
        ps.insert("w1", glorot(4, 5, &mut rng)).unwrap();
        ps.insert("b1", random(1, 5, &mut rng)).unwrap();
        ps.insert("w2", glorot(5, 1, &mut rng)).unwrap();
        let report = grad_check(
            |t, v| {
                let xc = t.constant(x.clone());
                let h = t.matmul(xc, v[0])?;
                let h = t.add_row(h, v[1])?;
                let h = t.elu(h);
                let out = t.matmul(h, v[2])?;
                t.mae(out, (0..6).collect::<Vec<_>>().into(), y.clone().into())
            },
            &ps,
            GradCheckConfig { tolerance: 1e-5, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    /// Every primitive against finite differences on inputs drawn from [-2, 2].
    #[test]
    fn each_primitive_matches_finite_differences() {
        use std::sync::Arc;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = ParamSet::new();
        ps.insert("a", random(4, 3, &mut rng)).unwrap();
        ps.insert("b", random(3, 2, &mut rng)).unwrap();
        ps.insert("c", random(4, 3, &mut rng)).unwrap();
        ps.insert("r", random(1, 3, &mut rng)).unwrap();
        let weights = random(4, 2, &mut rng);
        type Build = fn(&mut Tape, &[Var], &Matrix) -> Result<Var, GradError>;
        let cases: Vec<(&str, Build)> = vec![
            ("matmul", |t, v, w| {
                let m = t.matmul(v[0], v[1])?;
                let wc = t.constant(w.clone());
                let p = t.mul(m, wc)?;
                Ok(t.sum(p))
            }),
            ("add", |t, v, _| {
                let s = t.add(v[0], v[2])?;
                let s = t.mul(s, s)?;
                Ok(t.sum(s))
            }),
            ("add_row", |t, v, _| {
                let s = t.add_row(v[0], v[3])?;
                let s = t.mul(s, s)?;
                Ok(t.sum(s))
            }),
            ("scale_exp", |t, v, _| {
                let s = t.scale(v[0], 0.7);
                let e = t.exp(s);
                Ok(t.sum(e))
            }),
            ("elu", |t, v, _| {
                let e = t.elu(v[0]);
                let e = t.mul(e, v[2])?;
                Ok(t.sum(e))
            }),
            ("leaky_relu", |t, v, _| {
                let e = t.leaky_relu(v[0], 0.2);
                let e = t.mul(e, v[2])?;
                Ok(t.sum(e))
            }),
            ("concat", |t, v, _| {
                let c = t.concat_cols(&[v[0], v[2]])?;
                let c2 = t.concat_rows(&[v[0], v[2]])?;
                let c = t.mul(c, c)?;
                let a = t.sum(c);
                let c2 = t.exp(c2);
                let b = t.sum(c2);
                t.add(a, b)
            }),
            ("gather_softmax_scatter", |t, v, w| {
                let g = t.gather_rows(v[0], Arc::from(vec![0, 2, 2, 1, 3]))?;
                let scores = t.matmul(g, v[1])?;
                let seg = Arc::new(Segments::from_lengths(&[2, 3]).unwrap());
                let a = t.segment_softmax(scores, seg)?;
                let vals = t.gather_rows(v[2], Arc::from(vec![1, 0, 3, 2, 2]))?;
                let agg = t.weighted_scatter(a, vals, Arc::from(vec![0, 0, 1, 1, 1]), 2)?;
                let wc = t.constant(Matrix::from_vec(2, 6, w.as_slice().iter().chain(w.as_slice()).copied().take(12).collect()).unwrap());
                let p = t.mul(agg, wc)?;
                Ok(t.sum(p))
            }),
        ];
        for (name, build) in cases {
            let report = grad_check(|t, v| build(t, v, &weights), &ps, GradCheckConfig::default()).unwrap();
            assert!(report.passed(), "{name}: {report:?}");
        }
    }

    #[test]
    fn non_finite_loss_names_the_op() {
        let mut ps = ParamSet::new();
        ps.insert("p", Matrix::scalar(1000.0)).unwrap();
        let err = grad_check(
            |t, v| {
                let e = t.exp(v[0]);
                Ok(t.sum(e))
            },
            &ps,
            GradCheckConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, GradError::NonFinite("exp"));
    }
}
