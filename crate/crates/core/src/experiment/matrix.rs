use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::EnvFeature;
use crate::eval::Axis;
use crate::model::Variant;

use super::{run, run_generalization, ExperimentError, RunConfig, RunResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixAxis {
    Variant,
    Heads,
    Layers,
    EnvMask,
    Generalization,
}

impl std::str::FromStr for MatrixAxis {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| ExperimentError::Config(format!("unknown matrix axis {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub axis: MatrixAxis,
    pub cell: String,
    pub variant: Variant,
    pub heads: usize,
    pub layers: usize,
    pub train_mae: f64,
    pub test_mae: f64,
    pub test_mse: f64,
    pub test_rmse: f64,
    pub graph_s: f64,
    pub train_s: f64,
    pub infer_s: f64,
}

enum Job {
    Run(RunConfig),
    Generalize(RunConfig, Axis, usize, usize),
}

fn cells(cfg: &RunConfig, axis: MatrixAxis, n_records: usize) -> Vec<(String, Job)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c
    };
    match axis {
        MatrixAxis::Variant => Variant::ALL
            .into_iter()
            .map(|v| (v.name().to_string(), Job::Run(with(&|c| c.model.variant = v))))
            .collect(),
        MatrixAxis::Heads => {
            [1, 5, 10].into_iter().map(|h| (format!("heads={h}"), Job::Run(with(&|c| c.model.heads = h)))).collect()
        }
        MatrixAxis::Layers => {
            [1, 2, 3].into_iter().map(|l| (format!("layers={l}"), Job::Run(with(&|c| c.model.layers = l)))).collect()
        }
        MatrixAxis::EnvMask => std::iter::once(("none".to_string(), Job::Run(cfg.clone())))
            .chain(EnvFeature::ALL.into_iter().map(|f| {
                (format!("mask={}", f.column()), Job::Run(with(&|c| c.schema.masked_env = vec![f])))
            }))
            .collect(),
        MatrixAxis::Generalization => {
            let (k, s) = (n_records * 6 / 10, n_records / 10);
            [Axis::Time, Axis::Longitude, Axis::Latitude]
                .into_iter()
                .map(|a| {
                    let name = serde_json::to_value(a).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    (format!("{name}:k={k},s={s}"), Job::Generalize(cfg.clone(), a, k, s))
                })
                .collect()
        }
    }
}

fn row(axis: MatrixAxis, cell: String, cfg: &RunConfig, r: &RunResult) -> MatrixRow {
    MatrixRow {
        axis,
        cell,
        variant: cfg.model.variant,
        heads: cfg.model.heads,
        layers: cfg.model.layers,
        train_mae: r.outcome.final_train_mae,
        test_mae: r.report.metrics.mae,
        test_mse: r.report.metrics.mse,
        test_rmse: r.report.metrics.rmse,
        graph_s: r.timings.graph_s,
        train_s: r.timings.train_s,
        infer_s: r.timings.infer_s,
    }
}

/// Runs every cell of every axis; `workers > 1` runs cells concurrently.
/// Rows come back in cell order regardless of scheduling.
pub fn run_matrix(cfg: &RunConfig, axes: &[MatrixAxis], workers: usize) -> Result<Vec<MatrixRow>, ExperimentError> {
    cfg.validate()?;
    let n_records = super::load_data(cfg)?.0.len();
    let jobs: Vec<(MatrixAxis, String, Job)> =
        axes.iter().flat_map(|&a| cells(cfg, a, n_records).into_iter().map(move |(c, j)| (a, c, j))).collect();
    let results: Mutex<Vec<Option<Result<MatrixRow, ExperimentError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((axis, cell, job)) = jobs.get(i) else { break };
        let out = match job {
            Job::Run(c) => run(c).map(|r| row(*axis, cell.clone(), c, &r)),
            Job::Generalize(c, a, k, s) => run_generalization(c, *a, *k, *s).map(|r| row(*axis, cell.clone(), c, &r)),
        };
        results.lock().expect("no poisoned workers")[i] = Some(out);
    };
    std::thread::scope(|s| {
        for _ in 1..workers.max(1) {
            s.spawn(work);
        }
        work();
    });
    results.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every job ran")).collect()
}

pub fn matrix_csv(rows: &[MatrixRow]) -> String {
    let mut out = String::from("axis,cell,variant,heads,layers,train_mae,test_mae,test_mse,test_rmse,graph_s,train_s,infer_s\n");
    for r in rows {
        let axis = serde_json::to_value(r.axis).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        out.push_str(&format!(
            "{axis},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3}\n",
            r.cell, r.variant, r.heads, r.layers, r.train_mae, r.test_mae, r.test_mse, r.test_rmse, r.graph_s, r.train_s, r.infer_s
        ));
    }
    out
}
