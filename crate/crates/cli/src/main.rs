//! `stgan`: data generation, graph building, training, evaluation, single
//! predictions and experiment matrices. Every command writes its artifacts
//! under `--out` together with `manifest.json`, a sha256 listing of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use stgan::dataset::{generate_synthetic, parse_time, write_records, TimeFormat};
use stgan::eval::roc_csv;
use stgan::experiment::{
    checkpoint_of, evaluate_checkpoint, matrix_csv, prepare, restore, run_matrix, train_prepared, DataSource,
    EvalSplit, MatrixAxis, RunConfig,
};
use stgan::stgraph::GraphNode;
use stgan::trainer::{load_checkpoint, loss_csv, write_checkpoint, Checkpoint, Predictor, Query, Strategy};

#[derive(Parser, Debug)]
#[command(name = "stgan", version, about = "Spatiotemporal graph autoregression for pavement deterioration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the built-in synthetic benchmark when no config file is given;
    /// overrides the file's seed otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// `dotted.path=value` override, repeatable; values parse as JSON.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.seed) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_json(&text)?
            }
            (None, Some(seed)) => RunConfig::synthetic(seed),
            (None, None) => bail!("give --config or --seed"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let cfg = cfg.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Data configuration; defaults to the one embedded in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CheckpointArgs {
    fn load(&self) -> Result<(Checkpoint, RunConfig)> {
        let ck = load_checkpoint(&self.checkpoint).with_context(|| format!("loading {}", self.checkpoint.display()))?;
        let cfg = match &self.config {
            Some(path) => RunConfig::from_json(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
            None => serde_json::from_value(ck.run_config.clone()).context("checkpoint carries no usable run config")?,
        };
        let cfg = cfg.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok((ck, cfg))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic record CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "days")]
        time_format: TimeFormatArg,
    },
    /// Build the training graph and write it as JSON.
    BuildGraph {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes a checkpoint and the loss trace.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint; writes a report JSON and per-class ROC curves.
    Evaluate {
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[arg(long, default_value = "ignore")]
        strategy: Strategy,
        #[arg(long, default_value = "test")]
        split: EvalSplit,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the target at one location and time.
    Predict {
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[arg(long)]
        location: u64,
        /// Days since 1970-01-01, or an ISO-8601 date/datetime.
        #[arg(long)]
        time: String,
        /// Accepted for interface symmetry; a single uncommitted query is unaffected by it.
        #[arg(long, default_value = "ignore")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a comparison matrix over one or more axes.
    Matrix {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated subset of variant, heads, layers, env_mask, generalization.
        #[arg(long, value_delimiter = ',', required = true)]
        axes: Vec<MatrixAxis>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum TimeFormatArg {
    Days,
    Iso8601,
}

impl From<TimeFormatArg> for TimeFormat {
    fn from(t: TimeFormatArg) -> Self {
        match t {
            TimeFormatArg::Days => TimeFormat::Days,
            TimeFormatArg::Iso8601 => TimeFormat::Iso8601,
        }
    }
}

/// Collects artifacts for one output directory and writes the manifest last.
struct Output {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Output {
    fn create(out: Option<&Path>, cfg: Option<&RunConfig>) -> Result<Self> {
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| cfg.and_then(|c| c.out_dir.clone()).map(PathBuf::from))
            .context("give --out or set out_dir in the config")?;
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, hashes: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.hashes.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self) -> Result<()> {
        let manifest = serde_json::json!({ "files": self.hashes });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.dir.join("manifest.json"), text).context("writing manifest")?;
        Ok(())
    }
}

fn gen_data(cfg: &RunConfig, out: Option<&Path>, format: TimeFormat) -> Result<()> {
    let DataSource::Synthetic(syn) = &cfg.data else { bail!("gen-data needs a synthetic data source") };
    let records = generate_synthetic(syn)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &records, format)?;
    let mut o = Output::create(out, Some(cfg))?;
    let path = o.write("data.csv", &buf)?;
    o.write_json("run_config.json", &cfg.to_json())?;
    o.finish()?;
    eprintln!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn build_graph_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let prep = prepare(cfg)?;
    let fit: Vec<GraphNode> = prep.nodes[prep.fit_range()].iter().map(GraphNode::from).collect();
    let graph_cfg = cfg.model.variant.graph_config(&cfg.graph);
    let graph = stgan::stgraph::build_graph(&fit[..prep.sizes.init], &fit[prep.sizes.init..], &graph_cfg)?;
    let mut o = Output::create(out, Some(cfg))?;
    o.write_json("graph.json", &graph.to_json())?;
    o.finish()?;
    eprintln!("graph: {} nodes, {} edges", graph.len(), graph.num_edges());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let prep = prepare(cfg)?;
    if prep.skipped_rows > 0 {
        eprintln!("skipped {} malformed rows", prep.skipped_rows);
    }
    let (_, outcome, timings) = train_prepared(cfg, &prep)?;
    let ck = checkpoint_of(cfg, &outcome);
    let mut o = Output::create(out, Some(cfg))?;
    o.write("checkpoint.bin", &write_checkpoint(&ck)?)?;
    o.write("loss.csv", loss_csv(&outcome.loss_trace).as_bytes())?;
    o.write_json("run_config.json", &cfg.to_json())?;
    o.finish()?;
    eprintln!(
        "final train MAE {:.6}; graph {:.3}s, train {:.3}s",
        outcome.final_train_mae, timings.graph_s, timings.train_s
    );
    Ok(())
}

fn evaluate_cmd(args: &CheckpointArgs, strategy: Strategy, split: EvalSplit, out: &Path) -> Result<()> {
    let (ck, cfg) = args.load()?;
    let start = std::time::Instant::now();
    let report = evaluate_checkpoint(&ck, &cfg, strategy, split)?;
    let truth: Vec<_> = report.pairs.iter().map(|p| stgan::eval::classify_level(p.y)).collect::<Result<_, _>>()?;
    let predicted: Vec<f64> = report.pairs.iter().map(|p| p.y_hat).collect();
    let mut o = Output::create(Some(out), None)?;
    o.write_json("report.json", &report)?;
    o.write("roc.csv", roc_csv(&truth, &predicted).as_bytes())?;
    o.finish()?;
    eprintln!(
        "MAE {:.6} MSE {:.6} RMSE {:.6}; inference {:.3}s",
        report.metrics.mae,
        report.metrics.mse,
        report.metrics.rmse,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn parse_query_time(s: &str) -> Result<f64> {
    parse_time(s, TimeFormat::Days)
        .or_else(|_| parse_time(s, TimeFormat::Iso8601))
        .map_err(|e| anyhow::anyhow!("--time: {e}"))
}

fn predict_cmd(args: &CheckpointArgs, location: u64, time: &str, strategy: Strategy, out: Option<&Path>) -> Result<()> {
    let t = parse_query_time(time)?;
    let (ck, cfg) = args.load()?;
    let r = restore(&ck, &cfg)?;
    let mut predictor = Predictor::new(&ck.model, r.graph.clone(), r.fit())?.allow_past(true);
    let y = predictor.predict_one(&Query::at(location, t), false)?;
    let result = serde_json::json!({ "location_id": location, "time": t, "strategy": strategy, "prediction": y });
    println!("{}", serde_json::to_string(&result)?);
    if let Some(dir) = out {
        let mut o = Output::create(Some(dir), None)?;
        o.write_json("prediction.json", &result)?;
        o.finish()?;
    }
    Ok(())
}

fn matrix_cmd(cfg: &RunConfig, axes: &[MatrixAxis], workers: usize, out: Option<&Path>) -> Result<()> {
    let rows = run_matrix(cfg, axes, workers)?;
    let mut o = Output::create(out, Some(cfg))?;
    o.write("matrix.csv", matrix_csv(&rows).as_bytes())?;
    o.finish()?;
    for r in &rows {
        eprintln!("{:<28} train MAE {:.4}  test MAE {:.4}", r.cell, r.train_mae, r.test_mae);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData { config, out, time_format } => gen_data(&config.load()?, out.as_deref(), (*time_format).into()),
        Command::BuildGraph { config, out } => build_graph_cmd(&config.load()?, out.as_deref()),
        Command::Train { config, out } => train_cmd(&config.load()?, out.as_deref()),
        Command::Evaluate { checkpoint, strategy, split, out } => evaluate_cmd(checkpoint, *strategy, *split, out),
        Command::Predict { checkpoint, location, time, strategy, out } => {
            predict_cmd(checkpoint, *location, time, *strategy, out.as_deref())
        }
        Command::Matrix { config, axes, workers, out } => matrix_cmd(&config.load()?, axes, *workers, out.as_deref()),
    }
}
