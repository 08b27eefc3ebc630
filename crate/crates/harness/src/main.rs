use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faultsketch_core::{load_model, mae, save_model};
use faultsketch_harness::{
    load_samples, read_csv, render_markdown, resolve_hyper, run_accuracy_sweep,
    run_randomness_study, run_s_sweep, split_head, train_run, Error, ExperimentConfig, Result,
    RunSpec, Target, VariantKind,
};
use faultsketch_seismic::build_dataset;
use serde_json::json;

#[derive(Parser)]
#[command(name = "faultsketch", version, about = "Fault offset and dip regression from seismic gathers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a gather dataset.
    GenData(Common),
    /// Train models on the hold-out training split and save them.
    Train(Common),
    /// Predict the hold-out test split with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// MAE and training time as the dataset grows.
    SweepN(Common),
    /// MAE as the number of landmarks grows.
    SweepS(Common),
    /// MAE spread over independent sketches.
    Randomness(Common),
    /// Render a CSV report as Markdown tables.
    Report {
        #[command(flatten)]
        common: Common,
        /// CSV report to render; defaults to the configured report path.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Landmark count; replaces the configured list.
    #[arg(long)]
    s: Option<usize>,
    /// Dataset size; replaces the configured list.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    target: Option<Target>,
    #[arg(long, value_enum)]
    variant: Option<VariantKind>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.generate.seed = seed;
        }
        if let Some(s) = self.s {
            cfg.s_list = vec![s];
        }
        if let Some(n) = self.n {
            cfg.n_list = vec![n];
            cfg.generate.count = n;
        }
        if let Some(t) = self.target {
            cfg.target = t;
        }
        if let Some(v) = self.variant {
            cfg.variants = vec![v];
        }
        if let Some(f) = self.train_fraction {
            cfg.train_fraction = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.dataset.clone());
    let manifest = build_dataset(&cfg.generate.dataset_config(), &out)?;
    print_json(&json!({
        "dataset": out,
        "count": manifest.count,
        "d": manifest.d,
        "total_values": manifest.total_values,
        "shards": manifest.shards.len(),
    }));
    Ok(())
}

fn model_path(dir: &Path, target: &str) -> PathBuf {
    dir.join(format!("{target}.krr"))
}

fn train(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let n = *cfg.n_list.last().expect("validated");
    let all = load_samples(&cfg, Some(n))?;
    let split = split_head(&all, n.min(all.len()), &cfg)?;
    let spec = match cfg.variants[0] {
        VariantKind::Exact => RunSpec::Exact,
        VariantKind::Nystrom => RunSpec::Nystrom {
            s: cfg.s_list[0],
            seed: cfg.seeds[0],
        },
    };
    let hyper = resolve_hyper(&cfg, &split.train, split.n, spec)?;
    let run = train_run(&cfg, &split.train, &hyper.config, spec)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("models"));
    fs::create_dir_all(&dir)?;
    let mut saved = Vec::new();
    for (name, model) in cfg.target.names().iter().zip(&run.models) {
        let path = model_path(&dir, name);
        save_model(model, &path)?;
        saved.push(json!({"target": name, "path": path}));
    }
    print_json(&json!({
        "models": saved,
        "train": {
            "variant": run.report.variant,
            "n": run.report.n,
            "d": run.report.d,
            "s": run.report.s,
            "rank": run.report.rank,
            "lambda": run.report.lambda,
            "sigma": run.report.sigma,
            "wall_time_train": run.report.wall_time_train,
        },
        "tuned_at_n": hyper.tuned_at_n,
    }));
    Ok(())
}

fn predict(common: &Common, model: &Path) -> Result<()> {
    let cfg = common.config()?;
    let target = match cfg.target {
        Target::Both => {
            return Err(Error::Config(
                "predict needs --target offset or --target angle".into(),
            ))
        }
        t => t.names()[0],
    };
    let n = *cfg.n_list.last().expect("validated");
    let all = load_samples(&cfg, Some(n))?;
    let split = split_head(&all, n.min(all.len()), &cfg)?;
    let model = load_model(model)?;
    let pred = model.predict_batch(&split.test.features)?;
    let truth = split.test.target(target);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "truth", "prediction"])?;
    for (i, (t, p)) in truth.iter().zip(&pred).enumerate() {
        w.write_record([i.to_string(), t.to_string(), p.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if let Some(out) = &common.out {
        fs::write(out, &bytes)?;
    }
    print_json(&json!({
        "target": target,
        "rows": pred.len(),
        "mae": mae(truth, &pred)?,
        "predictions": common.out,
    }));
    Ok(())
}

fn study(common: &Common, run: fn(&ExperimentConfig) -> Result<faultsketch_harness::EvalReport>) -> Result<()> {
    let cfg = common.config()?;
    let report = run(&cfg)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.report.clone());
    let (csv_path, json_path) = report.write(&out)?;
    print_json(&json!({
        "csv": csv_path,
        "json": json_path,
        "rows": report.rows.len(),
        "hyper": report.header.hyper,
        "summaries": report.summaries,
    }));
    Ok(())
}

fn report(common: &Common, input: Option<&PathBuf>) -> Result<()> {
    let cfg = common.config()?;
    let input = input.cloned().unwrap_or_else(|| cfg.report.clone());
    let (header, rows) = read_csv(&input)?;
    let md = render_markdown(&header, &rows);
    match &common.out {
        Some(out) => fs::write(out, md)?,
        None => print!("{md}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Train(c) => train(c),
        Command::Predict { common, model } => predict(common, model),
        Command::SweepN(c) => study(c, run_accuracy_sweep),
        Command::SweepS(c) => study(c, run_s_sweep),
        Command::Randomness(c) => study(c, run_randomness_study),
        Command::Report { common, input } => report(common, input.as_ref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
