//! Hold-out studies over a gather dataset.
//!
//! Runs execute one after another so wall times are not disturbed by
//! concurrent work. Every run is seeded explicitly, so results do not depend
//! on execution order.

use std::time::Instant;

use faultsketch_core::{
    cross_validate, derive_seed, mae, sigma_heuristic, train_exact_multi, train_nystrom_multi,
    CvScore, FeatureMatrix, KernelConfig, KrrModel, TrainOptions, TrainReport,
};
use faultsketch_seismic::load_dataset;

use crate::config::{ExperimentConfig, VariantKind};
use crate::error::{Error, Result};
use crate::report::{
    EvalReport, HyperEntry, ReportHeader, ReportRow, STATUS_OK, STATUS_SKIPPED_CEILING, STATUS_SKIPPED_SIZE,
};
use crate::split::holdout_split;

/// Features and both label columns.
#[derive(Clone, Debug)]
pub struct Samples {
    pub features: FeatureMatrix,
    pub offsets: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target(&self, name: &str) -> &[f64] {
        match name {
            "offset" => &self.offsets,
            "angle" => &self.angles,
            other => panic!("unknown target {other}"),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            features: self.features.select_rows(idx)?,
            offsets: idx.iter().map(|&i| self.offsets[i]).collect(),
            angles: idx.iter().map(|&i| self.angles[i]).collect(),
        })
    }

    pub fn head(&self, n: usize) -> Result<Self> {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

/// Loads the first `limit` samples of the configured dataset.
pub fn load_samples(cfg: &ExperimentConfig, limit: Option<usize>) -> Result<Samples> {
    let ds = load_dataset(&cfg.dataset, limit)?;
    Ok(Samples {
        offsets: ds.offsets(),
        angles: ds.angles(),
        features: ds.features,
    })
}

#[derive(Clone, Debug)]
pub struct Split {
    pub n: usize,
    pub train: Samples,
    pub test: Samples,
}

/// Hold-out split of the first `n` samples.
pub fn split_head(all: &Samples, n: usize, cfg: &ExperimentConfig) -> Result<Split> {
    if n > all.len() {
        return Err(Error::Config(format!(
            "requested {n} samples but the dataset holds {}",
            all.len()
        )));
    }
    let (tr, te) = holdout_split(n, cfg.train_fraction, cfg.seed)?;
    Ok(Split {
        n,
        train: all.select(&tr)?,
        test: all.select(&te)?,
    })
}

pub fn train_options(cfg: &ExperimentConfig) -> TrainOptions {
    TrainOptions {
        exact_ceiling: cfg.exact_ceiling,
        standardize: cfg.standardize,
        center_targets: cfg.center_targets,
    }
}

/// One training run covering every configured target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunSpec {
    Exact,
    Nystrom { s: usize, seed: u64 },
}

impl RunSpec {
    pub fn variant(self) -> VariantKind {
        match self {
            RunSpec::Exact => VariantKind::Exact,
            RunSpec::Nystrom { .. } => VariantKind::Nystrom,
        }
    }

    pub fn landmarks(self) -> Option<usize> {
        match self {
            RunSpec::Exact => None,
            RunSpec::Nystrom { s, .. } => Some(s),
        }
    }
}

/// Hyperparameters in force for one variant and landmark count.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    pub config: KernelConfig,
    /// Variant the values apply to; `None` when shared by every run.
    pub variant: Option<VariantKind>,
    pub s: Option<usize>,
    /// Dataset size at which they were chosen; `None` when fixed by
    /// configuration.
    pub tuned_at_n: Option<usize>,
    /// Landmarks per fold during cross-validation; `None` for exact solves.
    pub cv_landmarks: Option<usize>,
    /// Combined score per grid point when tuned.
    pub scores: Vec<(f64, f64, f64)>,
}

impl Hyper {
    pub fn entry(&self) -> HyperEntry {
        HyperEntry {
            variant: self.variant.map_or("all", |v| v.tag()).into(),
            s: self.s,
            lambda: self.config.lambda,
            sigma: self.config.sigma,
            tuned_at_n: self.tuned_at_n,
            cv_landmarks: self.cv_landmarks,
        }
    }
}

/// Cross-validates `(lambda, sigma)` for one run kind on `train`.
///
/// Exact runs are tuned with exact solves and sketched runs with `s`
/// landmarks per fold, so each is scored with the predictor it will use.
/// With `hyper.shared` set, `spec` is ignored and one pass with
/// `hyper.cv_sketch` landmarks serves every run. Fixed values in the
/// configuration bypass the search.
///
/// The chosen grid point minimizes the sum over targets of cross-validated
/// MAE relative to that target's best MAE. Ties go to the larger lambda,
/// then the larger sigma.
pub fn resolve_hyper(cfg: &ExperimentConfig, train: &Samples, n: usize, spec: RunSpec) -> Result<Hyper> {
    let h = &cfg.hyper;
    let (variant, s, cv_landmarks) = if h.shared {
        (None, None, h.cv_sketch)
    } else {
        (Some(spec.variant()), spec.landmarks(), spec.landmarks())
    };
    if let (Some(lambda), Some(sigma)) = (h.lambda, h.sigma) {
        return Ok(Hyper {
            config: KernelConfig::new(sigma, lambda)?,
            variant,
            s,
            tuned_at_n: None,
            cv_landmarks: None,
            scores: Vec::new(),
        });
    }
    let sigma_grid = match h.sigma {
        Some(s) => vec![s],
        None => {
            let j = h.heuristic_subsample.min(train.len());
            let base = sigma_heuristic(&train.features, j, derive_seed(cfg.seed, 1))?;
            h.sigma_scales.iter().map(|f| f * base).collect()
        }
    };
    let lambda_grid = h.lambda.map_or_else(|| h.lambda_grid.clone(), |l| vec![l]);
    let opts = train_options(cfg);
    let mut tables: Vec<Vec<CvScore>> = Vec::new();
    for name in cfg.target.names() {
        let res = cross_validate(
            &train.features,
            train.target(name),
            &lambda_grid,
            &sigma_grid,
            h.folds,
            cv_landmarks,
            derive_seed(cfg.seed, 2),
            &opts,
        )?;
        tables.push(res.scores);
    }
    let mut combined: Vec<(f64, f64, f64)> = tables[0]
        .iter()
        .map(|s| (s.lambda, s.sigma, 0.0))
        .collect();
    for table in &tables {
        let best = table.iter().map(|s| s.mean_mae).fold(f64::INFINITY, f64::min);
        for (c, s) in combined.iter_mut().zip(table) {
            c.2 += if best > 0.0 { s.mean_mae / best } else { s.mean_mae };
        }
    }
    let (lambda, sigma, _) = combined
        .iter()
        .copied()
        .min_by(|a, b| {
            a.2.total_cmp(&b.2)
                .then(b.0.total_cmp(&a.0))
                .then(b.1.total_cmp(&a.1))
        })
        .expect("grids are non-empty");
    Ok(Hyper {
        config: KernelConfig::new(sigma, lambda)?,
        variant,
        s,
        tuned_at_n: Some(n),
        cv_landmarks,
        scores: combined,
    })
}

/// Hyperparameters resolved so far in a study. Each run kind is tuned the
/// first time it is trained and reused afterwards.
#[derive(Clone, Debug, Default)]
pub struct Tuning {
    pub resolved: Vec<Hyper>,
}

impl Tuning {
    pub fn get(&mut self, cfg: &ExperimentConfig, split: &Split, spec: RunSpec) -> Result<KernelConfig> {
        let key = |h: &Hyper| {
            cfg.hyper.shared || (h.variant == Some(spec.variant()) && h.s == spec.landmarks())
        };
        if let Some(h) = self.resolved.iter().find(|h| key(h)) {
            return Ok(h.config);
        }
        let h = resolve_hyper(cfg, &split.train, split.n, spec)?;
        let config = h.config;
        self.resolved.push(h);
        Ok(config)
    }

    pub fn entries(&self) -> Vec<HyperEntry> {
        self.resolved.iter().map(Hyper::entry).collect()
    }
}

pub struct TrainedRun {
    pub models: Vec<KrrModel>,
    pub report: TrainReport,
}

pub fn train_run(
    cfg: &ExperimentConfig,
    train: &Samples,
    hyper: &KernelConfig,
    spec: RunSpec,
) -> Result<TrainedRun> {
    let ys: Vec<&[f64]> = cfg.target.names().iter().map(|n| train.target(n)).collect();
    let opts = train_options(cfg);
    let (models, report) = match spec {
        RunSpec::Exact => train_exact_multi(&train.features, &ys, hyper, &opts)?,
        RunSpec::Nystrom { s, seed } => {
            train_nystrom_multi(&train.features, &ys, hyper, s, seed, cfg.eigen_cutoff, &opts)?
        }
    };
    Ok(TrainedRun { models, report })
}

fn skipped_rows(cfg: &ExperimentConfig, split: &Split, spec: RunSpec, status: &str) -> Vec<ReportRow> {
    let seed = match spec {
        RunSpec::Exact => None,
        RunSpec::Nystrom { seed, .. } => Some(seed),
    };
    cfg.target
        .names()
        .iter()
        .map(|t| ReportRow {
            target: (*t).into(),
            variant: spec.variant().tag().into(),
            n: split.n,
            n_train: split.train.len(),
            s: spec.landmarks(),
            seed,
            lambda: None,
            sigma: None,
            mae: None,
            train_seconds: None,
            predict_seconds: None,
            status: status.into(),
        })
        .collect()
}

/// Tunes if needed, trains and scores one run, or records why it was
/// skipped.
pub fn evaluate_run(
    cfg: &ExperimentConfig,
    split: &Split,
    tuning: &mut Tuning,
    spec: RunSpec,
) -> Result<Vec<ReportRow>> {
    let n_train = split.train.len();
    match spec {
        RunSpec::Exact if n_train > cfg.exact_ceiling => {
            return Ok(skipped_rows(cfg, split, spec, STATUS_SKIPPED_CEILING))
        }
        RunSpec::Nystrom { s, .. } if s > n_train => {
            return Ok(skipped_rows(cfg, split, spec, STATUS_SKIPPED_SIZE))
        }
        _ => {}
    }
    let hyper = tuning.get(cfg, split, spec)?;
    let run = train_run(cfg, &split.train, &hyper, spec)?;
    let mut rows = skipped_rows(cfg, split, spec, STATUS_OK);
    for (row, model) in rows.iter_mut().zip(&run.models) {
        let start = Instant::now();
        let pred = model.predict_batch(&split.test.features)?;
        row.predict_seconds = Some(start.elapsed().as_secs_f64());
        row.mae = Some(mae(split.test.target(&row.target), &pred)?);
        row.train_seconds = Some(run.report.wall_time_train);
        row.lambda = Some(hyper.lambda);
        row.sigma = Some(hyper.sigma);
    }
    Ok(rows)
}

fn header(cfg: &ExperimentConfig, study: &str, tuning: &Tuning, notes: Vec<String>) -> ReportHeader {
    let mut notes = notes;
    let h = &cfg.hyper;
    notes.push(if h.lambda.is_some() && h.sigma.is_some() {
        "lambda and sigma fixed by configuration".into()
    } else if h.shared {
        format!(
            "lambda and sigma chosen once by {}-fold cross-validation and shared by every run",
            h.folds
        )
    } else {
        format!(
            "lambda and sigma chosen by {}-fold cross-validation per variant and landmark count, \
             at the first dataset size that variant ran, then held fixed",
            h.folds
        )
    });
    notes.push("train_seconds covers one training call fitting every target".into());
    ReportHeader {
        study: study.into(),
        dataset: cfg.dataset.display().to_string(),
        train_fraction: cfg.train_fraction,
        seed: cfg.seed,
        hyper: tuning.entries(),
        notes,
    }
}

fn largest_n(cfg: &ExperimentConfig) -> usize {
    *cfg.n_list.last().expect("validated non-empty")
}

/// MAE and timing for every dataset size, variant, landmark count and seed.
pub fn run_accuracy_sweep(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let all = load_samples(cfg, Some(largest_n(cfg)))?;
    let mut tuning = Tuning::default();
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let split = split_head(&all, n, cfg)?;
        for &variant in &cfg.variants {
            match variant {
                VariantKind::Exact => rows.extend(evaluate_run(cfg, &split, &mut tuning, RunSpec::Exact)?),
                VariantKind::Nystrom => {
                    for &s in &cfg.s_list {
                        for &seed in &cfg.seeds {
                            let spec = RunSpec::Nystrom { s, seed };
                            rows.extend(evaluate_run(cfg, &split, &mut tuning, spec)?);
                        }
                    }
                }
            }
        }
    }
    Ok(EvalReport::new(header(cfg, "sweep-n", &tuning, Vec::new()), rows))
}

/// Nystrom MAE per landmark count and seed at the largest configured size,
/// plus an exact reference run when the exact variant is configured.
pub fn run_s_sweep(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let n = largest_n(cfg);
    let all = load_samples(cfg, Some(n))?;
    let split = split_head(&all, n, cfg)?;
    let mut tuning = Tuning::default();
    let mut rows = Vec::new();
    if cfg.variants.contains(&VariantKind::Exact) {
        rows.extend(evaluate_run(cfg, &split, &mut tuning, RunSpec::Exact)?);
    }
    for &s in &cfg.s_list {
        for &seed in &cfg.seeds {
            rows.extend(evaluate_run(cfg, &split, &mut tuning, RunSpec::Nystrom { s, seed })?);
        }
    }
    Ok(EvalReport::new(header(cfg, "sweep-s", &tuning, Vec::new()), rows))
}

/// Sketch seeds of the randomness study.
pub fn realization_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.realizations as u64)
        .map(|k| derive_seed(cfg.seed, 1000 + k))
        .collect()
}

/// `realizations` sketches at fixed data, size and hyperparameters, using the
/// first landmark count of `s_list`.
pub fn run_randomness_study(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let n = largest_n(cfg);
    let s = cfg.s_list[0];
    let all = load_samples(cfg, Some(n))?;
    let split = split_head(&all, n, cfg)?;
    let mut tuning = Tuning::default();
    let mut rows = Vec::new();
    for seed in realization_seeds(cfg) {
        rows.extend(evaluate_run(cfg, &split, &mut tuning, RunSpec::Nystrom { s, seed })?);
    }
    let notes = vec![format!(
        "{} sketch realizations at n = {n}, s = {s}; spread = (max - min) / median",
        cfg.realizations
    )];
    Ok(EvalReport::new(header(cfg, "randomness", &tuning, notes), rows))
}
