//! Experiment driver for fault-parameter regression: hold-out evaluation,
//! dataset-size and landmark-count sweeps, sketch randomness studies and
//! CSV/JSON/Markdown reporting.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod split;

pub use config::{ExperimentConfig, GenerateConfig, HyperConfig, Profile, Target, VariantKind};
pub use error::{Error, Result};
pub use experiments::{
    evaluate_run, load_samples, realization_seeds, resolve_hyper, run_accuracy_sweep,
    run_randomness_study, run_s_sweep, split_head, train_options, train_run, Hyper, RunSpec,
    Samples, Split, Tuning,
};
pub use report::{read_csv, render_markdown, EvalReport, HyperEntry, ReportHeader, ReportRow, SpreadSummary};
pub use split::holdout_split;
