//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use faultsketch_core::DEFAULT_EIGEN_CUTOFF;
use faultsketch_core::DEFAULT_EXACT_CEILING;
use faultsketch_seismic::DatasetConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Offset,
    Angle,
    Both,
}

impl Target {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            Target::Offset => &["offset"],
            Target::Angle => &["angle"],
            Target::Both => &["offset", "angle"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Exact,
    Nystrom,
}

impl VariantKind {
    pub fn tag(self) -> &'static str {
        match self {
            VariantKind::Exact => "exact",
            VariantKind::Nystrom => "nystrom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Standard,
}

/// Dataset generation settings for `gen-data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub profile: Profile,
    pub count: usize,
    pub seed: u64,
    pub shard_size: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Desk,
            count: 2000,
            seed: 2024,
            shard_size: None,
        }
    }
}

impl GenerateConfig {
    pub fn dataset_config(&self) -> DatasetConfig {
        let mut cfg = match self.profile {
            Profile::Desk => DatasetConfig::desk(self.count, self.seed),
            Profile::Standard => DatasetConfig::standard(self.count, self.seed),
        };
        if let Some(s) = self.shard_size {
            cfg.shard_size = s;
        }
        cfg
    }
}

/// Kernel width and regularizer, either fixed or chosen by cross-validation.
///
/// A missing `lambda` is searched over `lambda_grid`; a missing `sigma` over
/// `sigma_scales` times the median-distance heuristic on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperConfig {
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub sigma_scales: Vec<f64>,
    pub folds: usize,
    /// Tune once and share the result across variants and landmark counts.
    /// Otherwise each variant and landmark count is tuned separately.
    pub shared: bool,
    /// Landmarks per fold for a shared tuning pass; exact solves when absent.
    pub cv_sketch: Option<usize>,
    /// Samples used by the width heuristic.
    pub heuristic_subsample: usize,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            sigma: None,
            lambda_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            sigma_scales: vec![0.25, 0.5, 1.0, 2.0],
            folds: 3,
            shared: false,
            cv_sketch: None,
            heuristic_subsample: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: PathBuf,
    pub train_fraction: f64,
    /// Master seed for splits and tuning.
    pub seed: u64,
    pub target: Target,
    pub variants: Vec<VariantKind>,
    /// Landmark counts, ascending.
    pub s_list: Vec<usize>,
    /// Dataset sizes for the accuracy sweep; the largest is used by the
    /// other studies.
    pub n_list: Vec<usize>,
    /// Sketch seeds for the sweeps.
    pub seeds: Vec<u64>,
    /// Number of sketch realizations in the randomness study.
    pub realizations: usize,
    pub hyper: HyperConfig,
    pub exact_ceiling: usize,
    pub standardize: bool,
    pub center_targets: bool,
    pub eigen_cutoff: f64,
    pub report: PathBuf,
    pub generate: GenerateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: PathBuf::from("data/desk"),
            train_fraction: 0.75,
            seed: 0,
            target: Target::Both,
            variants: vec![VariantKind::Exact, VariantKind::Nystrom],
            s_list: vec![100, 200],
            n_list: vec![500, 1000, 2000],
            seeds: vec![0, 1, 2, 3, 4],
            realizations: 20,
            hyper: HyperConfig::default(),
            exact_ceiling: DEFAULT_EXACT_CEILING,
            standardize: false,
            center_targets: true,
            eigen_cutoff: DEFAULT_EIGEN_CUTOFF,
            report: PathBuf::from("reports/report.csv"),
            generate: GenerateConfig::default(),
        }
    }
}

fn positive_finite(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        if self.s_list.is_empty() || self.s_list.contains(&0) {
            return bad("s_list must be non-empty and positive".into());
        }
        if self.s_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("s_list must be strictly ascending".into());
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be non-empty and strictly ascending".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.realizations < 2 {
            return bad("realizations must be at least 2".into());
        }
        let h = &self.hyper;
        if h.lambda.is_none() && (h.lambda_grid.is_empty() || !h.lambda_grid.iter().all(|&l| positive_finite(l))) {
            return bad("lambda_grid must hold positive values when lambda is not fixed".into());
        }
        if h.sigma.is_none() && (h.sigma_scales.is_empty() || !h.sigma_scales.iter().all(|&s| positive_finite(s))) {
            return bad("sigma_scales must hold positive values when sigma is not fixed".into());
        }
        if h.lambda.is_some_and(|l| !positive_finite(l)) || h.sigma.is_some_and(|s| !positive_finite(s)) {
            return bad("fixed lambda and sigma must be positive".into());
        }
        if (h.lambda.is_none() || h.sigma.is_none()) && h.folds < 2 {
            return bad("tuning needs at least 2 folds".into());
        }
        if h.heuristic_subsample < 2 {
            return bad("heuristic_subsample must be at least 2".into());
        }
        if !(self.eigen_cutoff >= 0.0 && self.eigen_cutoff < 1.0) {
            return bad("eigen_cutoff must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"schema_version": 1, "s_list": [25, 50]}"#).unwrap();
        assert_eq!(cfg.s_list, vec![25, 50]);
        assert_eq!(cfg.train_fraction, 0.75);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig {
            s_list: vec![200, 100],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.s_list = vec![100];
        cfg.train_fraction = 1.0;
        assert!(cfg.validate().is_err());
        cfg.train_fraction = 0.75;
        cfg.schema_version = 9;
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
