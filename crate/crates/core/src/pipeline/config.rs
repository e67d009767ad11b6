use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentConfig, Strategy};
use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::nn::{NetworkConfig, TrainConfig};
use crate::spectra::CohortConfig;

/// Training-set construction for the primary model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// Plain network on the (oversampled) training set.
    None,
    Same,
    Other,
    Both,
    Noise,
}

impl Arm {
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Arm::None => None,
            Arm::Same => Some(Strategy::Same),
            Arm::Other => Some(Strategy::Other),
            Arm::Both => Some(Strategy::Both),
            Arm::Noise => Some(Strategy::Noise),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy() {
            Some(s) => s.fmt(f),
            None => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::argument(format!("unknown strategy {s:?}")))
    }
}

/// Reference labels for test-set scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    /// Hidden ground truth where the data carries it, else the observed label.
    #[default]
    True,
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Alpha,
    Factor,
    MaxEpoch,
    Strategy,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "factor" => Ok(Axis::Factor),
            "max_epoch" | "E" | "e" => Ok(Axis::MaxEpoch),
            "strategy" => Ok(Axis::Strategy),
            _ => Err(Error::argument(format!(
                "unknown sweep axis {s:?} (expected alpha, factor, max_epoch or strategy)"
            ))),
        }
    }
}

/// Values per axis; an empty list keeps the base configuration's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub factor: Vec<usize>,
    pub max_epoch: Vec<usize>,
    pub strategy: Vec<Arm>,
}

impl SweepGrid {
    pub fn default_values(axis: Axis) -> SweepGrid {
        let mut g = SweepGrid::default();
        match axis {
            Axis::Alpha => g.alpha = (0..10).map(|i| (5 + 10 * i) as f64 / 100.0).collect(),
            Axis::Factor => g.factor = (0..=10).collect(),
            Axis::MaxEpoch => g.max_epoch = (1..=10).collect(),
            Axis::Strategy => g.strategy = vec![Arm::None, Arm::Same, Arm::Other, Arm::Both, Arm::Noise],
        }
        g
    }

    /// Keeps only `axis`, falling back to its default values when unset.
    pub fn restricted(&self, axis: Axis) -> SweepGrid {
        let mut g = SweepGrid::default();
        match axis {
            Axis::Alpha => g.alpha = self.alpha.clone(),
            Axis::Factor => g.factor = self.factor.clone(),
            Axis::MaxEpoch => g.max_epoch = self.max_epoch.clone(),
            Axis::Strategy => g.strategy = self.strategy.clone(),
        }
        if g.is_empty() {
            SweepGrid::default_values(axis)
        } else {
            g
        }
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.factor.is_empty() && self.max_epoch.is_empty() && self.strategy.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cohort: CohortConfig,
    /// Spectra CSV to use instead of generating `cohort`.
    pub dataset: Option<PathBuf>,
    pub folds: usize,
    /// Seed for the fold and validation splits, shared by every run seed.
    pub split_seed: u64,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Arm>,
    pub network: NetworkConfig,
    pub distill: DistillConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub sweep: Option<SweepGrid>,
    pub validation_fraction: f64,
    pub eval_against: EvalTarget,
    pub persist_checkpoints: bool,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: CohortConfig::default(),
            dataset: None,
            folds: 10,
            split_seed: 0,
            seeds: vec![0, 1],
            strategies: vec![Arm::Both],
            network: NetworkConfig::default(),
            distill: DistillConfig::default(),
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
            sweep: None,
            validation_fraction: 0.1,
            eval_against: EvalTarget::True,
            persist_checkpoints: true,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() {
            self.cohort.validate()?;
        }
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.strategies.is_empty() {
            return Err(Error::config("strategies must not be empty"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must lie in [0, 1)"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        self.network.validate()?;
        self.distill.validate()?;
        self.augment.validate()?;
        self.train.validate()?;
        if let Some(g) = &self.sweep {
            if let Some(a) = g.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::config(format!("sweep alpha {a} outside [0, 1]")));
            }
            if g.max_epoch.contains(&0) {
                return Err(Error::config("sweep max_epoch values must be at least 1"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration with execution-only fields cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.jobs = 1;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// One combination of the swept parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub strategy: Arm,
    pub alpha: f64,
    pub factor: usize,
    pub max_epoch: usize,
}

impl Point {
    /// Directory-safe name; the plain arm ignores the other axes.
    pub fn label(&self) -> String {
        match self.strategy {
            Arm::None => "none".to_string(),
            Arm::Noise => format!("noise_f{}_e{}", self.factor, self.max_epoch),
            s => format!("{s}_a{}_f{}_e{}", self.alpha, self.factor, self.max_epoch),
        }
    }

    pub(crate) fn needs_distillation(&self) -> bool {
        self.strategy != Arm::None
    }
}

impl ExperimentConfig {
    /// Points of a plain experiment: one per configured strategy.
    pub fn base_points(&self) -> Vec<Point> {
        self.strategies
            .iter()
            .map(|&strategy| Point {
                strategy,
                alpha: self.augment.alpha,
                factor: self.augment.factor,
                max_epoch: self.distill.max_epoch,
            })
            .collect()
    }

    /// Cartesian product of the grid with the base values.
    pub fn grid_points(&self, grid: &SweepGrid) -> Vec<Point> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let oru = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let strategies = if grid.strategy.is_empty() {
            self.strategies.clone()
        } else {
            grid.strategy.clone()
        };
        let mut out = Vec::new();
        for &strategy in &strategies {
            for &alpha in &or(&grid.alpha, self.augment.alpha) {
                for &factor in &oru(&grid.factor, self.augment.factor) {
                    for &max_epoch in &oru(&grid.max_epoch, self.distill.max_epoch) {
                        out.push(Point {
                            strategy,
                            alpha,
                            factor,
                            max_epoch,
                        });
                    }
                }
            }
        }
        out
    }
}
