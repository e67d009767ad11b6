//! Harvesting of high-confidence samples from the early epochs of a
//! distillation network trained directly on the noisy labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict_proba, Network, NetworkConfig, TrainConfig, Trainer};
use crate::rng;
use crate::spectra::{Class, Dataset, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub theta: f64,
    pub max_epoch: usize,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            theta: 0.99,
            max_epoch: 5,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.5 && self.theta <= 1.0) {
            return Err(Error::config(format!("theta must lie in (0.5, 1], got {}", self.theta)));
        }
        if self.max_epoch == 0 {
            return Err(Error::argument("max_epoch must be at least 1"));
        }
        self.network.validate()?;
        self.train.validate()
    }
}

/// The set of certain samples with per-epoch provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertainSet {
    /// Sorted, deduplicated dataset indices.
    pub member_indices: Vec<usize>,
    pub first_certain_epoch: BTreeMap<usize, usize>,
    /// Size of each epoch's own collection.
    pub per_epoch_counts: Vec<usize>,
    /// Size of the union after each epoch.
    pub cumulative_counts: Vec<usize>,
}

impl CertainSet {
    pub fn empty() -> Self {
        CertainSet {
            member_indices: Vec::new(),
            first_certain_epoch: BTreeMap::new(),
            per_epoch_counts: Vec::new(),
            cumulative_counts: Vec::new(),
        }
    }

    /// Builds the union from per-epoch collections (epoch 1 first).
    pub fn from_epochs(collections: &[Vec<usize>]) -> Self {
        let mut set = CertainSet::empty();
        for c in collections {
            set.push_epoch(c);
        }
        set
    }

    pub fn push_epoch(&mut self, collected: &[usize]) {
        let epoch = self.per_epoch_counts.len() + 1;
        self.per_epoch_counts.push(collected.len());
        for &i in collected {
            self.first_certain_epoch.entry(i).or_insert(epoch);
        }
        self.member_indices = self.first_certain_epoch.keys().copied().collect();
        self.cumulative_counts.push(self.member_indices.len());
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn epochs(&self) -> usize {
        self.per_epoch_counts.len()
    }

    /// The set as it stood after epoch `e`.
    pub fn truncated(&self, e: usize) -> CertainSet {
        let e = e.min(self.epochs());
        let first: BTreeMap<usize, usize> = self
            .first_certain_epoch
            .iter()
            .filter(|(_, &ep)| ep <= e)
            .map(|(&i, &ep)| (i, ep))
            .collect();
        CertainSet {
            member_indices: first.keys().copied().collect(),
            first_certain_epoch: first,
            per_epoch_counts: self.per_epoch_counts[..e].to_vec(),
            cumulative_counts: self.cumulative_counts[..e].to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Indices whose largest class probability reaches `theta` (inclusive).
pub fn certain_from_probs(probs: &[[f64; 2]], theta: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p[0].max(p[1]) >= theta)
        .map(|(i, _)| i)
        .collect()
}

/// Label-blind certainty sweep of `model` over every spectrum of `dataset`.
pub fn collect_certain(model: &Network, dataset: &Dataset, theta: f64) -> Result<Vec<usize>> {
    let probs = predict_proba(model, &dataset.spectra)?;
    Ok(certain_from_probs(&probs, theta))
}

/// Sweep restricted to `candidates`; returns dataset indices.
pub fn collect_certain_among(
    model: &Network,
    dataset: &Dataset,
    candidates: &[usize],
    theta: f64,
) -> Result<Vec<usize>> {
    let spectra: Vec<Spectrum> = candidates.iter().map(|&i| dataset.spectra[i].clone()).collect();
    let probs = predict_proba(model, &spectra)?;
    Ok(certain_from_probs(&probs, theta)
        .into_iter()
        .map(|k| candidates[k])
        .collect())
}

pub struct DistillOutcome {
    pub certain: CertainSet,
    /// The distillation network after the last epoch.
    pub network: Network,
    /// Network state after each epoch, when requested.
    pub snapshots: Vec<Network>,
}

/// Trains a fresh network on `dataset` for `max_epoch` epochs, sweeping the
/// real (non-synthetic) spectra after every epoch.
pub fn run_distillation(
    dataset: &Dataset,
    config: &DistillConfig,
    seed: u64,
    keep_snapshots: bool,
) -> Result<DistillOutcome> {
    config.validate()?;
    dataset.validate()?;
    if !dataset.has_both_classes() {
        return Err(Error::argument("distillation needs both classes"));
    }
    let net = Network::new(config.network.clone(), rng::derive_seed(seed, "distill-init", 0))?;
    let mut train_cfg = config.train.clone();
    train_cfg.seed = rng::derive_seed(seed, "distill-train", 0);
    let mut trainer = Trainer::new(net, train_cfg)?;
    let candidates: Vec<usize> = (0..dataset.len()).filter(|&i| !dataset.spectra[i].synthetic).collect();
    let mut certain = CertainSet::empty();
    let mut snapshots = Vec::new();
    for _ in 0..config.max_epoch {
        let loss = trainer.train_epoch(dataset)?;
        let got = collect_certain_among(&trainer.network, dataset, &candidates, config.theta)?;
        certain.push_epoch(&got);
        info!(
            "distill epoch {}: loss {loss:.5}, {} certain, {} cumulative",
            trainer.epochs_done(),
            got.len(),
            certain.len()
        );
        if keep_snapshots {
            snapshots.push(trainer.network.clone());
        }
    }
    Ok(DistillOutcome {
        certain,
        network: trainer.network,
        snapshots,
    })
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64).floor() as isize
        } else {
            0
        };
        counts[b.clamp(0, bins as isize - 1) as usize] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShift {
    pub class: Class,
    pub bin_edges: Vec<f64>,
    pub full_counts: Vec<usize>,
    pub distilled_counts: Vec<usize>,
    pub full_median: f64,
    /// `None` when the certain set holds no member of this class.
    pub distilled_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceShiftReport {
    pub classes: Vec<ClassShift>,
}

impl DistanceShiftReport {
    /// True when both classes have distilled medians at least as large as
    /// the full-set medians.
    pub fn shifted_outward(&self) -> bool {
        self.classes
            .iter()
            .all(|c| c.distilled_median.is_some_and(|m| m >= c.full_median))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,set,bin_lo,bin_hi,count\n");
        for c in &self.classes {
            for (set, counts) in [("full", &c.full_counts), ("distilled", &c.distilled_counts)] {
                for (b, n) in counts.iter().enumerate() {
                    let _ = writeln!(s, "{},{set},{},{},{n}", c.class, c.bin_edges[b], c.bin_edges[b + 1]);
                }
            }
        }
        s
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distances of each labeled class to the centroid of the other class, over
/// the whole dataset and over the certain members.
pub fn distance_shift_report(dataset: &Dataset, certain: &[usize], n_bins: usize) -> Result<DistanceShiftReport> {
    if !dataset.has_both_classes() {
        return Err(Error::argument("distance shift needs both classes"));
    }
    if n_bins == 0 {
        return Err(Error::argument("n_bins must be positive"));
    }
    if let Some(&bad) = certain.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::argument(format!("certain index {bad} out of range")));
    }
    let dim = dataset.spectra[0].values.len();
    let mut centroids = [vec![0.0; dim], vec![0.0; dim]];
    let counts = dataset.class_counts();
    for s in &dataset.spectra {
        for (c, v) in centroids[s.label.index()].iter_mut().zip(&s.values) {
            *c += v;
        }
    }
    for (k, c) in centroids.iter_mut().enumerate() {
        c.iter_mut().for_each(|v| *v /= counts[k] as f64);
    }
    let dist: Vec<f64> = dataset
        .spectra
        .iter()
        .map(|s| euclid(&s.values, &centroids[s.label.opposite().index()]))
        .collect();
    let mut classes = Vec::new();
    for class in Class::ALL {
        let full: Vec<f64> = (0..dataset.len())
            .filter(|&i| dataset.spectra[i].label == class)
            .map(|i| dist[i])
            .collect();
        let distilled: Vec<f64> = certain
            .iter()
            .filter(|&&i| dataset.spectra[i].label == class)
            .map(|&i| dist[i])
            .collect();
        if distilled.is_empty() {
            warn!("certain set holds no {class} spectra");
        }
        let lo = full.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges: Vec<f64> = (0..=n_bins)
            .map(|b| lo + (hi - lo) * b as f64 / n_bins as f64)
            .collect();
        classes.push(ClassShift {
            class,
            full_counts: histogram(&full, &edges),
            distilled_counts: histogram(&distilled, &edges),
            bin_edges: edges,
            full_median: median(&full).expect("class present"),
            distilled_median: median(&distilled),
        });
    }
    Ok(DistanceShiftReport { classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        let probs = [[0.995, 0.005], [0.9899, 0.0101], [0.01, 0.99], [0.5, 0.5]];
        assert_eq!(certain_from_probs(&probs, 0.99), vec![0, 2]);
        assert_eq!(certain_from_probs(&probs, 0.5), vec![0, 1, 2, 3]);
    }

    #[test]
    fn max_epoch_zero_is_rejected() {
        let cfg = DistillConfig {
            max_epoch: 0,
            ..DistillConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn union_and_truncation() {
        let set = CertainSet::from_epochs(&[vec![3, 1], vec![1, 5], vec![], vec![7, 3]]);
        assert_eq!(set.member_indices, vec![1, 3, 5, 7]);
        assert_eq!(set.per_epoch_counts, vec![2, 2, 0, 2]);
        assert_eq!(set.cumulative_counts, vec![2, 3, 3, 4]);
        assert_eq!(set.first_certain_epoch[&7], 4);
        let t = set.truncated(2);
        assert_eq!(t.member_indices, vec![1, 3, 5]);
        assert_eq!(t, CertainSet::from_epochs(&[vec![3, 1], vec![1, 5]]));
    }

    fn constant(v: f64, label: Class) -> Spectrum {
        Spectrum::new(vec![v; 288], "p", label)
    }

    #[test]
    fn constant_classes_distance() {
        let ds = Dataset::new(
            "c",
            vec![
                constant(0.0, Class::Healthy),
                constant(0.0, Class::Healthy),
                constant(10.0, Class::Tumor),
            ],
        )
        .unwrap();
        let r = distance_shift_report(&ds, &[0, 1, 2], 4).unwrap();
        let expect = 10.0 * 288f64.sqrt();
        for c in &r.classes {
            assert!((c.full_median - expect).abs() < 1e-9);
            assert_eq!(c.full_counts, c.distilled_counts);
        }
    }

    #[test]
    fn missing_class_is_flagged() {
        let ds = Dataset::new("c", vec![constant(0.0, Class::Healthy), constant(1.0, Class::Tumor)]).unwrap();
        let r = distance_shift_report(&ds, &[0], 3).unwrap();
        assert_eq!(r.classes[1].distilled_median, None);
        assert!(!r.shifted_outward());
        assert_eq!(r.classes[1].distilled_counts.iter().sum::<usize>(), 0);
    }
}
