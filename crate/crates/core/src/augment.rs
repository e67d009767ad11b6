//! Mixing augmentation over the certain set, and the Gaussian-noise baseline.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectra::{coordinate_std, Class, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Same,
    Other,
    Both,
    Noise,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Same => "same",
            Strategy::Other => "other",
            Strategy::Both => "both",
            Strategy::Noise => "noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub strategy: Strategy,
    /// Weight of the partner sample.
    pub alpha: f64,
    pub factor: usize,
    /// Noise strategy only; `None` picks 5% of the mean per-coordinate std.
    pub noise_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            strategy: Strategy::Both,
            alpha: 0.5,
            factor: 5,
            noise_sigma: None,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(format!("noise_sigma must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Where an emitted sample came from (indices into the certain list).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub target: usize,
    /// `None` for noise augmentation.
    pub partner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub samples: Vec<Spectrum>,
    pub provenance: Vec<Provenance>,
}

/// `(1 - alpha) * target + alpha * partner`, labeled as the target.
pub fn mix_samples(target: &Spectrum, partner: &Spectrum, alpha: f64) -> Result<Spectrum> {
    if target.values.len() != partner.values.len() {
        return Err(Error::shape(format!(
            "cannot mix spectra of length {} and {}",
            target.values.len(),
            partner.values.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::argument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let values = target
        .values
        .iter()
        .zip(&partner.values)
        .map(|(t, p)| (1.0 - alpha) * t + alpha * p)
        .collect();
    Ok(Spectrum {
        values,
        patient_id: target.patient_id.clone(),
        label: target.label,
        true_label: None,
        synthetic: true,
    })
}

fn partner_pools(certain: &[Spectrum], strategy: Strategy) -> Result<[Vec<usize>; 2]> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in certain.iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    let present = |c: Class| !by_class[c.index()].is_empty();
    for class in Class::ALL.into_iter().filter(|&c| present(c)) {
        let short = match strategy {
            Strategy::Same => by_class[class.index()].len() < 2,
            Strategy::Other => !present(class.opposite()),
            Strategy::Both => certain.len() < 2,
            Strategy::Noise => false,
        };
        if short {
            return Err(Error::config(format!(
                "no mixing partner available for {class} targets under strategy {strategy}"
            )));
        }
    }
    Ok(by_class)
}

/// Emits `factor * |certain|` mixed samples, cycling through the targets.
pub fn augment_set(certain: &[Spectrum], config: &AugmentConfig) -> Result<Augmented> {
    config.validate()?;
    if config.strategy == Strategy::Noise {
        let sigma = match config.noise_sigma {
            Some(s) => s,
            None => default_noise_sigma(certain),
        };
        return noise_augment(certain, sigma, config.factor, config.seed);
    }
    if config.factor == 0 {
        return Ok(Augmented {
            samples: Vec::new(),
            provenance: Vec::new(),
        });
    }
    if certain.is_empty() {
        return Err(Error::argument("certain set is empty"));
    }
    let pools = partner_pools(certain, config.strategy)?;
    let mut rng = rng::stream(config.seed, "augment", 0);
    let n = certain.len();
    let mut samples = Vec::with_capacity(n * config.factor);
    let mut provenance = Vec::with_capacity(n * config.factor);
    for round in 0..config.factor * n {
        let target = round % n;
        let label = certain[target].label;
        let partner = match config.strategy {
            Strategy::Same => {
                // pool without the target: draw from len-1 slots, skip self
                let pool = &pools[label.index()];
                let pos = pool.binary_search(&target).expect("target in own pool");
                let k = rng.random_range(0..pool.len() - 1);
                pool[if k >= pos { k + 1 } else { k }]
            }
            Strategy::Other => {
                let pool = &pools[label.opposite().index()];
                pool[rng.random_range(0..pool.len())]
            }
            Strategy::Both => {
                let k = rng.random_range(0..n - 1);
                if k >= target {
                    k + 1
                } else {
                    k
                }
            }
            Strategy::Noise => unreachable!(),
        };
        samples.push(mix_samples(&certain[target], &certain[partner], config.alpha)?);
        provenance.push(Provenance {
            target,
            partner: Some(partner),
        });
    }
    Ok(Augmented { samples, provenance })
}

/// Five percent of the mean per-coordinate standard deviation.
pub fn default_noise_sigma(spectra: &[Spectrum]) -> f64 {
    let std = coordinate_std(spectra);
    if std.is_empty() {
        return 0.0;
    }
    0.05 * std.iter().sum::<f64>() / std.len() as f64
}

/// Copies of the certain members with i.i.d. Gaussian noise added.
pub fn noise_augment(certain: &[Spectrum], noise_sigma: f64, factor: usize, seed: u64) -> Result<Augmented> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::argument(format!(
            "noise_sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let mut rng = rng::stream(seed, "noise-augment", 0);
    let n = certain.len();
    let mut samples = Vec::with_capacity(n * factor);
    let mut provenance = Vec::with_capacity(n * factor);
    for round in 0..factor * n {
        let target = round % n;
        let src = &certain[target];
        let values = src.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
        samples.push(Spectrum {
            values,
            patient_id: src.patient_id.clone(),
            label: src.label,
            true_label: None,
            synthetic: true,
        });
        provenance.push(Provenance { target, partner: None });
    }
    Ok(Augmented { samples, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(v: f64, label: Class) -> Spectrum {
        Spectrum::new(vec![v; 288], format!("P{v}"), label)
    }

    #[test]
    fn mix_endpoints_and_midpoint() {
        let t = sp(2.0, Class::Tumor);
        let p = sp(0.0, Class::Healthy);
        assert_eq!(mix_samples(&t, &p, 0.0).unwrap().values, t.values);
        let one = mix_samples(&t, &p, 1.0).unwrap();
        assert_eq!(one.values, p.values);
        assert_eq!(one.label, Class::Tumor);
        assert_eq!(one.patient_id, t.patient_id);
        assert!(one.synthetic);
        assert!(mix_samples(&t, &p, 0.5).unwrap().values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mix_length_mismatch() {
        let mut p = sp(0.0, Class::Healthy);
        p.values.pop();
        assert!(matches!(
            mix_samples(&sp(1.0, Class::Tumor), &p, 0.5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn other_strategy_mixes_across_classes() {
        let certain: Vec<Spectrum> = (0..6)
            .map(|i| sp(i as f64, if i < 2 { Class::Healthy } else { Class::Tumor }))
            .collect();
        let cfg = AugmentConfig {
            strategy: Strategy::Other,
            factor: 3,
            ..AugmentConfig::default()
        };
        let a = augment_set(&certain, &cfg).unwrap();
        assert_eq!(a.samples.len(), 18);
        for (s, p) in a.samples.iter().zip(&a.provenance) {
            let partner = p.partner.unwrap();
            assert_ne!(certain[partner].label, certain[p.target].label);
            assert_eq!(s.label, certain[p.target].label);
        }
    }

    #[test]
    fn same_strategy_single_member_class_errors() {
        let certain = vec![sp(0.0, Class::Healthy), sp(1.0, Class::Tumor), sp(2.0, Class::Tumor)];
        let cfg = AugmentConfig {
            strategy: Strategy::Same,
            ..AugmentConfig::default()
        };
        let err = augment_set(&certain, &cfg).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("healthy")), "{err}");
    }

    #[test]
    fn factor_zero_is_empty() {
        let cfg = AugmentConfig {
            factor: 0,
            ..AugmentConfig::default()
        };
        assert!(augment_set(&[], &cfg).unwrap().samples.is_empty());
    }

    #[test]
    fn noise_counts_and_zero_sigma() {
        let certain: Vec<Spectrum> = (0..7).map(|i| sp(i as f64, Class::Healthy)).collect();
        let a = noise_augment(&certain, 0.0, 2, 1).unwrap();
        assert_eq!(a.samples.len(), 14);
        for (s, p) in a.samples.iter().zip(&a.provenance) {
            assert_eq!(s.values, certain[p.target].values);
        }
    }

    #[test]
    fn noise_moments() {
        let certain = vec![sp(1.0, Class::Tumor)];
        let a = noise_augment(&certain, 0.3, 200, 9).unwrap();
        let d: Vec<f64> = a
            .samples
            .iter()
            .flat_map(|s| s.values.iter().map(|v| v - 1.0))
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // n = 57600: mean se 0.00125, std se ~0.0009
        assert!(mean.abs() < 0.006, "{mean}");
        assert!((var.sqrt() - 0.3).abs() < 0.005, "{}", var.sqrt());
    }
}
