use serde::{Deserialize, Serialize};

use super::run::patient_labels;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::spectra::{Class, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-3,
            learning_rate: 0.5,
            iterations: 500,
        }
    }
}

pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    /// Tumor probability of one spectrum.
    pub fn predict(&self, values: &[f64]) -> f64 {
        let z: f64 = self.bias
            + values
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

/// Full-batch gradient descent on L2-penalized log loss over standardized
/// coordinates.
pub fn fit_logistic(train: &Dataset, config: &LogisticConfig) -> Result<LogisticModel> {
    if !train.has_both_classes() {
        return Err(Error::argument("logistic baseline needs both classes"));
    }
    let n = train.len() as f64;
    let dim = train.spectra[0].values.len();
    let mut mean = vec![0.0; dim];
    for s in &train.spectra {
        for (m, v) in mean.iter_mut().zip(&s.values) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; dim];
    for s in &train.spectra {
        for ((q, v), m) in scale.iter_mut().zip(&s.values).zip(&mean) {
            *q += (v - m) * (v - m) / n;
        }
    }
    scale.iter_mut().for_each(|q| *q = q.sqrt().max(1e-12));
    let x: Vec<Vec<f64>> = train
        .spectra
        .iter()
        .map(|s| {
            s.values
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), q)| (v - m) / q)
                .collect()
        })
        .collect();
    let y: Vec<f64> = train.spectra.iter().map(|s| s.label.index() as f64).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..config.iterations {
        let mut gw: Vec<f64> = w.iter().map(|wi| config.l2 * wi).collect();
        let mut gb = 0.0;
        for (xi, yi) in x.iter().zip(&y) {
            let z = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let r = (1.0 / (1.0 + (-z).exp()) - yi) / n;
            gb += r;
            for (g, a) in gw.iter_mut().zip(xi) {
                *g += r * a;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * g;
        }
        b -= config.learning_rate * gb;
    }
    Ok(LogisticModel {
        mean,
        scale,
        weights: w,
        bias: b,
    })
}

/// Sanity-floor comparator scored against the test set's observed labels.
pub fn baseline_logistic(train: &Dataset, test: &Dataset, config: &LogisticConfig) -> Result<EvalReport> {
    let model = fit_logistic(train, config)?;
    let probs: Vec<[f64; 2]> = test
        .spectra
        .iter()
        .map(|s| {
            let p = model.predict(&s.values);
            [1.0 - p, p]
        })
        .collect();
    let labels: Vec<Class> = test.labels();
    let ids: Vec<String> = test.spectra.iter().map(|s| s.patient_id.clone()).collect();
    evaluate(&probs, &labels, &ids, &patient_labels(&ids, &labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Spectrum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, shift: f64, seed: u64, permute: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spectra: Vec<Spectrum> = (0..n)
            .map(|i| {
                let class = if i % 2 == 0 { Class::Healthy } else { Class::Tumor };
                let c = if class == Class::Tumor { shift } else { 0.0 };
                let values = (0..288).map(|_| c + rng.random_range(-1.0..1.0)).collect();
                Spectrum::new(values, format!("P{}", i / 4), class)
            })
            .collect();
        if permute {
            for s in &mut spectra {
                s.label = if rng.random_bool(0.5) {
                    Class::Tumor
                } else {
                    Class::Healthy
                };
            }
        }
        Dataset::new("blobs", spectra).unwrap()
    }

    #[test]
    fn separable_blobs() {
        let r = baseline_logistic(
            &blobs(80, 0.5, 1, false),
            &blobs(80, 0.5, 2, false),
            &LogisticConfig::default(),
        )
        .unwrap();
        assert!(r.auc >= 0.99, "{}", r.auc);
    }

    #[test]
    fn permuted_labels_are_chance() {
        let cfg = LogisticConfig::default();
        let r = baseline_logistic(&blobs(200, 0.5, 3, true), &blobs(400, 0.5, 4, true), &cfg).unwrap();
        assert!((r.auc - 0.5).abs() < 0.1, "{}", r.auc);
        let again = baseline_logistic(&blobs(200, 0.5, 3, true), &blobs(400, 0.5, 4, true), &cfg).unwrap();
        assert_eq!(r, again);
    }
}
