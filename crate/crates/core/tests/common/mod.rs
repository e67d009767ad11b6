//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use mrsdistill::nn::{DropoutSource, Network, NetworkConfig, Tensor};
use mrsdistill::spectra::Class;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug)]
pub struct GradCheck {
    pub entries: usize,
    pub worst_rel: f64,
    pub worst_name: String,
}

/// A random miniature network: 1-2 blocks, width-4 kernels, length-16 input.
pub fn random_mini_config(rng: &mut ChaCha8Rng) -> NetworkConfig {
    let n_blocks = rng.random_range(1..=2usize);
    let mut subsample = Vec::new();
    let mut double = Vec::new();
    let mut pooled = Vec::new();
    for b in 1..=n_blocks {
        if rng.random_bool(0.5) {
            subsample.push(b);
            if rng.random_bool(0.5) {
                pooled.push(b);
            }
        }
        if rng.random_bool(0.5) {
            double.push(b);
        }
    }
    NetworkConfig {
        input_length: 16,
        kernel_width: 4,
        initial_filters: rng.random_range(2..=3),
        n_res_blocks: n_blocks,
        subsample_blocks: subsample,
        filter_double_blocks: double,
        pooled_main_blocks: pooled,
        ..NetworkConfig::default()
    }
}

/// Central finite differences (step `h`) on every trainable entry, with the
/// dropout masks frozen from one sampled training pass.
pub fn gradient_check(net: &mut Network, x: &Tensor, labels: &[usize], mask_seed: u64, h: f64) -> GradCheck {
    let mut mrng = ChaCha8Rng::seed_from_u64(mask_seed);
    let trace = net.forward_train(x, DropoutSource::Sample(&mut mrng)).unwrap();
    let masks = trace.masks.clone();
    let (_, grads) = net.backward(&trace, labels).unwrap();

    let names: Vec<String> = net.params.keys().cloned().collect();
    let mut worst_rel = 0.0f64;
    let mut worst_name = String::new();
    let mut entries = 0;
    for name in names {
        let n = net.params[&name].len();
        for i in 0..n {
            let orig = net.params[&name].data()[i];
            net.params.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let lp = net.loss_with_masks(x, labels, &masks).unwrap();
            net.params.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let lm = net.loss_with_masks(x, labels, &masks).unwrap();
            net.params.get_mut(&name).unwrap().data_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let a = grads[&name].data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            entries += 1;
            if rel > worst_rel {
                worst_rel = rel;
                worst_name = format!("{name}[{i}] analytic {a:e} fd {fd:e}");
            }
        }
    }
    GradCheck {
        entries,
        worst_rel,
        worst_name,
    }
}

/// Probability that a random positive outranks a random negative, ties 1/2.
pub fn concordance_auc(scores: &[f64], labels: &[Class]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != Class::Tumor {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != Class::Healthy {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Minimum k-means inertia over every assignment of the points to two
/// nonempty clusters.
pub fn exhaustive_two_partition_inertia(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut best = f64::INFINITY;
    // fix point 0 in cluster 0 to skip mirrored partitions
    for mask in 0u32..(1 << (n - 1)) {
        let assign = |i: usize| if i == 0 { 0 } else { (mask >> (i - 1)) & 1 };
        let mut sums = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (i, p) in points.iter().enumerate() {
            let c = assign(i) as usize;
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts[1] == 0 {
            continue;
        }
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let c = assign(i) as usize;
            for (j, v) in p.iter().enumerate() {
                let m = sums[c][j] / counts[c] as f64;
                inertia += (v - m) * (v - m);
            }
        }
        best = best.min(inertia);
    }
    best
}

pub fn random_input(rng: &mut ChaCha8Rng, batch: usize, len: usize) -> Tensor {
    let data = (0..batch * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![batch, len, 1], data).unwrap()
}

/// Two-block, two-filter network on full-length spectra; fast enough for
/// end-to-end tests.
pub fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        kernel_width: 4,
        initial_filters: 2,
        n_res_blocks: 2,
        subsample_blocks: vec![1, 2],
        filter_double_blocks: vec![2],
        pooled_main_blocks: vec![1],
        ..NetworkConfig::default()
    }
}

/// Default cohort profiles with a chosen size.
pub fn small_cohort(n_patients: usize, voxels: [usize; 2], seed: u64) -> mrsdistill::spectra::CohortConfig {
    mrsdistill::spectra::CohortConfig {
        n_patients,
        voxels_per_patient_range: voxels,
        seed,
        ..Default::default()
    }
}

/// A complete experiment small enough to run in a few seconds.
pub fn tiny_experiment() -> mrsdistill::pipeline::ExperimentConfig {
    use mrsdistill::nn::TrainConfig;
    use mrsdistill::pipeline::{Arm, ExperimentConfig};
    let train = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut cfg = ExperimentConfig {
        cohort: small_cohort(8, [3, 5], 11),
        folds: 2,
        seeds: vec![0],
        strategies: vec![Arm::None, Arm::Both],
        network: tiny_network(),
        train: train.clone(),
        ..ExperimentConfig::default()
    };
    cfg.distill.network = tiny_network();
    cfg.distill.train = train;
    cfg.distill.max_epoch = 2;
    cfg.distill.theta = 0.6;
    cfg.augment.factor = 1;
    cfg
}
