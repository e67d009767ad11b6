//! The residual 1D CNN: stem convolution, a stack of two-convolution residual
//! blocks, global average pooling and a dense softmax head.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNormCache, BatchStats};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng;

pub type ParamMap = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_length: usize,
    pub kernel_width: usize,
    pub initial_filters: usize,
    pub n_res_blocks: usize,
    pub dropout_rate: f64,
    pub n_classes: usize,
    /// 1-indexed blocks that halve the length.
    pub subsample_blocks: Vec<usize>,
    /// 1-indexed blocks that double the channel count.
    pub filter_double_blocks: Vec<usize>,
    /// Subsampling blocks whose main branch max-pools its input instead of
    /// using a stride-2 first convolution.
    pub pooled_main_blocks: Vec<usize>,
    pub bn_epsilon: f64,
    /// Weight on the old running statistic in each update.
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_length: 288,
            kernel_width: 32,
            initial_filters: 16,
            n_res_blocks: 8,
            dropout_rate: 0.55,
            n_classes: 2,
            subsample_blocks: vec![1, 3, 5, 7],
            filter_double_blocks: vec![3, 5, 7],
            pooled_main_blocks: vec![1],
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsample {
    None,
    /// Max-pool on both branches.
    Pool,
    /// Stride-2 first convolution on the main branch, max-pool on the shortcut.
    Stride,
}

/// Static shape plan of one residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPlan {
    pub index: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub subsample: Subsample,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.kernel_width == 0 || self.initial_filters == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("need at least two classes"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout rate must lie in [0, 1)"));
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::config("invalid batch-norm hyperparameters"));
        }
        let in_range = |b: &usize| (1..=self.n_res_blocks).contains(b);
        for (name, set) in [
            ("subsample_blocks", &self.subsample_blocks),
            ("filter_double_blocks", &self.filter_double_blocks),
            ("pooled_main_blocks", &self.pooled_main_blocks),
        ] {
            if !set.iter().all(in_range) {
                return Err(Error::config(format!(
                    "{name} names a block outside 1..={}",
                    self.n_res_blocks
                )));
            }
        }
        if !self
            .pooled_main_blocks
            .iter()
            .all(|b| self.subsample_blocks.contains(b))
        {
            return Err(Error::config("pooled_main_blocks must be subsampling blocks"));
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<BlockPlan> {
        let mut len = self.input_length;
        let mut ch = self.initial_filters;
        (1..=self.n_res_blocks)
            .map(|index| {
                let subsample = if !self.subsample_blocks.contains(&index) {
                    Subsample::None
                } else if self.pooled_main_blocks.contains(&index) {
                    Subsample::Pool
                } else {
                    Subsample::Stride
                };
                let out_len = if subsample == Subsample::None {
                    len
                } else {
                    len.div_ceil(2)
                };
                let out_channels = if self.filter_double_blocks.contains(&index) {
                    ch * 2
                } else {
                    ch
                };
                let plan = BlockPlan {
                    index,
                    in_len: len,
                    out_len,
                    in_channels: ch,
                    out_channels,
                    subsample,
                };
                len = out_len;
                ch = out_channels;
                plan
            })
            .collect()
    }

    /// `(length, channels)` of the feature map entering global average pooling.
    pub fn final_feature_shape(&self) -> (usize, usize) {
        self.blocks()
            .last()
            .map_or((self.input_length, self.initial_filters), |b| {
                (b.out_len, b.out_channels)
            })
    }

    /// Output shapes of the stem, every block, GAP and the dense layer, batch omitted.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut trace = vec![vec![self.input_length, self.initial_filters]];
        trace.extend(self.blocks().iter().map(|b| vec![b.out_len, b.out_channels]));
        let (_, c) = self.final_feature_shape();
        trace.push(vec![c]);
        trace.push(vec![self.n_classes]);
        trace
    }
}

/// Parameter names of every convolution kernel, stem first.
pub fn conv_kernel_names(config: &NetworkConfig) -> Vec<String> {
    let mut names = vec!["stem.conv".to_owned()];
    for b in 1..=config.n_res_blocks {
        names.push(format!("block{b}.conv1"));
        names.push(format!("block{b}.conv2"));
    }
    names
}

fn bn_names(config: &NetworkConfig) -> Vec<(String, usize)> {
    let mut names = vec![("stem.bn".to_owned(), config.initial_filters)];
    for plan in config.blocks() {
        names.push((format!("block{}.bn1", plan.index), plan.out_channels));
        names.push((format!("block{}.bn2", plan.index), plan.out_channels));
    }
    names
}

/// Where dropout masks come from during a training-mode pass.
pub enum DropoutSource<'a> {
    /// Draw fresh masks.
    Sample(&'a mut dyn rand::RngCore),
    /// Reuse masks recorded by an earlier pass (one per block).
    Replay(&'a [Vec<f64>]),
    /// Identity dropout.
    Off,
}

struct StemCache {
    input: Tensor,
    bn: BatchNormCache,
    out: Tensor,
}

struct BlockCache {
    input: Tensor,
    main_pool_arg: Option<Vec<usize>>,
    conv1_in: Tensor,
    bn1: BatchNormCache,
    relu1: Tensor,
    mask: Vec<f64>,
    conv2_in: Tensor,
    bn2: BatchNormCache,
    shortcut_pool_arg: Option<Vec<usize>>,
    shortcut_shape: Vec<usize>,
    out: Tensor,
}

/// Everything a training-mode forward pass recorded for backpropagation.
pub struct Trace {
    version: u64,
    stem: StemCache,
    blocks: Vec<BlockCache>,
    features: Tensor,
    pooled: Tensor,
    pub logits: Tensor,
    /// Batch statistics per batch-norm layer, in layer order.
    pub bn_stats: Vec<(String, BatchStats)>,
    /// The dropout mask applied in each block.
    pub masks: Vec<Vec<f64>>,
}

impl Trace {
    pub fn probabilities(&self) -> Tensor {
        layers::softmax(&self.logits)
    }

    /// Shapes actually produced by the pass: stem, each block, GAP, dense.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![self.stem.out.shape().to_vec()];
        out.extend(self.blocks.iter().map(|b| b.out.shape().to_vec()));
        out.push(self.pooled.shape().to_vec());
        out.push(self.logits.shape().to_vec());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    /// Trainable tensors.
    pub params: ParamMap,
    /// Batch-norm running statistics.
    pub buffers: ParamMap,
    pub mode: Mode,
    /// Bumped on every parameter update; traces from older versions are stale.
    #[serde(default)]
    pub version: u64,
}

fn param<'a>(map: &'a ParamMap, name: &str) -> Result<&'a Tensor> {
    map.get(name)
        .ok_or_else(|| Error::State(format!("missing tensor {name}")))
}

impl Network {
    /// He-normal convolution kernels, unit gamma, zero beta/bias, and a dense
    /// head drawn with std `sqrt(1 / fan_in)`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, "init", 0);
        let mut params = ParamMap::new();
        let mut buffers = ParamMap::new();
        let k = config.kernel_width;

        let he = |shape: [usize; 3], rng: &mut rng::RunRng| -> Tensor {
            let std = (2.0 / (shape[0] * shape[1]) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            let data = (0..shape.iter().product::<usize>()).map(|_| dist.sample(rng)).collect();
            Tensor::from_parts_unchecked(shape.to_vec(), data)
        };
        params.insert("stem.conv".into(), he([k, 1, config.initial_filters], &mut rng));
        for plan in config.blocks() {
            let b = plan.index;
            params.insert(
                format!("block{b}.conv1"),
                he([k, plan.in_channels, plan.out_channels], &mut rng),
            );
            params.insert(
                format!("block{b}.conv2"),
                he([k, plan.out_channels, plan.out_channels], &mut rng),
            );
        }
        for (name, c) in bn_names(&config) {
            params.insert(format!("{name}.gamma"), Tensor::filled(&[c], 1.0));
            params.insert(format!("{name}.beta"), Tensor::zeros(&[c]));
            buffers.insert(format!("{name}.running_mean"), Tensor::zeros(&[c]));
            buffers.insert(format!("{name}.running_var"), Tensor::filled(&[c], 1.0));
        }
        let (_, feat) = config.final_feature_shape();
        let dist = Normal::new(0.0, (1.0 / feat as f64).sqrt()).expect("finite std");
        let w = (0..feat * config.n_classes).map(|_| dist.sample(&mut rng)).collect();
        params.insert(
            "dense.weight".into(),
            Tensor::from_parts_unchecked(vec![feat, config.n_classes], w),
        );
        params.insert("dense.bias".into(), Tensor::zeros(&[config.n_classes]));

        Ok(Network {
            config,
            params,
            buffers,
            mode: Mode::Eval,
            version: 0,
        })
    }

    pub fn param(&self, name: &str) -> Result<&Tensor> {
        param(&self.params, name)
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Marks the parameters as changed, invalidating outstanding traces.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (b, l, c) = x.dims3("network input")?;
        if l != self.config.input_length || c != 1 {
            return Err(Error::shape(format!(
                "network input {:?} must be [batch, {}, 1]",
                x.shape(),
                self.config.input_length
            )));
        }
        Ok(b)
    }

    fn bn_eval(&self, name: &str, x: &Tensor) -> Result<Tensor> {
        layers::batchnorm_forward_eval(
            x,
            self.param(&format!("{name}.gamma"))?.data(),
            self.param(&format!("{name}.beta"))?.data(),
            param(&self.buffers, &format!("{name}.running_mean"))?.data(),
            param(&self.buffers, &format!("{name}.running_var"))?.data(),
            self.config.bn_epsilon,
        )
    }

    /// Deterministic inference pass; returns `(final feature map, logits)`.
    pub fn forward_features(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let h = layers::conv1d_forward(x, self.param("stem.conv")?, 1)?;
        let mut h = layers::relu(&self.bn_eval("stem.bn", &h)?);
        for plan in self.config.blocks() {
            let b = plan.index;
            let (main_in, shortcut) = match plan.subsample {
                Subsample::None => (h.clone(), h),
                Subsample::Pool => {
                    let (p, _) = layers::maxpool2_forward(&h)?;
                    (p.clone(), p)
                }
                Subsample::Stride => (h.clone(), layers::maxpool2_forward(&h)?.0),
            };
            let stride = if plan.subsample == Subsample::Stride { 2 } else { 1 };
            let m = layers::conv1d_forward(&main_in, self.param(&format!("block{b}.conv1"))?, stride)?;
            let m = layers::relu(&self.bn_eval(&format!("block{b}.bn1"), &m)?);
            let m = layers::conv1d_forward(&m, self.param(&format!("block{b}.conv2"))?, 1)?;
            let mut m = self.bn_eval(&format!("block{b}.bn2"), &m)?;
            let shortcut = layers::pad_channels(&shortcut, plan.out_channels)?;
            if m.shape() != shortcut.shape() {
                return Err(Error::State(format!(
                    "block {b}: main {:?} and shortcut {:?} disagree",
                    m.shape(),
                    shortcut.shape()
                )));
            }
            m.add_assign(&shortcut);
            h = layers::relu(&m);
        }
        let pooled = layers::global_avg_pool(&h)?;
        let logits = layers::dense_forward(&pooled, self.param("dense.weight")?, self.param("dense.bias")?.data())?;
        Ok((h, logits))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_features(x)?.1)
    }

    /// Class probabilities `[batch, n_classes]` from an inference pass.
    pub fn predict_batch(&self, x: &Tensor) -> Result<Tensor> {
        Ok(layers::softmax(&self.forward_eval(x)?))
    }

    /// Training-mode pass using batch statistics and dropout.
    pub fn forward_train(&self, x: &Tensor, mut dropout: DropoutSource<'_>) -> Result<Trace> {
        self.check_input(x)?;
        let eps = self.config.bn_epsilon;
        let mut bn_stats = Vec::new();
        let mut bn = |name: &str, x: &Tensor, net: &Network| -> Result<(Tensor, BatchNormCache)> {
            let (y, cache, stats) = layers::batchnorm_forward_train(
                x,
                net.param(&format!("{name}.gamma"))?.data(),
                net.param(&format!("{name}.beta"))?.data(),
                eps,
            )?;
            bn_stats.push((name.to_owned(), stats));
            Ok((y, cache))
        };

        let c0 = layers::conv1d_forward(x, self.param("stem.conv")?, 1)?;
        let (b0, bn0) = bn("stem.bn", &c0, self)?;
        let stem_out = layers::relu(&b0);
        let stem = StemCache {
            input: x.clone(),
            bn: bn0,
            out: stem_out.clone(),
        };

        let keep = 1.0 - self.config.dropout_rate;
        let mut h = stem_out;
        let mut blocks = Vec::with_capacity(self.config.n_res_blocks);
        let mut masks = Vec::with_capacity(self.config.n_res_blocks);
        for (bi, plan) in self.config.blocks().into_iter().enumerate() {
            let b = plan.index;
            let input = h;
            let (conv1_in, main_pool_arg) = if plan.subsample == Subsample::Pool {
                let (p, arg) = layers::maxpool2_forward(&input)?;
                (p, Some(arg))
            } else {
                (input.clone(), None)
            };
            let stride = if plan.subsample == Subsample::Stride { 2 } else { 1 };
            let c1 = layers::conv1d_forward(&conv1_in, self.param(&format!("block{b}.conv1"))?, stride)?;
            let (b1, bn1) = bn(&format!("block{b}.bn1"), &c1, self)?;
            let relu1 = layers::relu(&b1);

            let mask: Vec<f64> = match &mut dropout {
                DropoutSource::Off => vec![1.0; relu1.len()],
                DropoutSource::Replay(saved) => {
                    let m = saved
                        .get(bi)
                        .ok_or_else(|| Error::State(format!("no recorded dropout mask for block {b}")))?;
                    if m.len() != relu1.len() {
                        return Err(Error::shape(format!("dropout mask for block {b} has wrong size")));
                    }
                    m.clone()
                }
                DropoutSource::Sample(rng) => (0..relu1.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
            };
            let dropped: Vec<f64> = relu1.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            let conv2_in = Tensor::from_parts_unchecked(relu1.shape().to_vec(), dropped);
            let c2 = layers::conv1d_forward(&conv2_in, self.param(&format!("block{b}.conv2"))?, 1)?;
            let (mut sum, bn2) = bn(&format!("block{b}.bn2"), &c2, self)?;

            let (shortcut, shortcut_pool_arg) = match plan.subsample {
                Subsample::None => (input.clone(), None),
                _ => {
                    let (p, arg) = layers::maxpool2_forward(&input)?;
                    (p, Some(arg))
                }
            };
            let shortcut_shape = shortcut.shape().to_vec();
            let shortcut = layers::pad_channels(&shortcut, plan.out_channels)?;
            if sum.shape() != shortcut.shape() {
                return Err(Error::State(format!(
                    "block {b}: main {:?} and shortcut {:?} disagree",
                    sum.shape(),
                    shortcut.shape()
                )));
            }
            sum.add_assign(&shortcut);
            let out = layers::relu(&sum);
            masks.push(mask.clone());
            blocks.push(BlockCache {
                input,
                main_pool_arg,
                conv1_in,
                bn1,
                relu1,
                mask,
                conv2_in,
                bn2,
                shortcut_pool_arg,
                shortcut_shape,
                out: out.clone(),
            });
            h = out;
        }
        let pooled = layers::global_avg_pool(&h)?;
        let logits = layers::dense_forward(&pooled, self.param("dense.weight")?, self.param("dense.bias")?.data())?;
        Ok(Trace {
            version: self.version,
            stem,
            blocks,
            features: h,
            pooled,
            logits,
            bn_stats,
            masks,
        })
    }

    /// Reverse-mode gradients of the mean cross-entropy for a recorded pass.
    /// Returns the loss and a gradient for every trainable tensor.
    pub fn backward(&self, trace: &Trace, labels: &[usize]) -> Result<(f64, ParamMap)> {
        if trace.version != self.version {
            return Err(Error::State(format!(
                "trace recorded at parameter version {} but network is at {}; run forward again",
                trace.version, self.version
            )));
        }
        let batch = trace.logits.shape()[0];
        if labels.len() != batch {
            return Err(Error::argument(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.config.n_classes) {
            return Err(Error::argument(format!("label {bad} out of range")));
        }
        let mut grads = ParamMap::new();
        let (loss, dlogits) = layers::cross_entropy_from_logits(&trace.logits, labels);

        let (dpooled, dw, db) = layers::dense_backward(&trace.pooled, self.param("dense.weight")?, &dlogits);
        grads.insert("dense.weight".into(), dw);
        grads.insert("dense.bias".into(), Tensor::from_parts_unchecked(vec![db.len()], db));
        let mut dh = layers::global_avg_pool_backward(trace.features.shape(), &dpooled);

        let put_bn = |grads: &mut ParamMap, name: &str, dg: Vec<f64>, dbeta: Vec<f64>| {
            grads.insert(
                format!("{name}.gamma"),
                Tensor::from_parts_unchecked(vec![dg.len()], dg),
            );
            grads.insert(
                format!("{name}.beta"),
                Tensor::from_parts_unchecked(vec![dbeta.len()], dbeta),
            );
        };

        let plans = self.config.blocks();
        for (cache, plan) in trace.blocks.iter().zip(&plans).rev() {
            let b = plan.index;
            let dsum = layers::relu_backward(&cache.out, &dh);

            let gamma2 = self.param(&format!("block{b}.bn2.gamma"))?;
            let (dc2, dg2, dbeta2) = layers::batchnorm_backward(&cache.bn2, gamma2.data(), &dsum);
            put_bn(&mut grads, &format!("block{b}.bn2"), dg2, dbeta2);
            let w2 = self.param(&format!("block{b}.conv2"))?;
            let (ddrop, dw2) = layers::conv1d_backward(&cache.conv2_in, w2, 1, &dc2)?;
            grads.insert(format!("block{b}.conv2"), dw2);

            let drelu: Vec<f64> = ddrop.data().iter().zip(&cache.mask).map(|(g, m)| g * m).collect();
            let drelu = Tensor::from_parts_unchecked(ddrop.shape().to_vec(), drelu);
            let db1 = layers::relu_backward(&cache.relu1, &drelu);
            let gamma1 = self.param(&format!("block{b}.bn1.gamma"))?;
            let (dc1, dg1, dbeta1) = layers::batchnorm_backward(&cache.bn1, gamma1.data(), &db1);
            put_bn(&mut grads, &format!("block{b}.bn1"), dg1, dbeta1);
            let stride = if plan.subsample == Subsample::Stride { 2 } else { 1 };
            let w1 = self.param(&format!("block{b}.conv1"))?;
            let (dconv1_in, dw1) = layers::conv1d_backward(&cache.conv1_in, w1, stride, &dc1)?;
            grads.insert(format!("block{b}.conv1"), dw1);

            let mut dinput = match &cache.main_pool_arg {
                Some(arg) => layers::maxpool2_backward(cache.input.shape(), arg, &dconv1_in),
                None => dconv1_in,
            };
            let dshort = layers::unpad_channels(&dsum, plan.in_channels);
            debug_assert_eq!(dshort.shape(), cache.shortcut_shape.as_slice());
            let dshort = match &cache.shortcut_pool_arg {
                Some(arg) => layers::maxpool2_backward(cache.input.shape(), arg, &dshort),
                None => dshort,
            };
            dinput.add_assign(&dshort);
            dh = dinput;
        }

        let db0 = layers::relu_backward(&trace.stem.out, &dh);
        let gamma0 = self.param("stem.bn.gamma")?;
        let (dc0, dg0, dbeta0) = layers::batchnorm_backward(&trace.stem.bn, gamma0.data(), &db0);
        put_bn(&mut grads, "stem.bn", dg0, dbeta0);
        let (_, dw0) = layers::conv1d_backward(&trace.stem.input, self.param("stem.conv")?, 1, &dc0)?;
        grads.insert("stem.conv".into(), dw0);

        debug_assert_eq!(grads.len(), self.params.len());
        Ok((loss, grads))
    }

    /// Folds a training pass's batch statistics into the running statistics.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats)]) -> Result<()> {
        let mom = self.config.bn_momentum;
        for (name, s) in stats {
            for (suffix, batch) in [("running_mean", &s.mean), ("running_var", &s.var_unbiased)] {
                let key = format!("{name}.{suffix}");
                let t = self
                    .buffers
                    .get_mut(&key)
                    .ok_or_else(|| Error::State(format!("missing buffer {key}")))?;
                for (r, v) in t.data_mut().iter_mut().zip(batch) {
                    *r = mom * *r + (1.0 - mom) * v;
                }
            }
        }
        Ok(())
    }

    /// Loss of a training-mode pass with fixed dropout masks; the finite-difference
    /// counterpart of [`Network::backward`].
    pub fn loss_with_masks(&self, x: &Tensor, labels: &[usize], masks: &[Vec<f64>]) -> Result<f64> {
        let trace = self.forward_train(x, DropoutSource::Replay(masks))?;
        Ok(layers::cross_entropy_from_logits(&trace.logits, labels).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_matches_reference_table() {
        let cfg = NetworkConfig::default();
        let lens: Vec<usize> = cfg.blocks().iter().map(|b| b.out_len).collect();
        let chans: Vec<usize> = cfg.blocks().iter().map(|b| b.out_channels).collect();
        assert_eq!(lens, vec![144, 144, 72, 72, 36, 36, 18, 18]);
        assert_eq!(chans, vec![16, 16, 32, 32, 64, 64, 128, 128]);
        assert_eq!(cfg.final_feature_shape(), (18, 128));
        assert_eq!(cfg.blocks()[0].subsample, Subsample::Pool);
        assert_eq!(cfg.blocks()[2].subsample, Subsample::Stride);
    }

    #[test]
    fn seventeen_conv_kernels() {
        let net = Network::new(NetworkConfig::default(), 1).unwrap();
        let convs = conv_kernel_names(&net.config);
        assert_eq!(convs.len(), 17);
        assert!(convs.iter().all(|n| net.params.contains_key(n)));
        let kernels = net.params.values().filter(|t| t.shape().len() == 3).count();
        assert_eq!(kernels, 17);
        assert_eq!(net.param("dense.weight").unwrap().shape(), &[128, 2]);
    }

    #[test]
    fn wrong_input_length_is_shape_error() {
        let net = Network::new(NetworkConfig::default(), 1).unwrap();
        let x = Tensor::zeros(&[1, 100, 1]);
        assert!(matches!(net.forward_eval(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn stale_trace_is_state_error() {
        let cfg = NetworkConfig {
            input_length: 16,
            kernel_width: 4,
            initial_filters: 2,
            n_res_blocks: 1,
            subsample_blocks: vec![1],
            filter_double_blocks: vec![],
            pooled_main_blocks: vec![],
            ..NetworkConfig::default()
        };
        let mut net = Network::new(cfg, 0).unwrap();
        let x = Tensor::filled(&[2, 16, 1], 0.5);
        let trace = net.forward_train(&x, DropoutSource::Off).unwrap();
        net.touch();
        assert!(matches!(net.backward(&trace, &[0, 1]), Err(Error::State(_))));
    }
}
