//! Forward and backward kernels for the layers the residual network uses.
//! Each backward takes whatever the matching forward cached and returns
//! gradients with respect to inputs and parameters.

use matrixmultiply::dgemm;

use super::Tensor;
use crate::error::{Error, Result};

/// "Same" padding: output length `ceil(len / stride)`, with the total padding
/// split so the left side gets the smaller half (`pad_left = total / 2`).
/// For width 32 at stride 1 that is 15 zeros on the left and 16 on the right.
pub fn same_padding(len: usize, width: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + width).saturating_sub(len);
    (out, total / 2)
}

/// C = alpha * A(m×k) * B(k×n) + beta * C with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index dgemm touches inside the
    // three slices; `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvGeometry {
    batch: usize,
    len: usize,
    c_in: usize,
    width: usize,
    c_out: usize,
    stride: usize,
    out_len: usize,
    pad_left: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Self> {
        let (batch, len, c_in) = input.dims3("conv1d input")?;
        let (width, kc_in, c_out) = kernel.dims3("conv1d kernel")?;
        if kc_in != c_in || stride == 0 {
            return Err(Error::shape(format!(
                "conv1d input {:?} incompatible with kernel {:?} (stride {stride})",
                input.shape(),
                kernel.shape()
            )));
        }
        let (out_len, pad_left) = same_padding(len, width, stride);
        Ok(ConvGeometry {
            batch,
            len,
            c_in,
            width,
            c_out,
            stride,
            out_len,
            pad_left,
        })
    }

    fn rows(&self) -> usize {
        self.batch * self.out_len
    }

    fn cols(&self) -> usize {
        self.width * self.c_in
    }

    /// Input position feeding output `o` through tap `k`, if inside the signal.
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad_left)
            .filter(|&p| p < self.len)
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let mut col = vec![0.0; self.rows() * cols];
        for b in 0..self.batch {
            for o in 0..self.out_len {
                let row = &mut col[(b * self.out_len + o) * cols..][..cols];
                for k in 0..self.width {
                    if let Some(p) = self.source(o, k) {
                        let src = &x[(b * self.len + p) * self.c_in..][..self.c_in];
                        row[k * self.c_in..(k + 1) * self.c_in].copy_from_slice(src);
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let mut dx = vec![0.0; self.batch * self.len * self.c_in];
        for b in 0..self.batch {
            for o in 0..self.out_len {
                let row = &dcol[(b * self.out_len + o) * cols..][..cols];
                for k in 0..self.width {
                    if let Some(p) = self.source(o, k) {
                        let dst = &mut dx[(b * self.len + p) * self.c_in..][..self.c_in];
                        for (d, g) in dst.iter_mut().zip(&row[k * self.c_in..(k + 1) * self.c_in]) {
                            *d += g;
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Zero-padded cross-correlation. `input` is `[batch, length, c_in]`, `kernel`
/// is `[width, c_in, c_out]`; the result is `[batch, ceil(length/stride), c_out]`.
pub fn conv1d_forward(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input, kernel, stride)?;
    let col = g.im2col(input.data());
    let mut out = vec![0.0; g.rows() * g.c_out];
    gemm(
        g.rows(),
        g.cols(),
        g.c_out,
        &col,
        (g.cols(), 1),
        kernel.data(),
        (g.c_out, 1),
        0.0,
        &mut out,
    );
    Ok(Tensor::from_parts_unchecked(vec![g.batch, g.out_len, g.c_out], out))
}

/// Returns `(d_input, d_kernel)`.
pub fn conv1d_backward(input: &Tensor, kernel: &Tensor, stride: usize, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let g = ConvGeometry::new(input, kernel, stride)?;
    if grad_out.shape() != [g.batch, g.out_len, g.c_out] {
        return Err(Error::shape(format!(
            "conv1d gradient {:?} does not match output [{}, {}, {}]",
            grad_out.shape(),
            g.batch,
            g.out_len,
            g.c_out
        )));
    }
    let col = g.im2col(input.data());
    let mut dkernel = vec![0.0; g.cols() * g.c_out];
    gemm(
        g.cols(),
        g.rows(),
        g.c_out,
        &col,
        (1, g.cols()),
        grad_out.data(),
        (g.c_out, 1),
        0.0,
        &mut dkernel,
    );
    let mut dcol = col;
    gemm(
        g.rows(),
        g.c_out,
        g.cols(),
        grad_out.data(),
        (g.c_out, 1),
        kernel.data(),
        (1, g.c_out),
        0.0,
        &mut dcol,
    );
    let dx = g.col2im(&dcol);
    Ok((
        Tensor::from_parts_unchecked(input.shape().to_vec(), dx),
        Tensor::from_parts_unchecked(kernel.shape().to_vec(), dkernel),
    ))
}

/// Values the batch-norm backward pass needs.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-channel batch statistics from a training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n-1) variance, the form folded into running statistics.
    pub var_unbiased: Vec<f64>,
}

fn check_channels(input: &Tensor, gamma: &[f64], beta: &[f64]) -> Result<(usize, usize)> {
    let (b, l, c) = input.dims3("batchnorm input")?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(format!(
            "batchnorm input {:?} has {c} channels, gamma/beta have {}/{}",
            input.shape(),
            gamma.len(),
            beta.len()
        )));
    }
    Ok((b * l, c))
}

/// Training mode: normalizes each channel over batch and length.
pub fn batchnorm_forward_train(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, BatchNormCache, BatchStats)> {
    let (n, c) = check_channels(input, gamma, beta)?;
    let x = input.data();
    let mut mean = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let var_unbiased: Vec<f64> = var
        .iter()
        .map(|s| if n > 1 { s / (n - 1) as f64 } else { 0.0 })
        .collect();
    let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n as f64 + eps).sqrt()).collect();

    let mut normalized = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for ((xr, nr), or) in x
        .chunks_exact(c)
        .zip(normalized.chunks_exact_mut(c))
        .zip(out.chunks_exact_mut(c))
    {
        for j in 0..c {
            let h = (xr[j] - mean[j]) * inv_std[j];
            nr[j] = h;
            or[j] = gamma[j] * h + beta[j];
        }
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::from_parts_unchecked(shape.clone(), out),
        BatchNormCache {
            normalized: Tensor::from_parts_unchecked(shape, normalized),
            inv_std,
        },
        BatchStats { mean, var_unbiased },
    ))
}

/// Evaluation mode: normalizes with running statistics.
pub fn batchnorm_forward_eval(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let (_, c) = check_channels(input, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::shape("batchnorm running statistics length mismatch"));
    }
    let scale: Vec<f64> = (0..c).map(|j| gamma[j] / (running_var[j] + eps).sqrt()).collect();
    let mut out = input.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        for j in 0..c {
            row[j] = (row[j] - running_mean[j]) * scale[j] + beta[j];
        }
    }
    Ok(Tensor::from_parts_unchecked(input.shape().to_vec(), out))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(cache: &BatchNormCache, gamma: &[f64], grad_out: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
    let c = gamma.len();
    let xhat = cache.normalized.data();
    let dy = grad_out.data();
    let n = (dy.len() / c) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (yr, hr) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for j in 0..c {
            dgamma[j] += yr[j] * hr[j];
            dbeta[j] += yr[j];
        }
    }
    // dx = gamma * inv_std / n * (n*dy - sum(dy) - xhat * sum(dy*xhat))
    let mut dx = vec![0.0; dy.len()];
    for ((dr, yr), hr) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
        for j in 0..c {
            let k = gamma[j] * cache.inv_std[j] / n;
            dr[j] = k * (n * yr[j] - dbeta[j] - hr[j] * dgamma[j]);
        }
    }
    (
        Tensor::from_parts_unchecked(grad_out.shape().to_vec(), dx),
        dgamma,
        dbeta,
    )
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_parts_unchecked(input.shape().to_vec(), data)
}

/// Gradient through a ReLU given its *output*.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts_unchecked(grad_out.shape().to_vec(), data)
}

/// Width-2, stride-2 max pooling along length; an odd tail forms a window of
/// one. Returns the pooled tensor and the flat source index of every output.
pub fn maxpool2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (b, l, c) = input.dims3("maxpool input")?;
    let lo = l.div_ceil(2);
    let x = input.data();
    let mut out = vec![0.0; b * lo * c];
    let mut arg = vec![0usize; b * lo * c];
    for bi in 0..b {
        for o in 0..lo {
            let p0 = 2 * o;
            for j in 0..c {
                let i0 = (bi * l + p0) * c + j;
                let mut best = i0;
                if p0 + 1 < l {
                    let i1 = i0 + c;
                    if x[i1] > x[i0] {
                        best = i1;
                    }
                }
                let oi = (bi * lo + o) * c + j;
                out[oi] = x[best];
                arg[oi] = best;
            }
        }
    }
    Ok((Tensor::from_parts_unchecked(vec![b, lo, c], out), arg))
}

pub fn maxpool2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    dx
}

/// Appends zero channels so `[b, l, c]` becomes `[b, l, c_out]`.
pub fn pad_channels(input: &Tensor, c_out: usize) -> Result<Tensor> {
    let (b, l, c) = input.dims3("channel padding input")?;
    if c_out < c {
        return Err(Error::shape(format!("cannot pad {c} channels down to {c_out}")));
    }
    if c_out == c {
        return Ok(input.clone());
    }
    let mut out = vec![0.0; b * l * c_out];
    for (src, dst) in input.data().chunks_exact(c).zip(out.chunks_exact_mut(c_out)) {
        dst[..c].copy_from_slice(src);
    }
    Ok(Tensor::from_parts_unchecked(vec![b, l, c_out], out))
}

/// Keeps the first `c` channels of a gradient (the inverse of [`pad_channels`]).
pub fn unpad_channels(grad: &Tensor, c: usize) -> Tensor {
    let shape = grad.shape();
    let c_out = shape[2];
    if c == c_out {
        return grad.clone();
    }
    let data = grad
        .data()
        .chunks_exact(c_out)
        .flat_map(|row| row[..c].iter().copied())
        .collect();
    Tensor::from_parts_unchecked(vec![shape[0], shape[1], c], data)
}

/// Mean over the length axis: `[b, l, c]` to `[b, c]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (b, l, c) = input.dims3("GAP input")?;
    let mut out = vec![0.0; b * c];
    for bi in 0..b {
        let o = &mut out[bi * c..(bi + 1) * c];
        for row in input.data()[bi * l * c..(bi + 1) * l * c].chunks_exact(c) {
            for (a, v) in o.iter_mut().zip(row) {
                *a += v;
            }
        }
        o.iter_mut().for_each(|a| *a /= l as f64);
    }
    Ok(Tensor::from_parts_unchecked(vec![b, c], out))
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (b, l, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut dx = vec![0.0; b * l * c];
    for bi in 0..b {
        let g = &grad_out.data()[bi * c..(bi + 1) * c];
        for row in dx[bi * l * c..(bi + 1) * l * c].chunks_exact_mut(c) {
            for (d, gv) in row.iter_mut().zip(g) {
                *d = gv / l as f64;
            }
        }
    }
    Tensor::from_parts_unchecked(input_shape.to_vec(), dx)
}

/// `input [b, d] · weight [d, k] + bias [k]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (b, d) = input.dims2("dense input")?;
    let (wd, k) = weight.dims2("dense weight")?;
    if wd != d || bias.len() != k {
        return Err(Error::shape(format!(
            "dense input {:?} incompatible with weight {:?} / bias [{}]",
            input.shape(),
            weight.shape(),
            bias.len()
        )));
    }
    let mut out: Vec<f64> = (0..b).flat_map(|_| bias.iter().copied()).collect();
    gemm(b, d, k, input.data(), (d, 1), weight.data(), (k, 1), 1.0, &mut out);
    Ok(Tensor::from_parts_unchecked(vec![b, k], out))
}

/// Returns `(d_input, d_weight, d_bias)`.
pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let (b, d) = (input.shape()[0], input.shape()[1]);
    let k = weight.shape()[1];
    let mut dw = vec![0.0; d * k];
    gemm(d, b, k, input.data(), (1, d), grad_out.data(), (k, 1), 0.0, &mut dw);
    let mut dx = vec![0.0; b * d];
    gemm(b, k, d, grad_out.data(), (k, 1), weight.data(), (1, k), 0.0, &mut dx);
    let mut db = vec![0.0; k];
    for row in grad_out.data().chunks_exact(k) {
        for (a, g) in db.iter_mut().zip(row) {
            *a += g;
        }
    }
    (
        Tensor::from_parts_unchecked(vec![b, d], dx),
        Tensor::from_parts_unchecked(vec![d, k], dw),
        db,
    )
}

/// Row-wise softmax of `[b, k]` logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Tensor::from_parts_unchecked(logits.shape().to_vec(), out)
}

/// Smallest probability admitted into a logarithm.
pub const PROB_FLOOR: f64 = 1e-15;

/// Mean negative log-probability of the true class, from probability rows.
pub fn cross_entropy_loss(probabilities: &Tensor, labels: &[usize]) -> f64 {
    let k = *probabilities.shape().last().unwrap_or(&1);
    let rows = probabilities.data().chunks_exact(k);
    let n = labels.len().max(1) as f64;
    rows.zip(labels)
        .map(|(row, &y)| -row[y].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / n
}

/// Mean cross-entropy computed stably from logits, plus its gradient with
/// respect to the logits.
pub fn cross_entropy_from_logits(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let k = *logits.shape().last().unwrap_or(&1);
    let n = labels.len().max(1) as f64;
    let mut grad = softmax(logits).into_data();
    let mut loss = 0.0;
    for ((row, grow), &y) in logits.data().chunks_exact(k).zip(grad.chunks_exact_mut(k)).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += (lse - row[y]).min(-PROB_FLOOR.ln());
        grow[y] -= 1.0;
        grow.iter_mut().for_each(|g| *g /= n);
    }
    (loss / n, Tensor::from_parts_unchecked(logits.shape().to_vec(), grad))
}
