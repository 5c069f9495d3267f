use super::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Tanh => x.map(f64::tanh),
        Activation::Relu => x.map(relu),
    }
}

/// Saved state of a [`conv1d_forward`] call.
#[derive(Debug, Clone)]
pub struct Conv1dCache {
    pub input: Tensor,
    pub weights: Tensor,
    /// Activations before the ReLU, `(T - K + 1) x C_out`.
    pub pre: Tensor,
}

/// Valid, stride-1 temporal convolution followed by ReLU.
///
/// `output[t, k] = relu(sum_{i<K} sum_c w[k, i, c] * input[t + i, c] + b[k])`
pub fn conv1d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(Tensor, Conv1dCache)> {
    let (t_in, c_in) = input.dims2()?;
    let (c_out, k, wc_in) = weights.dims3()?;
    if wc_in != c_in {
        return Err(Error::Shape(format!(
            "conv input has {c_in} channels, filters expect {wc_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape(format!(
            "conv bias shape {:?}, expected [{c_out}]",
            bias.shape()
        )));
    }
    if k == 0 || t_in < k {
        return Err(Error::WindowTooShort { len: t_in, width: k });
    }
    let t_out = t_in - k + 1;
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let mut pre = vec![0.0; t_out * c_out];
    for t in 0..t_out {
        let window = &x[t * c_in..(t + k) * c_in];
        for o in 0..c_out {
            let filt = &w[o * k * c_in..(o + 1) * k * c_in];
            let acc: f64 = window.iter().zip(filt).map(|(a, b)| a * b).sum();
            pre[t * c_out + o] = acc + b[o];
        }
    }
    let pre = Tensor::matrix(t_out, c_out, pre)?;
    let out = pre.map(relu);
    Ok((
        out,
        Conv1dCache {
            input: input.clone(),
            weights: weights.clone(),
            pre,
        },
    ))
}

/// Gradients of [`conv1d_forward`]; ReLU passes gradient only where `pre > 0`.
pub fn conv1d_backward(cache: &Conv1dCache, upstream: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    if upstream.shape() != cache.pre.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match conv output {:?}",
            upstream.shape(),
            cache.pre.shape()
        )));
    }
    let (t_in, c_in) = cache.input.dims2()?;
    let (c_out, k, _) = cache.weights.dims3()?;
    let t_out = t_in - k + 1;
    let x = cache.input.data();
    let w = cache.weights.data();
    let mut dx = vec![0.0; t_in * c_in];
    let mut dw = vec![0.0; c_out * k * c_in];
    let mut db = vec![0.0; c_out];
    for t in 0..t_out {
        for o in 0..c_out {
            let g = if cache.pre.data()[t * c_out + o] > 0.0 {
                upstream.data()[t * c_out + o]
            } else {
                0.0
            };
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let base = o * k * c_in;
            for j in 0..k * c_in {
                dw[base + j] += g * x[t * c_in + j];
                dx[t * c_in + j] += g * w[base + j];
            }
        }
    }
    Ok((
        Tensor::matrix(t_in, c_in, dx)?,
        Tensor::new(vec![c_out, k, c_in], dw)?,
        Tensor::from_vec(db),
    ))
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let c = logits.len();
    if label >= c {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Inverted dropout. Returns the output and the per-element scale that was
/// applied (`None` when nothing was dropped), for use in the backward pass.
pub fn dropout(x: &Tensor, p: f64, rng: &mut Rng, training: bool) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} must lie in [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    let mut out = x.clone();
    out.data_mut()
        .iter_mut()
        .zip(&mask)
        .for_each(|(v, m)| *v *= m);
    Ok((out, Some(mask)))
}
