use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use super::statevector::{block_fidelity, MAX_BLOCK_QUBITS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Shape of the block-product encoding circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    pub feature_dim: usize,
    pub block_size: usize,
    pub depth: usize,
}

impl KernelConfig {
    pub fn new(feature_dim: usize, block_size: usize, depth: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("kernel feature dimension must be >= 1".into()));
        }
        if block_size == 0 || block_size > MAX_BLOCK_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "block size {block_size} outside 1..={MAX_BLOCK_QUBITS}"
            )));
        }
        Ok(Self {
            feature_dim,
            block_size,
            depth,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.feature_dim.div_ceil(self.block_size)
    }

    fn check(&self, a: &[f64], b: &[f64], w: &[f64]) -> Result<()> {
        let d = self.feature_dim;
        if a.len() != d || b.len() != d || w.len() != d {
            return Err(Error::Shape(format!(
                "kernel expects {d} features, got a={}, b={}, w={}",
                a.len(),
                b.len(),
                w.len()
            )));
        }
        Ok(())
    }

    /// Angle table of block `blk`; padded qubits get angle 0.
    fn angles(&self, x: &[f64], w: &[f64], blk: usize) -> Vec<Vec<f64>> {
        let layer: Vec<f64> = (0..self.block_size)
            .map(|k| {
                let i = blk * self.block_size + k;
                if i < self.feature_dim {
                    w[i] * x[i]
                } else {
                    0.0
                }
            })
            .collect();
        vec![layer; self.depth + 1]
    }
}

/// Gradients of a kernel value with respect to both arguments and the scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad {
    pub da: Vec<f64>,
    pub db: Vec<f64>,
    pub dw: Vec<f64>,
}

/// `prod_k cos^2(w_k (a_k - b_k) / 2)`, the depth-0 kernel.
pub fn closed_form_kernel(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), s)| {
            let c = (0.5 * s * (x - y)).cos();
            c * c
        })
        .product()
}

/// Fidelity computed by simulating `U(b)^dagger U(a)|0>` block by block,
/// regardless of depth.
pub fn fidelity_statevector(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<f64> {
    cfg.check(a, b, w)?;
    let mut k = 1.0;
    for blk in 0..cfg.num_blocks() {
        k *= block_fidelity(&cfg.angles(a, w, blk), &cfg.angles(b, w, blk), cfg.block_size)?;
    }
    // rounding can push an exact fidelity a few ulps past its bounds
    Ok(k.clamp(0.0, 1.0))
}

/// Quantum fidelity kernel. Depth 0 uses the closed form, deeper circuits are simulated.
pub fn kernel_value(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if cfg.depth == 0 {
        cfg.check(a, b, w)?;
        Ok(closed_form_kernel(a, b, w))
    } else {
        fidelity_statevector(a, b, w, cfg)
    }
}

/// Kernel value and its gradient. Depth 0 is differentiated analytically,
/// deeper circuits by the parameter-shift rule.
pub fn kernel_value_and_grad(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<(f64, KernelGrad)> {
    if cfg.depth == 0 {
        cfg.check(a, b, w)?;
        Ok(analytic_value_and_grad(a, b, w))
    } else {
        parameter_shift_value_and_grad(a, b, w, cfg)
    }
}

pub fn kernel_grad(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<KernelGrad> {
    kernel_value_and_grad(a, b, w, cfg).map(|(_, g)| g)
}

/// Analytic gradient of the product-of-cos² form (valid at depth 0 only).
pub fn kernel_grad_analytic(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<KernelGrad> {
    cfg.check(a, b, w)?;
    if cfg.depth != 0 {
        return Err(Error::InvalidArgument(
            "analytic kernel gradient only exists at depth 0".into(),
        ));
    }
    Ok(analytic_value_and_grad(a, b, w).1)
}

pub fn kernel_grad_parameter_shift(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<KernelGrad> {
    parameter_shift_value_and_grad(a, b, w, cfg).map(|(_, g)| g)
}

fn analytic_value_and_grad(a: &[f64], b: &[f64], w: &[f64]) -> (f64, KernelGrad) {
    let d = a.len();
    let factors: Vec<f64> = (0..d)
        .map(|k| {
            let c = (0.5 * w[k] * (a[k] - b[k])).cos();
            c * c
        })
        .collect();
    // product of all factors except k, via prefix/suffix products
    let mut prefix = vec![1.0; d + 1];
    for k in 0..d {
        prefix[k + 1] = prefix[k] * factors[k];
    }
    let mut suffix = 1.0;
    let mut grad = KernelGrad {
        da: vec![0.0; d],
        db: vec![0.0; d],
        dw: vec![0.0; d],
    };
    for k in (0..d).rev() {
        let others = prefix[k] * suffix;
        let diff = a[k] - b[k];
        // d/du cos^2(u/2) = -sin(u)/2 with u = w * diff
        let s = -0.5 * (w[k] * diff).sin() * others;
        grad.da[k] = s * w[k];
        grad.db[k] = -s * w[k];
        grad.dw[k] = s * diff;
        suffix *= factors[k];
    }
    (prefix[d], grad)
}

fn parameter_shift_value_and_grad(a: &[f64], b: &[f64], w: &[f64], cfg: &KernelConfig) -> Result<(f64, KernelGrad)> {
    cfg.check(a, b, w)?;
    let q = cfg.block_size;
    let nb = cfg.num_blocks();
    let blocks: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..nb)
        .map(|blk| (cfg.angles(a, w, blk), cfg.angles(b, w, blk)))
        .collect();
    let fids = blocks
        .iter()
        .map(|(ta, tb)| block_fidelity(ta, tb, q))
        .collect::<Result<Vec<f64>>>()?;

    let mut prefix = vec![1.0; nb + 1];
    for i in 0..nb {
        prefix[i + 1] = prefix[i] * fids[i];
    }
    let mut suffix = vec![1.0; nb + 1];
    for i in (0..nb).rev() {
        suffix[i] = suffix[i + 1] * fids[i];
    }

    let d = cfg.feature_dim;
    let mut grad = KernelGrad {
        da: vec![0.0; d],
        db: vec![0.0; d],
        dw: vec![0.0; d],
    };
    for (blk, (ta, tb)) in blocks.iter().enumerate() {
        let others = prefix[blk] * suffix[blk + 1];
        for k in 0..q {
            let i = blk * q + k;
            if i >= d {
                break;
            }
            // every layer re-uploads the same angle, so sum over occurrences
            let mut d_theta_a = 0.0;
            let mut d_theta_b = 0.0;
            for l in 0..=cfg.depth {
                d_theta_a += shifted_difference(ta, l, k, |shifted| block_fidelity(shifted, tb, q))?;
                d_theta_b += shifted_difference(tb, l, k, |shifted| block_fidelity(ta, shifted, q))?;
            }
            d_theta_a *= others;
            d_theta_b *= others;
            grad.da[i] = w[i] * d_theta_a;
            grad.db[i] = w[i] * d_theta_b;
            grad.dw[i] = a[i] * d_theta_a + b[i] * d_theta_b;
        }
    }
    Ok((prefix[nb], grad))
}

/// `(f(theta + pi/2) - f(theta - pi/2)) / 2` for the angle at `(layer, qubit)`.
fn shifted_difference<F>(angles: &[Vec<f64>], layer: usize, qubit: usize, f: F) -> Result<f64>
where
    F: Fn(&[Vec<f64>]) -> Result<f64>,
{
    let mut shifted = angles.to_vec();
    shifted[layer][qubit] += FRAC_PI_2;
    let plus = f(&shifted)?;
    shifted[layer][qubit] -= 2.0 * FRAC_PI_2;
    let minus = f(&shifted)?;
    Ok(0.5 * (plus - minus))
}

/// Symmetric Gram matrix of the rows of `x` (an `N x D` tensor).
pub fn gram_matrix(x: &Tensor, w: &[f64], cfg: &KernelConfig) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if n == 0 {
        return Err(Error::Empty("gram matrix needs at least one row".into()));
    }
    if d != cfg.feature_dim {
        return Err(Error::Shape(format!(
            "rows have {d} features, kernel expects {}",
            cfg.feature_dim
        )));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| if j == i { Ok(1.0) } else { kernel_value(x.row(i), x.row(j), w, cfg) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate().skip(1) {
            let j = i + off;
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
        // fidelity of a state with itself
        g[i * n + i] = 1.0;
    }
    Tensor::matrix(n, n, g)
}
