use std::fmt;

use super::config::{CellKind, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{ParamTree, Rng, Tensor};
use crate::qkernel::KernelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
}

pub const GATES: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

impl Gate {
    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Candidate => "c",
            Gate::Output => "o",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `C_out x K x C_in`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Parameters of one QK-LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QkLstmParams {
    pub hidden: usize,
    pub kernel: KernelConfig,
    /// `N x (n + p)`, shared by all four gates.
    pub landmarks: Tensor,
    /// Per gate, `N x n` kernel coefficients.
    pub beta: [Tensor; 4],
    /// Per gate, `(n + p)` angle scalings.
    pub scale: [Tensor; 4],
    pub bias: Option<[Tensor; 4]>,
}

impl QkLstmParams {
    pub fn num_landmarks(&self) -> usize {
        self.landmarks.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.feature_dim - self.hidden
    }
}

/// Parameters of one classical LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden: usize,
    /// Per gate, `n x (n + p)` acting on `[h; x]`.
    pub weight: [Tensor; 4],
    pub bias: [Tensor; 4],
}

impl LstmParams {
    pub fn input_dim(&self) -> usize {
        self.weight[0].shape()[1] - self.hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecurrentParams {
    Quantum(QkLstmParams),
    Classical(LstmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `C x n`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Typed view of a model's [`ParamTree`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub conv: Vec<ConvLayer>,
    pub recurrent: Vec<RecurrentParams>,
    pub head: HeadParams,
}

fn take(tree: &ParamTree, name: &str, shape: &[usize]) -> Result<Tensor> {
    let t = tree.expect(name)?;
    if t.shape() != shape {
        return Err(Error::Shape(format!(
            "parameter `{name}` has shape {:?}, config expects {:?}",
            t.shape(),
            shape
        )));
    }
    Ok(t.clone())
}

fn gate_tensors(tree: &ParamTree, prefix: &str, what: &str, shape: &[usize]) -> Result<[Tensor; 4]> {
    let get = |g: Gate| take(tree, &format!("{prefix}.{what}_{}", g.suffix()), shape);
    Ok([
        get(Gate::Forget)?,
        get(Gate::Input)?,
        get(Gate::Candidate)?,
        get(Gate::Output)?,
    ])
}

impl NetworkParams {
    pub fn from_tree(cfg: &ModelConfig, tree: &ParamTree) -> Result<Self> {
        cfg.validate()?;
        let expected = count_params(cfg).total;
        if tree.num_values() != expected {
            return Err(Error::Shape(format!(
                "parameter tree holds {} values, config expects {expected}",
                tree.num_values()
            )));
        }
        let conv = (0..cfg.conv_layers)
            .map(|l| {
                let c_in = cfg.conv_input(l);
                Ok(ConvLayer {
                    weight: take(tree, &format!("conv{l}.weight"), &[cfg.conv_filters, cfg.conv_width, c_in])?,
                    bias: take(tree, &format!("conv{l}.bias"), &[cfg.conv_filters])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = cfg.hidden;
        let recurrent = (0..cfg.recurrent_layers)
            .map(|l| {
                let prefix = format!("rnn{l}");
                let d = n + cfg.recurrent_input(l);
                Ok(match cfg.cell {
                    CellKind::Quantum => RecurrentParams::Quantum(QkLstmParams {
                        hidden: n,
                        kernel: KernelConfig::new(d, cfg.block_size, cfg.kernel_depth)?,
                        landmarks: take(tree, &format!("{prefix}.landmarks"), &[cfg.landmarks, d])?,
                        beta: gate_tensors(tree, &prefix, "beta", &[cfg.landmarks, n])?,
                        scale: gate_tensors(tree, &prefix, "scale", &[d])?,
                        bias: if cfg.gate_bias {
                            Some(gate_tensors(tree, &prefix, "bias", &[n])?)
                        } else {
                            None
                        },
                    }),
                    CellKind::Classical => RecurrentParams::Classical(LstmParams {
                        hidden: n,
                        weight: gate_tensors(tree, &prefix, "weight", &[n, d])?,
                        bias: gate_tensors(tree, &prefix, "bias", &[n])?,
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = HeadParams {
            weight: take(tree, "head.weight", &[cfg.classes, n])?,
            bias: take(tree, "head.bias", &[cfg.classes])?,
        };
        Ok(Self { conv, recurrent, head })
    }

    pub fn to_tree(&self) -> ParamTree {
        let mut entries: Vec<(String, Tensor)> = Vec::new();
        for (l, c) in self.conv.iter().enumerate() {
            entries.push((format!("conv{l}.weight"), c.weight.clone()));
            entries.push((format!("conv{l}.bias"), c.bias.clone()));
        }
        for (l, r) in self.recurrent.iter().enumerate() {
            let prefix = format!("rnn{l}");
            let mut gates = |what: &str, ts: &[Tensor; 4]| {
                for g in GATES {
                    entries.push((format!("{prefix}.{what}_{}", g.suffix()), ts[g.index()].clone()));
                }
            };
            match r {
                RecurrentParams::Quantum(p) => {
                    gates("beta", &p.beta);
                    gates("scale", &p.scale);
                    if let Some(b) = &p.bias {
                        gates("bias", b);
                    }
                    entries.push((format!("{prefix}.landmarks"), p.landmarks.clone()));
                }
                RecurrentParams::Classical(p) => {
                    gates("weight", &p.weight);
                    gates("bias", &p.bias);
                }
            }
        }
        entries.push(("head.weight".into(), self.head.weight.clone()));
        entries.push(("head.bias".into(), self.head.bias.clone()));
        entries.into_iter().collect()
    }

    /// Same structure with every value set to zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        let z4 = |ts: &[Tensor; 4]| [z(&ts[0]), z(&ts[1]), z(&ts[2]), z(&ts[3])];
        Self {
            conv: self
                .conv
                .iter()
                .map(|c| ConvLayer {
                    weight: z(&c.weight),
                    bias: z(&c.bias),
                })
                .collect(),
            recurrent: self
                .recurrent
                .iter()
                .map(|r| match r {
                    RecurrentParams::Quantum(p) => RecurrentParams::Quantum(QkLstmParams {
                        hidden: p.hidden,
                        kernel: p.kernel,
                        landmarks: z(&p.landmarks),
                        beta: z4(&p.beta),
                        scale: z4(&p.scale),
                        bias: p.bias.as_ref().map(z4),
                    }),
                    RecurrentParams::Classical(p) => RecurrentParams::Classical(LstmParams {
                        hidden: p.hidden,
                        weight: z4(&p.weight),
                        bias: z4(&p.bias),
                    }),
                })
                .collect(),
            head: HeadParams {
                weight: z(&self.head.weight),
                bias: z(&self.head.bias),
            },
        }
    }
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-bound, bound)).collect())
        .expect("shape and data length agree")
}

fn normal_tensor(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.normal()).collect()).expect("shape and data length agree")
}

/// Fresh parameters. Each tensor draws from its own child stream, so adding
/// a layer does not reshuffle the others.
pub fn init_params(cfg: &ModelConfig, rng: &Rng) -> Result<ParamTree> {
    cfg.validate()?;
    let mut label = 0u64;
    let mut next = || {
        label += 1;
        rng.child(label)
    };
    let conv = (0..cfg.conv_layers)
        .map(|l| {
            let c_in = cfg.conv_input(l);
            let bound = 1.0 / ((cfg.conv_width * c_in) as f64).sqrt();
            ConvLayer {
                weight: uniform_tensor(&[cfg.conv_filters, cfg.conv_width, c_in], bound, &mut next()),
                bias: uniform_tensor(&[cfg.conv_filters], bound, &mut next()),
            }
        })
        .collect();
    let n = cfg.hidden;
    let mut recurrent = Vec::new();
    for l in 0..cfg.recurrent_layers {
        let d = n + cfg.recurrent_input(l);
        let layer = match cfg.cell {
            CellKind::Quantum => {
                let landmarks = normal_tensor(&[cfg.landmarks, d], 0.5, &mut next());
                let beta_scale = 1.0 / (cfg.landmarks as f64).sqrt();
                let beta = [(); 4].map(|_| normal_tensor(&[cfg.landmarks, n], beta_scale, &mut next()));
                RecurrentParams::Quantum(QkLstmParams {
                    hidden: n,
                    kernel: KernelConfig::new(d, cfg.block_size, cfg.kernel_depth)?,
                    landmarks,
                    beta,
                    scale: [(); 4].map(|_| Tensor::filled(&[d], 1.0)),
                    bias: cfg.gate_bias.then(|| [(); 4].map(|_| Tensor::zeros(&[n]))),
                })
            }
            CellKind::Classical => {
                let bound = 1.0 / (n as f64).sqrt();
                RecurrentParams::Classical(LstmParams {
                    hidden: n,
                    weight: [(); 4].map(|_| uniform_tensor(&[n, d], bound, &mut next())),
                    bias: [(); 4].map(|_| uniform_tensor(&[n], bound, &mut next())),
                })
            }
        };
        recurrent.push(layer);
    }
    let bound = 1.0 / (n as f64).sqrt();
    let head = HeadParams {
        weight: uniform_tensor(&[cfg.classes, n], bound, &mut next()),
        bias: uniform_tensor(&[cfg.classes], bound, &mut next()),
    };
    Ok(NetworkParams { conv, recurrent, head }.to_tree())
}

/// Trainable parameter counts per component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub rows: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn get(&self, component: &str) -> Option<usize> {
        self.rows.iter().find(|(n, _)| n == component).map(|&(_, c)| c)
    }

    /// Sum over all recurrent layers.
    pub fn recurrent_total(&self) -> usize {
        self.rows
            .iter()
            .filter(|(n, _)| n.starts_with("rnn"))
            .map(|&(_, c)| c)
            .sum()
    }
}

/// Formats a count with thousands separators, e.g. `33,024`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, count) in &self.rows {
            writeln!(f, "{name:<12} {:>12}", group_thousands(*count))?;
        }
        write!(f, "{:<12} {:>12}", "total", group_thousands(self.total))
    }
}

/// Classical LSTM layer with input width `m` and hidden size `n`.
pub fn lstm_layer_params(m: usize, n: usize) -> usize {
    4 * (n * (m + n) + n)
}

/// QK-LSTM layer: landmarks, per-gate coefficients, per-gate scalings, optional per-gate bias.
pub fn qklstm_layer_params(m: usize, n: usize, landmarks: usize, bias: bool) -> usize {
    landmarks * (m + n) + 4 * landmarks * n + 4 * (m + n) + if bias { 4 * n } else { 0 }
}

pub fn count_params(cfg: &ModelConfig) -> ParamCount {
    let mut rows = Vec::new();
    for l in 0..cfg.conv_layers {
        let c_in = cfg.conv_input(l);
        rows.push((format!("conv{l}"), cfg.conv_filters * (cfg.conv_width * c_in + 1)));
    }
    for l in 0..cfg.recurrent_layers {
        let m = cfg.recurrent_input(l);
        let count = match cfg.cell {
            CellKind::Quantum => qklstm_layer_params(m, cfg.hidden, cfg.landmarks, cfg.gate_bias),
            CellKind::Classical => lstm_layer_params(m, cfg.hidden),
        };
        rows.push((format!("rnn{l}"), count));
    }
    rows.push(("head".into(), cfg.hidden * cfg.classes + cfg.classes));
    let total = rows.iter().map(|&(_, c)| c).sum();
    ParamCount { rows, total }
}
