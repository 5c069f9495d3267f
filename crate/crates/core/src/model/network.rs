use rayon::prelude::*;

use super::cells::{
    classical_lstm_cell_backward, classical_lstm_cell_forward, qklstm_cell_backward, qklstm_cell_forward, CellState,
    LstmCellCache, QkCellCache,
};
use super::config::{ModelConfig, Pooling};
use super::params::{NetworkParams, QkLstmParams, RecurrentParams};
use crate::error::{Error, Result};
use crate::numerics::{conv1d_backward, conv1d_forward, dropout, softmax_cross_entropy, Conv1dCache, ParamTree, Rng, Tensor};

#[derive(Debug, Clone)]
pub enum StepCaches {
    Quantum(Vec<QkCellCache>),
    Classical(Vec<LstmCellCache>),
}

impl StepCaches {
    pub fn len(&self) -> usize {
        match self {
            StepCaches::Quantum(c) => c.len(),
            StepCaches::Classical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of running one recurrent layer over a sequence.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// `T x n` hidden states.
    pub hidden: Tensor,
    pub final_state: CellState,
    pub caches: StepCaches,
}

/// Runs a QK-LSTM layer left to right over a `T x p` sequence.
pub fn qklstm_layer_forward(seq: &Tensor, init: &CellState, p: &QkLstmParams) -> Result<LayerOutput> {
    recurrent_forward(seq, init, &RecurrentParams::Quantum(p.clone()))
}

pub fn recurrent_forward(seq: &Tensor, init: &CellState, params: &RecurrentParams) -> Result<LayerOutput> {
    let (steps, _) = seq.dims2()?;
    if steps == 0 {
        return Err(Error::Empty("recurrent layer got an empty sequence".into()));
    }
    let n = match params {
        RecurrentParams::Quantum(p) => p.hidden,
        RecurrentParams::Classical(p) => p.hidden,
    };
    let mut hidden = Vec::with_capacity(steps * n);
    let mut state = init.clone();
    let caches = match params {
        RecurrentParams::Quantum(p) => {
            let mut caches = Vec::with_capacity(steps);
            for t in 0..steps {
                let (next, cache) = qklstm_cell_forward(seq.row(t), &state, p)?;
                hidden.extend_from_slice(&next.h);
                caches.push(cache);
                state = next;
            }
            StepCaches::Quantum(caches)
        }
        RecurrentParams::Classical(p) => {
            let mut caches = Vec::with_capacity(steps);
            for t in 0..steps {
                let (next, cache) = classical_lstm_cell_forward(seq.row(t), &state, p)?;
                hidden.extend_from_slice(&next.h);
                caches.push(cache);
                state = next;
            }
            StepCaches::Classical(caches)
        }
    };
    Ok(LayerOutput {
        hidden: Tensor::matrix(steps, n, hidden)?,
        final_state: state,
        caches,
    })
}

/// Backpropagation through time over the full sequence. `d_hidden` holds the
/// loss gradient on every emitted hidden state; returns the gradient on the
/// layer input.
pub fn recurrent_backward(
    caches: &StepCaches,
    params: &RecurrentParams,
    d_hidden: &Tensor,
    grads: &mut RecurrentParams,
) -> Result<Tensor> {
    let (steps, n) = d_hidden.dims2()?;
    if steps != caches.len() {
        return Err(Error::StaleCache(format!(
            "{} cached steps but gradient covers {steps}",
            caches.len()
        )));
    }
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dx_rows: Vec<Vec<f64>> = vec![Vec::new(); steps];
    for t in (0..steps).rev() {
        let dh: Vec<f64> = d_hidden.row(t).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dh_prev, dc_prev, dx) = match (caches, params, &mut *grads) {
            (StepCaches::Quantum(c), RecurrentParams::Quantum(p), RecurrentParams::Quantum(g)) => {
                qklstm_cell_backward(&c[t], p, &dh, &dc_next, g)?
            }
            (StepCaches::Classical(c), RecurrentParams::Classical(p), RecurrentParams::Classical(g)) => {
                classical_lstm_cell_backward(&c[t], p, &dh, &dc_next, g)?
            }
            _ => return Err(Error::StaleCache("cell kind changed between forward and backward".into())),
        };
        dh_next = dh_prev;
        dc_next = dc_prev;
        dx_rows[t] = dx;
    }
    let p = dx_rows[0].len();
    Tensor::matrix(steps, p, dx_rows.concat())
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    conv: Vec<Conv1dCache>,
    /// Dropout scale applied to the input of each recurrent layer.
    masks: Vec<Option<Vec<f64>>>,
    layers: Vec<StepCaches>,
    pooled: Vec<f64>,
    steps: usize,
}

/// The DeepConv-(QK-)LSTM network: conv stack, dropout, recurrent layers, linear head.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: NetworkParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: &ParamTree) -> Result<Self> {
        let params = NetworkParams::from_tree(&config, params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn param_tree(&self) -> ParamTree {
        self.params.to_tree()
    }

    /// Returns the class logits. Dropout is active only when `training`.
    pub fn forward(&self, window: &Tensor, rng: &mut Rng, training: bool) -> Result<(Vec<f64>, ForwardCache)> {
        let cfg = &self.config;
        let (t, d) = window.dims2()?;
        if d != cfg.input_channels {
            return Err(Error::Shape(format!(
                "window has {d} channels, model expects {}",
                cfg.input_channels
            )));
        }
        if t < cfg.min_window() {
            return Err(Error::WindowTooShort {
                len: t,
                width: cfg.min_window(),
            });
        }
        let mut x = window.clone();
        let mut conv = Vec::with_capacity(self.params.conv.len());
        for layer in &self.params.conv {
            let (y, cache) = conv1d_forward(&x, &layer.weight, &layer.bias)?;
            conv.push(cache);
            x = y;
        }
        let steps = x.dims2()?.0;
        let mut masks = Vec::with_capacity(self.params.recurrent.len());
        let mut layers = Vec::with_capacity(self.params.recurrent.len());
        for layer in &self.params.recurrent {
            let (dropped, mask) = dropout(&x, cfg.dropout, rng, training)?;
            masks.push(mask);
            let out = recurrent_forward(&dropped, &CellState::zeros(cfg.hidden), layer)?;
            layers.push(out.caches);
            x = out.hidden;
        }
        let pooled = match cfg.pooling {
            Pooling::Last => x.row(steps - 1).to_vec(),
            Pooling::Mean => {
                let mut acc = vec![0.0; cfg.hidden];
                for s in 0..steps {
                    for (a, v) in acc.iter_mut().zip(x.row(s)) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= steps as f64);
                acc
            }
        };
        let head = &self.params.head;
        let logits: Vec<f64> = (0..cfg.classes)
            .map(|c| head.bias.data()[c] + head.weight.row(c).iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        Ok((
            logits,
            ForwardCache {
                conv,
                masks,
                layers,
                pooled,
                steps,
            },
        ))
    }

    /// Exact reverse-mode gradient of `sum(dlogits * logits)` for every parameter.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Result<ParamTree> {
        let cfg = &self.config;
        if dlogits.len() != cfg.classes
            || cache.layers.len() != self.params.recurrent.len()
            || cache.conv.len() != self.params.conv.len()
            || cache.pooled.len() != cfg.hidden
        {
            return Err(Error::StaleCache(
                "forward cache was produced by a different model configuration".into(),
            ));
        }
        let mut grads = self.params.zeros_like();
        let n = cfg.hidden;

        let head = &self.params.head;
        let mut d_pooled = vec![0.0; n];
        for (c, &g) in dlogits.iter().enumerate() {
            grads.head.bias.data_mut()[c] += g;
            for ((gw, &p), (dp, &w)) in grads
                .head
                .weight
                .row_mut(c)
                .iter_mut()
                .zip(&cache.pooled)
                .zip(d_pooled.iter_mut().zip(head.weight.row(c)))
            {
                *gw += g * p;
                *dp += g * w;
            }
        }

        let steps = cache.steps;
        let mut d_hidden = Tensor::zeros(&[steps, n]);
        match cfg.pooling {
            Pooling::Last => d_hidden.row_mut(steps - 1).copy_from_slice(&d_pooled),
            Pooling::Mean => {
                for s in 0..steps {
                    for (a, v) in d_hidden.row_mut(s).iter_mut().zip(&d_pooled) {
                        *a = v / steps as f64;
                    }
                }
            }
        }

        for l in (0..self.params.recurrent.len()).rev() {
            let mut d_in = recurrent_backward(&cache.layers[l], &self.params.recurrent[l], &d_hidden, &mut grads.recurrent[l])?;
            if let Some(mask) = &cache.masks[l] {
                d_in.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            d_hidden = d_in;
        }

        for l in (0..self.params.conv.len()).rev() {
            let (dx, dw, db) = conv1d_backward(&cache.conv[l], &d_hidden)?;
            grads.conv[l].weight.add_assign(&dw)?;
            grads.conv[l].bias.add_assign(&db)?;
            d_hidden = dx;
        }
        Ok(grads.to_tree())
    }

    /// Cross-entropy of one window and its parameter gradient.
    pub fn loss_and_grad(&self, window: &Tensor, label: usize, rng: &mut Rng, training: bool) -> Result<(f64, ParamTree)> {
        let (logits, cache) = self.forward(window, rng, training)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
        Ok((loss, self.backward(&cache, &dlogits)?))
    }

    /// Mean loss and mean gradient over a batch. Windows are processed in
    /// parallel; window `i` draws its dropout masks from `rng.child(i)`, and
    /// gradients are summed in index order.
    pub fn batch_loss_and_grad(&self, windows: &[&Tensor], labels: &[usize], rng: &Rng, training: bool) -> Result<(f64, ParamTree)> {
        if windows.is_empty() || windows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "batch of {} windows with {} labels",
                windows.len(),
                labels.len()
            )));
        }
        let per_window = windows
            .par_iter()
            .zip(labels.par_iter())
            .enumerate()
            .map(|(i, (w, &y))| self.loss_and_grad(w, y, &mut rng.child(i as u64), training))
            .collect::<Result<Vec<_>>>()?;
        let mut iter = per_window.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g)?;
        }
        let scale = 1.0 / windows.len() as f64;
        grads.scale(scale);
        Ok((loss * scale, grads))
    }

    /// Eval-mode logits.
    pub fn logits(&self, window: &Tensor) -> Result<Vec<f64>> {
        // eval mode draws nothing from the stream
        let mut rng = Rng::new(0);
        self.forward(window, &mut rng, false).map(|(l, _)| l)
    }

    pub fn predict(&self, window: &Tensor) -> Result<usize> {
        let logits = self.logits(window)?;
        Ok(argmax(&logits))
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, CellKind};
    use crate::numerics::{adam_step, finite_diff_grad, relative_error, AdamHyper, AdamState, Rng};

    fn tiny_cfg(cell: CellKind) -> ModelConfig {
        ModelConfig {
            input_channels: 3,
            window: 8,
            conv_layers: 1,
            conv_filters: 4,
            conv_width: 3,
            recurrent_layers: 1,
            hidden: 4,
            landmarks: 4,
            classes: 3,
            dropout: 0.0,
            cell,
            ..Default::default()
        }
    }

    fn random_window(t: usize, d: usize, rng: &mut Rng) -> Tensor {
        Tensor::matrix(t, d, (0..t * d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let cfg = ModelConfig {
            dropout: 0.5,
            recurrent_layers: 2,
            ..tiny_cfg(CellKind::Quantum)
        };
        let model = Model::new(cfg.clone(), &init_params(&cfg, &Rng::new(1)).unwrap()).unwrap();
        let w = random_window(8, 3, &mut Rng::new(2));
        let a = model.forward(&w, &mut Rng::new(3), false).unwrap().0;
        let b = model.forward(&w, &mut Rng::new(4), false).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn too_short_window_rejected() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let model = Model::new(cfg.clone(), &init_params(&cfg, &Rng::new(1)).unwrap()).unwrap();
        let w = random_window(2, 3, &mut Rng::new(2));
        assert!(matches!(model.logits(&w), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn zero_dlogits_give_zero_gradients() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let model = Model::new(cfg.clone(), &init_params(&cfg, &Rng::new(5)).unwrap()).unwrap();
        let w = random_window(8, 3, &mut Rng::new(6));
        let (_, cache) = model.forward(&w, &mut Rng::new(0), true).unwrap();
        let g = model.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn cache_from_other_config_rejected() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let model = Model::new(cfg.clone(), &init_params(&cfg, &Rng::new(5)).unwrap()).unwrap();
        let other_cfg = ModelConfig {
            recurrent_layers: 2,
            ..cfg
        };
        let other = Model::new(other_cfg.clone(), &init_params(&other_cfg, &Rng::new(5)).unwrap()).unwrap();
        let w = random_window(8, 3, &mut Rng::new(6));
        let (_, cache) = other.forward(&w, &mut Rng::new(0), false).unwrap();
        assert!(matches!(model.backward(&cache, &[1.0, 0.0, 0.0]), Err(Error::StaleCache(_))));
    }

    #[test]
    fn layer_of_length_one_equals_single_cell() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let tree = init_params(&cfg, &Rng::new(7)).unwrap();
        let net = NetworkParams::from_tree(&cfg, &tree).unwrap();
        let RecurrentParams::Quantum(p) = &net.recurrent[0] else { unreachable!() };
        let x = [0.3, -0.1, 0.8, 0.2];
        let seq = Tensor::matrix(1, 4, x.to_vec()).unwrap();
        let out = qklstm_layer_forward(&seq, &CellState::zeros(4), p).unwrap();
        let (state, _) = qklstm_cell_forward(&x, &CellState::zeros(4), p).unwrap();
        assert_eq!(out.hidden.data(), &state.h[..]);
        assert_eq!(out.final_state, state);
    }

    #[test]
    fn zero_coefficients_on_zero_input_stay_at_rest() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let tree = init_params(&cfg, &Rng::new(7)).unwrap();
        let mut net = NetworkParams::from_tree(&cfg, &tree).unwrap();
        let RecurrentParams::Quantum(p) = &mut net.recurrent[0] else { unreachable!() };
        p.beta = [(); 4].map(|_| Tensor::zeros(&[4, 4]));
        let out = qklstm_layer_forward(&Tensor::zeros(&[6, 4]), &CellState::zeros(4), p).unwrap();
        assert!(out.hidden.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_sequence_resumes_exactly() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let tree = init_params(&cfg, &Rng::new(8)).unwrap();
        let net = NetworkParams::from_tree(&cfg, &tree).unwrap();
        let RecurrentParams::Quantum(p) = &net.recurrent[0] else { unreachable!() };
        let seq = random_window(7, 4, &mut Rng::new(9));
        let whole = qklstm_layer_forward(&seq, &CellState::zeros(4), p).unwrap();
        let head = Tensor::matrix(3, 4, seq.data()[..12].to_vec()).unwrap();
        let tail = Tensor::matrix(4, 4, seq.data()[12..].to_vec()).unwrap();
        let first = qklstm_layer_forward(&head, &CellState::zeros(4), p).unwrap();
        let second = qklstm_layer_forward(&tail, &first.final_state, p).unwrap();
        let joined: Vec<f64> = first.hidden.data().iter().chain(second.hidden.data()).copied().collect();
        assert_eq!(joined, whole.hidden.data());
    }

    #[test]
    fn empty_sequence_rejected() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let net = NetworkParams::from_tree(&cfg, &init_params(&cfg, &Rng::new(1)).unwrap()).unwrap();
        let RecurrentParams::Quantum(p) = &net.recurrent[0] else { unreachable!() };
        assert!(qklstm_layer_forward(&Tensor::zeros(&[0, 4]), &CellState::zeros(4), p).is_err());
    }

    #[test]
    fn hidden_states_bounded() {
        for cell in [CellKind::Quantum, CellKind::Classical] {
            let cfg = tiny_cfg(cell);
            let net = NetworkParams::from_tree(&cfg, &init_params(&cfg, &Rng::new(3)).unwrap()).unwrap();
            let seq = random_window(20, 4, &mut Rng::new(4));
            let out = recurrent_forward(&seq.map(|v| 5.0 * v), &CellState::zeros(4), &net.recurrent[0]).unwrap();
            assert!(out.hidden.data().iter().all(|&h| h > -1.0 && h < 1.0));
        }
    }

    fn model_fd_check(cfg: ModelConfig, seed: u64) {
        let tree = init_params(&cfg, &Rng::new(seed)).unwrap();
        let model = Model::new(cfg.clone(), &tree).unwrap();
        let w = random_window(cfg.window, cfg.input_channels, &mut Rng::new(seed + 1));
        let loss = |t: &ParamTree| {
            let m = Model::new(cfg.clone(), t).unwrap();
            let (logits, _) = m.forward(&w, &mut Rng::new(11), true).unwrap();
            softmax_cross_entropy(&logits, 1).unwrap().0
        };
        let fd = finite_diff_grad(loss, &tree, 1e-5);
        let (_, analytic) = model.loss_and_grad(&w, 1, &mut Rng::new(11), true).unwrap();
        let mut worst = 0.0f64;
        for (name, t) in fd.iter() {
            for (a, b) in analytic.get(name).unwrap().data().iter().zip(t.data()) {
                let rel = relative_error(*a, *b, 1e-6);
                assert!(rel <= 1e-4, "{name}: analytic {a} vs fd {b} (rel {rel})");
                worst = worst.max(rel);
            }
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn quantum_model_gradient_matches_finite_differences() {
        model_fd_check(tiny_cfg(CellKind::Quantum), 21);
    }

    #[test]
    fn deeper_model_with_dropout_matches_finite_differences() {
        let cfg = ModelConfig {
            conv_layers: 2,
            conv_width: 2,
            recurrent_layers: 2,
            dropout: 0.3,
            pooling: Pooling::Mean,
            gate_bias: true,
            ..tiny_cfg(CellKind::Quantum)
        };
        model_fd_check(cfg, 22);
    }

    #[test]
    fn classical_model_gradient_matches_finite_differences() {
        model_fd_check(tiny_cfg(CellKind::Classical), 23);
    }

    #[test]
    fn depth_one_kernel_model_gradient_matches_finite_differences() {
        let cfg = ModelConfig {
            kernel_depth: 1,
            block_size: 2,
            window: 5,
            ..tiny_cfg(CellKind::Quantum)
        };
        model_fd_check(cfg, 24);
    }

    #[test]
    fn adam_overfits_tiny_batch() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let mut tree = init_params(&cfg, &Rng::new(31)).unwrap();
        let mut data_rng = Rng::new(32);
        let windows: Vec<Tensor> = (0..6).map(|_| random_window(8, 3, &mut data_rng)).collect();
        let labels = [0, 1, 2, 0, 1, 2];
        let refs: Vec<&Tensor> = windows.iter().collect();
        let hyper = AdamHyper {
            lr: 2e-2,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut state = AdamState::new(&tree);
        let mut losses = Vec::new();
        for step in 0..50u64 {
            let model = Model::new(cfg.clone(), &tree).unwrap();
            let (loss, grads) = model.batch_loss_and_grad(&refs, &labels, &Rng::new(step), false).unwrap();
            losses.push(loss);
            adam_step(&mut tree, &grads, &mut state, &hyper).unwrap();
        }
        let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing >= 45, "only {decreasing} decreasing steps: {losses:?}");
        assert!(losses[49] < 0.25 * losses[0], "{} -> {}", losses[0], losses[49]);
    }

    #[test]
    fn batch_gradient_is_mean_of_window_gradients() {
        let cfg = tiny_cfg(CellKind::Quantum);
        let model = Model::new(cfg.clone(), &init_params(&cfg, &Rng::new(41)).unwrap()).unwrap();
        let mut data_rng = Rng::new(42);
        let windows: Vec<Tensor> = (0..3).map(|_| random_window(8, 3, &mut data_rng)).collect();
        let refs: Vec<&Tensor> = windows.iter().collect();
        let (loss, grads) = model.batch_loss_and_grad(&refs, &[0, 1, 2], &Rng::new(0), false).unwrap();
        let mut sum_loss = 0.0;
        let mut sum = grads.zeros_like();
        for (i, w) in windows.iter().enumerate() {
            let (l, g) = model.loss_and_grad(w, i, &mut Rng::new(0), false).unwrap();
            sum_loss += l;
            sum.add_assign(&g).unwrap();
        }
        sum.scale(1.0 / 3.0);
        assert!((loss - sum_loss / 3.0).abs() < 1e-12);
        assert!(grads.max_abs_diff(&sum).unwrap() < 1e-12);
    }

    #[test]
    fn argmax_first_wins_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
