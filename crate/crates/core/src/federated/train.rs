use rayon::prelude::*;

use crate::cli::{compute_metrics, confusion_matrix, MetricsReport};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{init_params, Model, ModelConfig};
use crate::numerics::{adam_step, AdamHyper, AdamState, ParamTree, Rng, Tensor};

const INIT_STREAM: u64 = u64::MAX;

/// Initial global parameters for a run seeded with `seed`.
pub fn initial_params(cfg: &ModelConfig, seed: u64) -> Result<ParamTree> {
    init_params(cfg, &Rng::new(seed).child(INIT_STREAM))
}

/// Stream for client `client` in round `round`; independent of scheduling.
pub fn client_rng(seed: u64, client: u32, round: u32) -> Rng {
    Rng::new(seed).child(client as u64).child(round as u64)
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ParamTree,
    pub samples: usize,
    pub steps: usize,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub optimizer: AdamState,
}

impl LocalOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().expect("at least one epoch")
    }
}

/// `epochs` passes of shuffled mini-batch Adam over `shard`, starting from
/// `global`. Epoch `e` shuffles with `rng.child(e).child(0)` and batch `b`
/// draws dropout from `rng.child(e).child(b + 1)`. A fresh optimizer state
/// is used unless one is passed in.
#[allow(clippy::too_many_arguments)]
pub fn local_train(
    global: &ParamTree,
    cfg: &ModelConfig,
    shard: &WindowedDataset,
    epochs: usize,
    batch_size: usize,
    hyper: &AdamHyper,
    rng: &Rng,
    optimizer: Option<AdamState>,
) -> Result<LocalOutcome> {
    if shard.is_empty() {
        return Err(Error::Empty("client shard has no windows".into()));
    }
    if epochs == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch size must be >= 1".into()));
    }
    let mut params = global.clone();
    let mut state = match optimizer {
        Some(s) => s,
        None => AdamState::new(&params),
    };
    let mut steps = 0;
    let mut epoch_losses = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let erng = rng.child(e as u64);
        let mut order: Vec<usize> = (0..shard.len()).collect();
        erng.child(0).shuffle(&mut order);
        let mut loss_sum = 0.0;
        let batches: Vec<&[usize]> = order.chunks(batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            let windows: Vec<&Tensor> = idx.iter().map(|&i| &shard.windows()[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| shard.labels()[i]).collect();
            let model = Model::new(cfg.clone(), &params)?;
            let (loss, grads) = model.batch_loss_and_grad(&windows, &labels, &erng.child(b as u64 + 1), true)?;
            adam_step(&mut params, &grads, &mut state, hyper)?;
            loss_sum += loss;
            steps += 1;
        }
        epoch_losses.push(loss_sum / batches.len() as f64);
    }
    Ok(LocalOutcome {
        params,
        samples: shard.len(),
        steps,
        epoch_losses,
        optimizer: state,
    })
}

#[derive(Debug, Clone)]
pub struct CentralOutcome {
    pub params: ParamTree,
    pub epoch_losses: Vec<f64>,
}

/// Single-site training with one optimizer state for the whole run. Epoch
/// `r` draws from the same stream as client 0 in round `r`.
pub fn train_centralized(
    cfg: &ModelConfig,
    train: &WindowedDataset,
    epochs: usize,
    batch_size: usize,
    hyper: &AdamHyper,
    seed: u64,
) -> Result<CentralOutcome> {
    train_centralized_with(cfg, train, epochs, batch_size, hyper, seed, |_, _, _| Ok(()))
}

/// [`train_centralized`] calling `on_epoch(epoch, params, loss)` after each epoch.
pub fn train_centralized_with(
    cfg: &ModelConfig,
    train: &WindowedDataset,
    epochs: usize,
    batch_size: usize,
    hyper: &AdamHyper,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &ParamTree, f64) -> Result<()>,
) -> Result<CentralOutcome> {
    let mut params = initial_params(cfg, seed)?;
    let mut state = None;
    let mut epoch_losses = Vec::with_capacity(epochs);
    for r in 0..epochs {
        let out = local_train(&params, cfg, train, 1, batch_size, hyper, &client_rng(seed, 0, r as u32), state)?;
        let loss = out.final_loss();
        epoch_losses.push(loss);
        params = out.params;
        state = Some(out.optimizer);
        on_epoch(r, &params, loss)?;
    }
    Ok(CentralOutcome { params, epoch_losses })
}

/// Eval-mode predictions for every window.
pub fn predict_all(cfg: &ModelConfig, params: &ParamTree, data: &WindowedDataset) -> Result<Vec<usize>> {
    let model = Model::new(cfg.clone(), params)?;
    data.windows().par_iter().map(|w| model.predict(w)).collect()
}

pub fn evaluate(cfg: &ModelConfig, params: &ParamTree, data: &WindowedDataset) -> Result<MetricsReport> {
    let predicted = predict_all(cfg, params, data)?;
    compute_metrics(&confusion_matrix(data.labels(), &predicted, cfg.classes)?)
}
