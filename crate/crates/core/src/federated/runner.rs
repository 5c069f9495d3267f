use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::aggregate::{fedavg_aggregate, ClientUpdate, Weighting};
use super::train::{client_rng, evaluate, initial_params, local_train};
use crate::cli::MetricsReport;
use crate::data::{partition, PartitionStrategy, WindowedDataset};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{mix_seed, AdamHyper, AdamState, ParamTree, Tensor};

const PARTITION_STREAM: u64 = 0x5041_5254;

/// Name under which a client's round loss rides along with its parameters.
pub const LOSS_TENSOR: &str = "_meta.train_loss";

pub const METRICS_HEADER: [&str; 7] = ["round", "accuracy", "precision", "recall", "f1", "train_loss", "seconds"];

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub clients: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub partition: PartitionStrategy,
    pub weighting: Weighting,
    /// Keep each client's Adam moments from one round to the next.
    pub persist_optimizer: bool,
    /// Evaluate every this many rounds; the last round is always evaluated.
    pub eval_every: usize,
    /// Fill the `seconds` column with wall-clock time.
    pub record_time: bool,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            clients: 3,
            local_epochs: 4,
            rounds: 30,
            batch_size: 32,
            adam: AdamHyper::default(),
            partition: PartitionStrategy::Iid,
            weighting: Weighting::Samples,
            persist_optimizer: false,
            eval_every: 1,
            record_time: false,
            seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.local_epochs == 0 || self.rounds == 0 {
            return Err(Error::InvalidArgument("clients, local epochs and rounds must be >= 1".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("batch size and eval cadence must be >= 1".into()));
        }
        if u32::try_from(self.rounds).is_err() || u32::try_from(self.clients).is_err() {
            return Err(Error::InvalidArgument("rounds and clients must fit in 32 bits".into()));
        }
        Ok(())
    }

    fn evaluates(&self, round: usize) -> bool {
        (round + 1).is_multiple_of(self.eval_every) || round + 1 == self.rounds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: u32,
    pub metrics: Option<MetricsReport>,
    /// Mean over clients of their final-epoch mini-batch loss.
    pub train_loss: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FedOutcome {
    pub records: Vec<RoundRecord>,
    pub params: ParamTree,
}

/// The shard each client trains on, indexed by client id.
pub fn client_shards(fed: &FedConfig, train: &WindowedDataset) -> Result<Vec<WindowedDataset>> {
    let plan = partition(train, fed.clients, fed.partition, mix_seed(fed.seed, PARTITION_STREAM))?;
    plan.shards.iter().map(|s| train.subset(s)).collect()
}

/// Client-side state carried across rounds.
#[derive(Debug, Clone)]
pub struct ClientTrainer {
    pub client: u32,
    pub shard: WindowedDataset,
    model: ModelConfig,
    fed: FedConfig,
    optimizer: Option<AdamState>,
}

impl ClientTrainer {
    pub fn new(client: u32, shard: WindowedDataset, model: ModelConfig, fed: FedConfig) -> Self {
        Self {
            client,
            shard,
            model,
            fed,
            optimizer: None,
        }
    }

    /// Trains from `global` and returns the update with its final-epoch loss.
    pub fn train_round(&mut self, global: &ParamTree, round: u32) -> Result<(ClientUpdate, f64)> {
        let state = if self.fed.persist_optimizer {
            self.optimizer.take()
        } else {
            None
        };
        let out = local_train(
            global,
            &self.model,
            &self.shard,
            self.fed.local_epochs,
            self.fed.batch_size,
            &self.fed.adam,
            &client_rng(self.fed.seed, self.client, round),
            state,
        )?;
        let loss = out.final_loss();
        if self.fed.persist_optimizer {
            self.optimizer = Some(out.optimizer);
        }
        let update = ClientUpdate {
            round,
            client: self.client,
            samples: out.samples as u64,
            params: out.params,
        };
        Ok((update, loss))
    }
}

/// Attaches a client's loss to its parameter tree for transport.
pub fn pack_update(params: &ParamTree, loss: f64) -> Result<ParamTree> {
    let mut tree = params.clone();
    tree.insert(LOSS_TENSOR, Tensor::from_vec(vec![loss]))?;
    Ok(tree)
}

/// Inverse of [`pack_update`].
pub fn unpack_update(mut tree: ParamTree) -> Result<(ParamTree, f64)> {
    let loss = tree
        .remove(LOSS_TENSOR)
        .and_then(|t| t.data().first().copied())
        .ok_or_else(|| Error::Protocol("update is missing the client loss".into()))?;
    Ok((tree, loss))
}

/// Server-side round bookkeeping shared by both transports.
pub struct Coordinator<'a> {
    fed: &'a FedConfig,
    model: &'a ModelConfig,
    test: &'a WindowedDataset,
    global: ParamTree,
    records: Vec<RoundRecord>,
    started: Instant,
}

impl<'a> Coordinator<'a> {
    pub fn new(fed: &'a FedConfig, model: &'a ModelConfig, test: &'a WindowedDataset) -> Result<Self> {
        fed.validate()?;
        model.validate()?;
        Ok(Self {
            fed,
            model,
            test,
            global: initial_params(model, fed.seed)?,
            records: Vec::with_capacity(fed.rounds),
            started: Instant::now(),
        })
    }

    pub fn global(&self) -> &ParamTree {
        &self.global
    }

    pub fn begin_round(&mut self) {
        self.started = Instant::now();
    }

    /// Aggregates a complete set of updates and records the round.
    pub fn finish_round(&mut self, round: u32, updates: &[ClientUpdate], losses: &[f64]) -> Result<&RoundRecord> {
        if updates.len() != self.fed.clients {
            return Err(Error::Protocol(format!(
                "round {round} has {} updates for {} clients",
                updates.len(),
                self.fed.clients
            )));
        }
        if updates.iter().any(|u| u.round != round) {
            return Err(Error::Protocol(format!("stale update in round {round}")));
        }
        self.global.check_congruent(&updates[0].params)?;
        self.global = fedavg_aggregate(updates, self.fed.weighting)?;
        let metrics = if self.fed.evaluates(round as usize) {
            Some(evaluate(self.model, &self.global, self.test)?)
        } else {
            None
        };
        self.records.push(RoundRecord {
            round: round + 1,
            metrics,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            seconds: self.fed.record_time.then(|| self.started.elapsed().as_secs_f64()),
        });
        Ok(self.records.last().unwrap())
    }

    pub fn finish(self) -> FedOutcome {
        FedOutcome {
            records: self.records,
            params: self.global,
        }
    }
}

/// Synchronous FedAvg with every client in this process. Clients of a round
/// train in parallel; results are collected in client-id order.
pub fn run_federated(
    fed: &FedConfig,
    model: &ModelConfig,
    train: &WindowedDataset,
    test: &WindowedDataset,
) -> Result<FedOutcome> {
    let mut coord = Coordinator::new(fed, model, test)?;
    let mut trainers: Vec<ClientTrainer> = client_shards(fed, train)?
        .into_iter()
        .enumerate()
        .map(|(k, shard)| ClientTrainer::new(k as u32, shard, model.clone(), fed.clone()))
        .collect();
    for round in 0..fed.rounds as u32 {
        coord.begin_round();
        let global = coord.global().clone();
        let results = trainers
            .par_iter_mut()
            .map(|t| t.train_round(&global, round))
            .collect::<Result<Vec<_>>>()?;
        let (updates, losses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        coord.finish_round(round, &updates, &losses)?;
    }
    Ok(coord.finish())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders records as CSV text under [`METRICS_HEADER`].
pub fn metrics_csv(records: &[RoundRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in records {
        let m = r.metrics.as_ref();
        w.write_record([
            r.round.to_string(),
            fmt_opt(m.map(|m| m.accuracy)),
            fmt_opt(m.map(|m| m.precision)),
            fmt_opt(m.map(|m| m.recall)),
            fmt_opt(m.map(|m| m.f1)),
            r.train_loss.to_string(),
            fmt_opt(r.seconds),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_metrics_csv(path: &Path, records: &[RoundRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(records)?)?;
    Ok(())
}
