use std::fmt;
use std::str::FromStr;

use super::WindowedDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStrategy {
    Iid,
    BySubject,
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionStrategy::Iid => "iid",
            PartitionStrategy::BySubject => "by-subject",
        })
    }
}

impl FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(PartitionStrategy::Iid),
            "by-subject" | "subject" => Ok(PartitionStrategy::BySubject),
            other => Err(Error::Config(format!("unknown partition strategy `{other}`"))),
        }
    }
}

/// Window indices held by each client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub shards: Vec<Vec<usize>>,
    pub strategy: PartitionStrategy,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }
}

/// Deals window indices over `clients` shards. `Iid` shuffles all indices and
/// deals them round-robin; `BySubject` shuffles subject ids and deals whole
/// subjects round-robin. Every shard keeps its indices in ascending order.
pub fn partition(dataset: &WindowedDataset, clients: usize, strategy: PartitionStrategy, seed: u64) -> Result<PartitionPlan> {
    if clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    if clients > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "{clients} clients but only {} windows",
            dataset.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let mut shards = vec![Vec::new(); clients];
    match strategy {
        PartitionStrategy::Iid => {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            rng.shuffle(&mut order);
            for (k, i) in order.into_iter().enumerate() {
                shards[k % clients].push(i);
            }
        }
        PartitionStrategy::BySubject => {
            let mut ids = dataset.subject_ids();
            if clients > ids.len() {
                return Err(Error::InvalidArgument(format!(
                    "{clients} clients but only {} subjects",
                    ids.len()
                )));
            }
            rng.shuffle(&mut ids);
            for (i, s) in dataset.subjects().iter().enumerate() {
                let slot = ids.iter().position(|id| id == s).expect("subject listed");
                shards[slot % clients].push(i);
            }
        }
    }
    shards.iter_mut().for_each(|s| s.sort_unstable());
    Ok(PartitionPlan { shards, strategy, seed })
}
