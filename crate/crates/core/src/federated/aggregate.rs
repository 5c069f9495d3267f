use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::ParamTree;

/// Parameters returned by one client after a round of local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub round: u32,
    pub client: u32,
    /// Local sample count `n_k`.
    pub samples: u64,
    pub params: ParamTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weight client `k` by `n_k / sum(n)`.
    #[default]
    Samples,
    /// Plain mean over clients.
    Uniform,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Samples => "samples",
            Weighting::Uniform => "uniform",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samples" => Ok(Weighting::Samples),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::Config(format!("unknown weighting `{other}`"))),
        }
    }
}

/// Weighted parameter mean. Accumulates in ascending client id so the result
/// does not depend on arrival order.
pub fn fedavg_aggregate(updates: &[ClientUpdate], weighting: Weighting) -> Result<ParamTree> {
    let Some(first) = updates.first() else {
        return Err(Error::Empty("no client updates to aggregate".into()));
    };
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client);
    for pair in ordered.windows(2) {
        if pair[0].client == pair[1].client {
            return Err(Error::Protocol(format!("client {} sent two updates", pair[0].client)));
        }
    }
    for u in &ordered {
        if u.round != first.round {
            return Err(Error::Protocol(format!(
                "update from client {} is for round {}, expected {}",
                u.client, u.round, first.round
            )));
        }
        if u.samples == 0 {
            return Err(Error::InvalidArgument(format!("client {} reported zero samples", u.client)));
        }
        first.params.check_congruent(&u.params)?;
    }
    let total: u64 = ordered.iter().map(|u| u.samples).sum();
    let weight = |u: &ClientUpdate| match weighting {
        Weighting::Samples => u.samples as f64 / total as f64,
        Weighting::Uniform => 1.0 / ordered.len() as f64,
    };
    let mut acc = ordered[0].params.clone();
    acc.scale(weight(ordered[0]));
    for u in &ordered[1..] {
        acc.add_scaled(&u.params, weight(u))?;
    }
    Ok(acc)
}
