//! Flat `section.key = value` experiment configuration.
//!
//! Every key has a default; unknown or repeated keys are errors. Lines
//! starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{PartitionStrategy, RwharOptions, SplitStrategy, SyntheticSpec};
use crate::error::{Error, Result};
use crate::federated::{FedConfig, Weighting};
use crate::model::{CellKind, ModelConfig, Pooling};
use crate::numerics::AdamHyper;

/// `(key, default, description)` for every accepted key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "global seed for data, init, partition and training"),
    ("output.dir", "out", "directory for metrics.csv, final.fqkc and config.resolved"),
    ("output.timing", "false", "fill the seconds column with wall-clock time"),
    ("data.source", "synthetic", "synthetic | rwhar | cache"),
    ("data.path", "", "RWHAR root directory or dataset cache file"),
    ("data.test_fraction", "0.2", "held-out share of windows or subjects"),
    ("data.split", "window", "window | subject"),
    ("data.normalize", "true", "standardize channels with training-split statistics"),
    ("data.synthetic.classes", "4", "number of classes"),
    ("data.synthetic.windows_per_class", "200", "windows per class"),
    ("data.synthetic.window", "64", "samples per window"),
    ("data.synthetic.channels", "3", "channels per sample"),
    ("data.synthetic.noise_sd", "0.3", "additive Gaussian noise"),
    ("data.rwhar.sensor", "acc", "file name prefix of the sensor"),
    ("data.rwhar.position", "chest", "body position suffix"),
    ("data.rwhar.timestamp_column", "attr_time", "timestamp column name"),
    ("data.rwhar.time_scale", "0.001", "seconds per timestamp unit"),
    ("data.rwhar.sample_rate", "50", "nominal rate in Hz"),
    ("data.rwhar.window", "100", "samples per window"),
    ("data.rwhar.stride", "50", "samples between window starts"),
    ("model.cell", "quantum", "quantum | classical"),
    ("model.conv_layers", "1", "conv layers before the recurrent stack"),
    ("model.conv_filters", "64", "filters per conv layer"),
    ("model.conv_width", "11", "conv kernel width"),
    ("model.recurrent_layers", "2", "stacked recurrent layers"),
    ("model.hidden", "64", "hidden units per recurrent layer"),
    ("model.landmarks", "16", "kernel landmarks per QK-LSTM layer"),
    ("model.gate_bias", "false", "per-gate bias in QK-LSTM layers"),
    ("model.dropout", "0.5", "dropout before each recurrent layer"),
    ("model.pooling", "last", "last | mean"),
    ("kernel.block_size", "4", "qubits per simulated block"),
    ("kernel.depth", "0", "entangling re-upload layers"),
    ("optim.lr", "0.0001", "Adam learning rate"),
    ("optim.beta1", "0.9", "Adam first-moment decay"),
    ("optim.beta2", "0.999", "Adam second-moment decay"),
    ("optim.eps", "1e-8", "Adam denominator offset"),
    ("optim.weight_decay", "0.0001", "L2 penalty added to the gradient"),
    ("fed.clients", "3", "number of clients K"),
    ("fed.local_epochs", "4", "local epochs E per round"),
    ("fed.rounds", "30", "global rounds R"),
    ("fed.batch_size", "32", "mini-batch size"),
    ("fed.partition", "iid", "iid | by-subject"),
    ("fed.weighting", "samples", "samples | uniform"),
    ("fed.persist_optimizer", "false", "keep client Adam state across rounds"),
    ("fed.eval_every", "1", "evaluate every this many rounds"),
    ("train.epochs", "30", "epochs for centralized training"),
    ("eval.checkpoint", "", "checkpoint for eval; defaults to <output.dir>/final.fqkc"),
    ("grid.clients", "2,4,8", "client counts swept by grid"),
    ("grid.epochs", "1,2", "local epoch counts swept by grid"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Rwhar { root: PathBuf, options: RwharOptions },
    Cache(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSource,
    pub test_fraction: f64,
    pub split: SplitStrategy,
    pub normalize: bool,
    /// Shape fields (`window`, `input_channels`, `classes`) are filled from the data.
    pub model: ModelConfig,
    pub fed: FedConfig,
    pub train_epochs: usize,
    pub eval_checkpoint: Option<PathBuf>,
    pub grid_clients: Vec<usize>,
    pub grid_epochs: Vec<usize>,
    values: BTreeMap<String, String>,
}

/// Raw key/value pairs with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: CONFIG_KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    fn parse_key<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}`: `{s}` is not a count")))
            })
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.get(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Every key in table order as `key = value` lines.
    pub fn resolved(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|(k, _, _)| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let seed: u64 = self.parse_key("seed")?;
        let require_path = |source: &str| {
            self.path("data.path")
                .ok_or_else(|| Error::Config(format!("`data.path` is required when data.source = {source}")))
        };
        let data = match self.get("data.source") {
            "synthetic" => DataSource::Synthetic(SyntheticSpec {
                classes: self.parse_key("data.synthetic.classes")?,
                windows_per_class: self.parse_key("data.synthetic.windows_per_class")?,
                window: self.parse_key("data.synthetic.window")?,
                channels: self.parse_key("data.synthetic.channels")?,
                noise_sd: self.parse_key("data.synthetic.noise_sd")?,
                seed,
            }),
            "rwhar" => DataSource::Rwhar {
                root: require_path("rwhar")?,
                options: RwharOptions {
                    sensor: self.get("data.rwhar.sensor").to_string(),
                    position: self.get("data.rwhar.position").to_string(),
                    timestamp_column: self.get("data.rwhar.timestamp_column").to_string(),
                    time_scale: self.parse_key("data.rwhar.time_scale")?,
                    sample_rate: self.parse_key("data.rwhar.sample_rate")?,
                    window: self.parse_key("data.rwhar.window")?,
                    stride: self.parse_key("data.rwhar.stride")?,
                    ..RwharOptions::default()
                },
            },
            "cache" => DataSource::Cache(require_path("cache")?),
            other => return Err(Error::Config(format!("`data.source`: unknown source `{other}`"))),
        };
        let split = match self.get("data.split") {
            "window" => SplitStrategy::Window,
            "subject" => SplitStrategy::Subject,
            other => return Err(Error::Config(format!("`data.split`: unknown split `{other}`"))),
        };
        let cell = match self.get("model.cell") {
            "quantum" => CellKind::Quantum,
            "classical" => CellKind::Classical,
            other => return Err(Error::Config(format!("`model.cell`: unknown cell `{other}`"))),
        };
        let pooling = match self.get("model.pooling") {
            "last" => Pooling::Last,
            "mean" => Pooling::Mean,
            other => return Err(Error::Config(format!("`model.pooling`: unknown pooling `{other}`"))),
        };
        let model = ModelConfig {
            conv_layers: self.parse_key("model.conv_layers")?,
            conv_filters: self.parse_key("model.conv_filters")?,
            conv_width: self.parse_key("model.conv_width")?,
            recurrent_layers: self.parse_key("model.recurrent_layers")?,
            hidden: self.parse_key("model.hidden")?,
            landmarks: self.parse_key("model.landmarks")?,
            block_size: self.parse_key("kernel.block_size")?,
            kernel_depth: self.parse_key("kernel.depth")?,
            dropout: self.parse_key("model.dropout")?,
            gate_bias: self.parse_key("model.gate_bias")?,
            cell,
            pooling,
            ..ModelConfig::default()
        };
        let fed = FedConfig {
            clients: self.parse_key("fed.clients")?,
            local_epochs: self.parse_key("fed.local_epochs")?,
            rounds: self.parse_key("fed.rounds")?,
            batch_size: self.parse_key("fed.batch_size")?,
            adam: AdamHyper {
                lr: self.parse_key("optim.lr")?,
                beta1: self.parse_key("optim.beta1")?,
                beta2: self.parse_key("optim.beta2")?,
                eps: self.parse_key("optim.eps")?,
                weight_decay: self.parse_key("optim.weight_decay")?,
            },
            partition: self.parse_key::<String>("fed.partition")?.parse::<PartitionStrategy>()?,
            weighting: self.parse_key::<String>("fed.weighting")?.parse::<Weighting>()?,
            persist_optimizer: self.parse_key("fed.persist_optimizer")?,
            eval_every: self.parse_key("fed.eval_every")?,
            record_time: self.parse_key("output.timing")?,
            seed,
        };
        fed.validate()?;
        let cfg = ExperimentConfig {
            seed,
            out_dir: PathBuf::from(self.get("output.dir")),
            data,
            test_fraction: self.parse_key("data.test_fraction")?,
            split,
            normalize: self.parse_key("data.normalize")?,
            model,
            fed,
            train_epochs: self.parse_key("train.epochs")?,
            eval_checkpoint: self.path("eval.checkpoint"),
            grid_clients: self.list("grid.clients")?,
            grid_epochs: self.list("grid.epochs")?,
            values: self.values.clone(),
        };
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        RawConfig::parse(text)?.build()
    }

    /// Text of `config.resolved`.
    pub fn resolved(&self) -> String {
        RawConfig {
            values: self.values.clone(),
        }
        .resolved()
    }

    /// Returns a copy with `key` replaced, re-validated.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut raw = RawConfig {
            values: self.values.clone(),
        };
        raw.set(key, value)?;
        raw.build()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.eval_checkpoint.clone().unwrap_or_else(|| self.out_dir.join("final.fqkc"))
    }
}
