use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use nalgebra::{DMatrix, SymmetricEigen};

use super::config::{DataSource, ExperimentConfig};
use super::metrics::MetricsReport;
use crate::data::{
    gen_synthetic, load_dataset, load_rwhar, normalize, save_dataset, train_test_split, NormStats, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::federated::{
    client_shards, connect_with_retry, evaluate, load_checkpoint, run_client, run_federated, save_checkpoint,
    train_centralized_with, write_metrics_csv, ClientTrainer, FedOutcome, FedServer, RoundRecord,
};
use crate::model::{count_params, CellKind, ModelConfig};
use crate::numerics::{mix_seed, Rng, Tensor};
use crate::qkernel::{closed_form_kernel, fidelity_statevector, gram_matrix, KernelConfig};

const SPLIT_STREAM: u64 = 0x5350_4c54;

/// Normalized train and test splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<WindowedDataset> {
    match &cfg.data {
        DataSource::Synthetic(spec) => gen_synthetic(spec),
        DataSource::Rwhar { root, options } => load_rwhar(root, options),
        DataSource::Cache(path) => load_dataset(path),
    }
}

/// Loads, splits and (optionally) standardizes with training statistics.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let all = load_source(cfg)?;
    let (train, test) = train_test_split(&all, cfg.test_fraction, cfg.split, mix_seed(cfg.seed, SPLIT_STREAM))?;
    if !cfg.normalize {
        return Ok(Prepared { train, test });
    }
    let stats = NormStats::fit(&train);
    Ok(Prepared {
        train: normalize(&train, &stats)?,
        test: normalize(&test, &stats)?,
    })
}

/// The configured model with its input shape taken from `data`.
pub fn model_for(cfg: &ExperimentConfig, data: &WindowedDataset) -> Result<ModelConfig> {
    let model = ModelConfig {
        window: data.window_len(),
        input_channels: data.channels(),
        classes: data.classes(),
        ..cfg.model.clone()
    };
    model.validate()?;
    Ok(model)
}

/// `(window, channels, classes)` of the configured source without reading samples when possible.
pub fn data_shape(cfg: &ExperimentConfig) -> Result<(usize, usize, usize)> {
    match &cfg.data {
        DataSource::Synthetic(s) => Ok((s.window, s.channels, s.classes)),
        DataSource::Rwhar { options, .. } => {
            let classes = options.label_map.values().max().map_or(0, |m| m + 1);
            Ok((options.window, 3, classes))
        }
        DataSource::Cache(path) => {
            let ds = load_dataset(path)?;
            Ok((ds.window_len(), ds.channels(), ds.classes()))
        }
    }
}

fn write_artifacts(cfg: &ExperimentConfig, records: &[RoundRecord], params: &crate::numerics::ParamTree) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.resolved())?;
    write_metrics_csv(&cfg.out_dir.join("metrics.csv"), records)?;
    save_checkpoint(&cfg.out_dir.join("final.fqkc"), params)
}

/// Centralized training; one metrics row per epoch.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>> {
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let mut records = Vec::with_capacity(cfg.train_epochs);
    let outcome = train_centralized_with(
        &model,
        &data.train,
        cfg.train_epochs,
        cfg.fed.batch_size,
        &cfg.fed.adam,
        cfg.seed,
        |epoch, params, loss| {
            records.push(RoundRecord {
                round: epoch as u32 + 1,
                metrics: Some(evaluate(&model, params, &data.test)?),
                train_loss: loss,
                seconds: None,
            });
            Ok(())
        },
    )?;
    write_artifacts(cfg, &records, &outcome.params)?;
    Ok(records)
}

/// Federated run with all clients in this process.
pub fn cmd_fed_sim(cfg: &ExperimentConfig) -> Result<FedOutcome> {
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let outcome = run_federated(&cfg.fed, &model, &data.train, &data.test)?;
    write_artifacts(cfg, &outcome.records, &outcome.params)?;
    Ok(outcome)
}

/// Serves `fed.clients` TCP clients on an already bound listener.
pub fn cmd_fed_server(cfg: &ExperimentConfig, server: &FedServer) -> Result<FedOutcome> {
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let outcome = server.run(&cfg.fed, &model, &data.test)?;
    write_artifacts(cfg, &outcome.records, &outcome.params)?;
    Ok(outcome)
}

/// Trains shard `client` for a remote server until it says DONE.
pub fn cmd_fed_client(cfg: &ExperimentConfig, connect: &str, client: u32) -> Result<u32> {
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let mut shards = client_shards(&cfg.fed, &data.train)?;
    if client as usize >= shards.len() {
        return Err(Error::Config(format!(
            "client id {client} outside 0..{}",
            shards.len()
        )));
    }
    let shard = shards.swap_remove(client as usize);
    let stream = connect_with_retry(connect, Duration::from_secs(30))?;
    run_client(stream, ClientTrainer::new(client, shard, model, cfg.fed.clone()))
}

/// Scores a saved checkpoint on the test split.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let params = load_checkpoint(&cfg.checkpoint_path())?;
    evaluate(&model, &params, &data.test)
}

/// Parameter table for the configured model and the total of the other cell type.
pub fn cmd_count_params(cfg: &ExperimentConfig) -> Result<String> {
    let (window, input_channels, classes) = data_shape(cfg)?;
    let model = ModelConfig {
        window,
        input_channels,
        classes,
        ..cfg.model.clone()
    };
    model.validate()?;
    let other = ModelConfig {
        cell: match model.cell {
            CellKind::Quantum => CellKind::Classical,
            CellKind::Classical => CellKind::Quantum,
        },
        ..model.clone()
    };
    let (mine, theirs) = (count_params(&model), count_params(&other));
    let name = |c: CellKind| match c {
        CellKind::Quantum => "QK-LSTM",
        CellKind::Classical => "LSTM",
    };
    let mut out = String::new();
    writeln!(out, "{} model", name(model.cell)).unwrap();
    writeln!(out, "{mine}").unwrap();
    writeln!(
        out,
        "{:<12} {:>12}",
        "recurrent",
        crate::model::group_thousands(mine.recurrent_total())
    )
    .unwrap();
    writeln!(
        out,
        "{} total at the same sizes: {}",
        name(other.cell),
        crate::model::group_thousands(theirs.total)
    )
    .unwrap();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheckReport {
    pub pairs: usize,
    pub max_closed_form_deviation: f64,
    /// Smallest Gram eigenvalue at each depth checked.
    pub min_eigenvalues: Vec<(usize, f64)>,
    pub symmetric: bool,
    pub unit_diagonal: bool,
}

impl KernelCheckReport {
    pub fn passed(&self) -> bool {
        self.max_closed_form_deviation <= 1e-10
            && self.min_eigenvalues.iter().all(|&(_, e)| e >= -1e-8)
            && self.symmetric
            && self.unit_diagonal
    }
}

/// Compares the simulator with the depth-0 closed form on random pairs and
/// checks that 64 x 64 Gram matrices at depths 0 and 1 are PSD.
pub fn cmd_kernel_check(seed: u64) -> Result<KernelCheckReport> {
    let mut rng = Rng::new(seed);
    let pairs = 1000;
    let mut max_dev: f64 = 0.0;
    for _ in 0..pairs {
        let dim = 1 + rng.below(16);
        let a: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.25, 2.0)).collect();
        let cfg = KernelConfig::new(dim, 4, 0)?;
        let sim = fidelity_statevector(&a, &b, &w, &cfg)?;
        max_dev = max_dev.max((sim - closed_form_kernel(&a, &b, &w)).abs());
    }
    let mut min_eigenvalues = Vec::new();
    let (mut symmetric, mut unit_diagonal) = (true, true);
    for depth in [0, 1] {
        let dim = 8;
        let x = Tensor::matrix(64, dim, (0..64 * dim).map(|_| rng.normal()).collect())?;
        let w: Vec<f64> = (0..dim).map(|_| rng.uniform_range(0.25, 1.5)).collect();
        let gram = gram_matrix(&x, &w, &KernelConfig::new(dim, 4, depth)?)?;
        let m = DMatrix::from_row_slice(64, 64, gram.data());
        for i in 0..64 {
            unit_diagonal &= m[(i, i)] == 1.0;
            for j in 0..i {
                symmetric &= m[(i, j)] == m[(j, i)];
            }
        }
        let eig = SymmetricEigen::new(m).eigenvalues;
        min_eigenvalues.push((depth, eig.min()));
    }
    Ok(KernelCheckReport {
        pairs,
        max_closed_form_deviation: max_dev,
        min_eigenvalues,
        symmetric,
        unit_diagonal,
    })
}

/// Writes the configured synthetic dataset as a cache file.
pub fn cmd_gen_synth(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let ds = load_source(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("dataset.fqkd");
    save_dataset(&path, &ds)?;
    Ok(path)
}

pub const GRID_HEADER: [&str; 7] = ["clients", "epochs", "round", "accuracy", "precision", "recall", "f1"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub csv: Vec<u8>,
    /// `(clients, epochs, error)` for cells that failed.
    pub failures: Vec<(usize, usize, String)>,
}

/// One federated run per `(clients, epochs)` cell in row-major order, all
/// from the base seed. Writes `grid.csv` into the output directory.
pub fn run_grid(cfg: &ExperimentConfig, clients: &[usize], epochs: &[usize]) -> Result<GridReport> {
    if clients.is_empty() || epochs.is_empty() {
        return Err(Error::Config("grid needs at least one client count and one epoch count".into()));
    }
    let data = prepare_data(cfg)?;
    let model = model_for(cfg, &data.train)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GRID_HEADER)?;
    let mut failures = Vec::new();
    for &k in clients {
        for &e in epochs {
            let fed = crate::federated::FedConfig {
                clients: k,
                local_epochs: e,
                ..cfg.fed.clone()
            };
            match run_federated(&fed, &model, &data.train, &data.test) {
                Ok(out) => {
                    for r in &out.records {
                        let m = r.metrics.as_ref();
                        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                        w.write_record([
                            k.to_string(),
                            e.to_string(),
                            r.round.to_string(),
                            f(m.map(|m| m.accuracy)),
                            f(m.map(|m| m.precision)),
                            f(m.map(|m| m.recall)),
                            f(m.map(|m| m.f1)),
                        ])?;
                    }
                }
                Err(err) => {
                    w.write_record([k.to_string(), e.to_string(), String::new(), String::new(), String::new(), String::new(), String::new()])?;
                    failures.push((k, e, err.to_string()));
                }
            }
        }
    }
    let csv = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("grid.csv"), &csv)?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.resolved())?;
    Ok(GridReport { csv, failures })
}
