use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::commands::{
    cmd_count_params, cmd_eval, cmd_fed_client, cmd_fed_server, cmd_fed_sim, cmd_gen_synth, cmd_kernel_check, cmd_train,
    run_grid,
};
use super::config::{ExperimentConfig, RawConfig};
use crate::error::Result;
use crate::federated::FedServer;

#[derive(Debug, Parser)]
#[command(name = "fedqk", version, about = "Federated QK-LSTM activity recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        if let Some(seed) = self.seed {
            raw.set("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            raw.set("output.dir", &out.to_string_lossy())?;
        }
        raw.build()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Centralized training on the full training split.
    Train(Common),
    /// Federated training with in-process clients.
    FedSim(Common),
    /// Federated aggregation server for TCP clients.
    FedServer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "HOST:PORT")]
        listen: String,
    },
    /// One federated client connecting to a server.
    FedClient {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "HOST:PORT")]
        connect: String,
        #[arg(long)]
        client_id: u32,
    },
    /// Scores a checkpoint on the test split.
    Eval(Common),
    /// Prints the trainable parameter table.
    CountParams(Common),
    /// Kernel simulator self-test.
    KernelCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Writes the configured synthetic dataset to a cache file.
    GenSynth(Common),
    /// Sweeps `grid.clients` x `grid.epochs` and writes grid.csv.
    Grid(Common),
}

fn report_done(cfg: &ExperimentConfig) {
    println!("artifacts written to {}", cfg.out_dir.display());
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let records = cmd_train(&cfg)?;
            if let Some(m) = records.last().and_then(|r| r.metrics.as_ref()) {
                print!("{m}");
            }
            report_done(&cfg);
        }
        Command::FedSim(common) => {
            let cfg = common.load()?;
            let out = cmd_fed_sim(&cfg)?;
            if let Some(m) = out.records.last().and_then(|r| r.metrics.as_ref()) {
                print!("{m}");
            }
            report_done(&cfg);
        }
        Command::FedServer { common, listen } => {
            let cfg = common.load()?;
            let server = FedServer::bind(listen.as_str())?;
            println!("listening on {}", server.local_addr()?);
            let out = cmd_fed_server(&cfg, &server)?;
            if let Some(m) = out.records.last().and_then(|r| r.metrics.as_ref()) {
                print!("{m}");
            }
            report_done(&cfg);
        }
        Command::FedClient {
            common,
            connect,
            client_id,
        } => {
            let cfg = common.load()?;
            let rounds = cmd_fed_client(&cfg, &connect, client_id)?;
            println!("client {client_id} finished {rounds} rounds");
        }
        Command::Eval(common) => {
            let cfg = common.load()?;
            print!("{}", cmd_eval(&cfg)?);
        }
        Command::CountParams(common) => {
            let cfg = common.load()?;
            print!("{}", cmd_count_params(&cfg)?);
        }
        Command::KernelCheck { seed } => {
            let report = cmd_kernel_check(seed)?;
            println!(
                "closed-form vs simulator over {} pairs: max deviation {:.3e}",
                report.pairs, report.max_closed_form_deviation
            );
            for (depth, e) in &report.min_eigenvalues {
                println!("64x64 Gram at depth {depth}: min eigenvalue {e:.3e}");
            }
            println!("symmetric {} unit diagonal {}", report.symmetric, report.unit_diagonal);
            if !report.passed() {
                eprintln!("kernel check FAILED");
                return Ok(ExitCode::FAILURE);
            }
            println!("kernel check passed");
        }
        Command::GenSynth(common) => {
            let cfg = common.load()?;
            println!("wrote {}", cmd_gen_synth(&cfg)?.display());
        }
        Command::Grid(common) => {
            let cfg = common.load()?;
            let report = run_grid(&cfg, &cfg.grid_clients, &cfg.grid_epochs)?;
            println!("wrote {}", cfg.out_dir.join("grid.csv").display());
            if !report.failures.is_empty() {
                for (k, e, err) in &report.failures {
                    eprintln!("cell clients={k} epochs={e} failed: {err}");
                }
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses process arguments, runs the command and maps errors to exit code 1.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
