//! Command-line surface: configuration, metrics, commands and the grid runner.

mod args;
mod commands;
mod config;
mod metrics;

pub use args::{main_entry, run, Cli, Command, Common};
pub use commands::{
    cmd_count_params, cmd_eval, cmd_fed_client, cmd_fed_server, cmd_fed_sim, cmd_gen_synth, cmd_kernel_check, cmd_train,
    data_shape, load_source, model_for, prepare_data, run_grid, GridReport, KernelCheckReport, Prepared, GRID_HEADER,
};
pub use config::{DataSource, ExperimentConfig, RawConfig, CONFIG_KEYS};
pub use metrics::{compute_metrics, confusion_matrix, MetricsReport};
