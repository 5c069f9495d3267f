//! Synchronous federated averaging over QK-LSTM clients.
//!
//! Each round the server broadcasts the global parameters, every client runs
//! local Adam epochs on its shard, and the server replaces the global tree
//! with the sample-weighted mean of the returned trees. Clients can live in
//! the same process or talk to the server over TCP; both paths produce
//! bit-identical results for the same seed.

mod aggregate;
mod checkpoint;
mod runner;
mod tcp;
mod train;
mod wire;

pub use aggregate::{fedavg_aggregate, ClientUpdate, Weighting};
pub use checkpoint::{
    deserialize_checkpoint, deserialize_checkpoint_prefix, load_checkpoint, save_checkpoint, serialize_checkpoint,
    serialize_checkpoint_as, Dtype, CHECKPOINT_EXTENSION, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use runner::{
    client_shards, metrics_csv, pack_update, run_federated, unpack_update, write_metrics_csv, ClientTrainer, Coordinator,
    FedConfig, FedOutcome, RoundRecord, LOSS_TENSOR, METRICS_HEADER,
};
pub use tcp::{connect_with_retry, run_client, FedServer};
pub use train::{
    client_rng, evaluate, initial_params, local_train, predict_all, train_centralized, train_centralized_with, CentralOutcome, LocalOutcome,
};
pub use wire::{
    read_message, wire_decode, wire_decode_with_limit, wire_encode, write_message, WireMessage, DEFAULT_MAX_FRAME,
    HEADER_LEN, WIRE_MAGIC, WIRE_VERSION,
};
