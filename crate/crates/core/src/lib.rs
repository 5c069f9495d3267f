pub mod cli;
pub mod data;
pub mod error;
pub mod federated;
pub mod model;
pub mod numerics;
pub mod qkernel;

pub use error::{Error, Result};
