//! Windowed sensor datasets: segmentation, normalization, splits, client
//! partitions, a synthetic generator and the RealWorld HAR loader.

mod cache;
mod dataset;
mod partition;
mod rwhar;
mod synthetic;

pub use cache::{deserialize_dataset, load_dataset, save_dataset, serialize_dataset, DATASET_MAGIC};
pub use dataset::{normalize, train_test_split, window_series, NormStats, SplitStrategy, WindowedDataset, NORM_EPS};
pub use partition::{partition, PartitionPlan, PartitionStrategy};
pub use rwhar::{load_rwhar, RwharOptions, RWHAR_ACTIVITIES};
pub use synthetic::{gen_synthetic, SyntheticSpec, SYNTHETIC_SAMPLE_RATE, SYNTHETIC_SUBJECTS};
