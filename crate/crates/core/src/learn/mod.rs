//! Sign-SGD with majority vote over the simulated uplink.

mod bound;
mod data;
mod federation;
mod model;
mod phy;

pub use bound::{convergence_bound, default_learning_rate, noise_penalty, BoundParams};
pub use data::{
    downsample, load_idx_dataset, parse_idx, partition_dataset, read_idx, synthetic_digits,
    DataMode, Dataset, IdxArray, LocalDataset, Sample, CLASSES, IMAGE_SIDE,
};
pub use federation::{
    apply_update, evaluate, ideal_mv, local_gradient, Federation, RoundRecord, TrainConfig,
    TrainState,
};
pub use model::{Mlp, Model, Quadratic};
pub use phy::{Fading, Phy, PhyConfig};
