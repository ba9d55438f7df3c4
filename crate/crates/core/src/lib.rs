//! Radio-map modeling toolkit.
//!
//! The crate combines a deterministic ray-launching path-loss oracle on
//! rasterized urban scenes, dataset generation with geometric augmentation, a
//! small from-scratch convolutional surrogate model, measurement-driven
//! calibration, and link-level throughput metrics derived from predicted maps.
//!
//! Everything is seeded: identical inputs and seeds reproduce bit-identical
//! artifacts regardless of thread count.

pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod learn;
pub mod propagate;
pub mod raster;
pub mod rng;
pub mod stats;

pub use dataset::{
    generate_dataset, split_kfold, DatasetConfig, DatasetManifest, SceneSource, Split,
};
pub use calibrate::CalibrationConfig;
pub use learn::{NetworkSpec, TrainConfig, Weights};
pub use error::CoreError;
pub use propagate::{
    ChannelImpulseResponse, Material, PathComponent, PathKind, PropagationConfig, RadioMap,
    WallSegment,
};
pub use raster::{CityParams, ElevationGrid, GeometricTransform, NormalizedImage, TxLocation};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
