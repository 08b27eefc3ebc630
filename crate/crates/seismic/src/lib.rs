//! Synthetic fault datasets: random layered velocity models with one dipping
//! fault, constant-density acoustic modeling, surface gathers and a sharded
//! on-disk format.

pub mod dataset;
pub mod error;
pub mod fd;
pub mod gather;
pub mod model;
pub mod wavelet;

pub use dataset::{
    build_dataset, dataset_labels, load_dataset, Dataset, DatasetConfig, DatasetManifest,
    ShardEntry,
};
pub use error::{Error, Result};
pub use fd::{Propagator, Wavefield, CFL_CONST};
pub use gather::{simulate_gather, GatherFeature, SimConfig};
pub use model::{
    build_model, generate_model, measure_fault, CountSpan, FaultLabel, GridGeometry, Layer,
    ModelParams, ModelRanges, Span, VelocityModel,
};
pub use wavelet::ricker;
