//! FMCW radar mutual-interference lab: beat-signal simulation, range-Doppler
//! processing, link budgets, classical mitigation, detection metrics and
//! dataset generation.

// `!(a > b)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod detection_metrics;
pub mod error;
pub mod link_budget;
pub mod mitigation;
pub mod rd_pipeline;
pub mod rng;
pub mod signal_model;

pub use detection_metrics::{CellSet, CfarParams, PeakList};
pub use error::{Error, Result};
pub use rd_pipeline::{NormStats, RdMap};
pub use signal_model::{BeatFrame, InterfererConfig, Provenance, RadarConfig, Target};
