//! Screening pipeline for hypomimia biomarkers.
//!
//! Consumes per-frame facial action-unit intensities and face-mesh landmark
//! series, turns them into a fixed engineered feature space, and fits a
//! stacking ensemble of histogram gradient-boosted trees under a logistic
//! meta-layer. Around that core sit cross-validated evaluation with
//! seed-bootstrap confidence intervals, subgroup bias statistics, and
//! TreeSHAP/PCA explainability.
//!
//! Interchangeable strategies (feature scalers, feature selectors) are
//! registered by name in a [`registry::Registry`] and picked at runtime from
//! a [`config::PipelineConfig`].

pub mod config;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod featurize;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod registry;
pub mod report;
pub mod rng;
pub mod select;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use matrix::Matrix;
