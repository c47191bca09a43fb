//! Explainable automated clinical coding.
//!
//! A hierarchical label-attention network predicts ICD-9 codes from
//! discharge letters; predictions are mapped to SNOMED CT, explained with
//! per-token attention heatmaps and reviewed by human coders through a small
//! HTTP service.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod service;
pub mod snomed;
pub mod text;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
