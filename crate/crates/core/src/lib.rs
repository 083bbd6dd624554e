//! Curation and evaluation toolkit for aqueous solubility datasets.
//!
//! The pipeline reads tabular log-solubility records, derives structure keys
//! from SMILES, removes duplicates, assigns intra- and inter-set weights,
//! builds molecule-coherent cross-validation folds, and scores predictions
//! with RMSE and the weighted cuRMSE. A small fingerprint + ridge baseline
//! and a hyperparameter-selection experiment round it off.

pub mod baseline;
pub mod curate;
pub mod dataset;
pub mod dedupe;
pub mod element;
pub mod folds;
pub mod metrics;
pub mod molparse;
pub mod rng;
pub mod rounding;
pub mod standardize;
