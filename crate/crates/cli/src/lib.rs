//! Experiment runner: JSON configurations, reproduction recipes and CSV output
//! over `ldrec-core`.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod recipes;
