//! Complication-risk prediction from coded financial (claims) records.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`records`]: ingest dated procedure codes, find the diabetic cohort and cut
//!   labelled input windows for a prediction gap.
//! - [`synthgen`]: synthetic populations with a planted, learnable risk signal.
//! - [`codevec`]: skipgram (negative sampling) pretraining of code embeddings.
//! - [`seqmodel`]: BiLSTM with multi-hop self-attentive pooling, the plain LSTM
//!   baseline, and exact reverse-mode gradients for both.
//! - [`trainer`]: stratified k-fold cross-validation with positive oversampling
//!   and Adam.
//! - [`evalkit`]: ROC-AUC, ROC/PR curves, fold averaging, reports, attention maps.
//! - [`config`] and [`pipeline`]: flat run configuration and the stage drivers
//!   behind the command-line tool.

pub mod codevec;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod files;
pub mod matrix;
pub mod pipeline;
pub mod records;
pub mod rng;
pub mod seqmodel;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
