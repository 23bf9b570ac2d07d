//! Building-energy analytics engine: a parametric digital twin of a building,
//! hourly time-series ingestion and preprocessing, point and quantile
//! one-step-ahead forecasting models, and a CV-RMSE / NMBE / rho-risk
//! evaluation harness.
//!
//! The crate is organized along the data flow:
//!
//! * [`twin`] — entity/relationship graph of the building with series bindings
//! * [`ingest`] — CSV loading, gap interpolation, alignment, chronological splits
//! * [`features`] — calendar features, cyclical encoding, min-max scaling, windowing
//! * [`models`] — seasonal-naive and linear baselines plus LSTM- and TCN-style networks
//! * [`training`] — squared and pinball losses, Adam loop, gradient checking
//! * [`eval`] — forecast metrics, ASHRAE compliance, report tables
//! * [`synth`] — seeded museum-like benchmark data so everything runs hermetically
//! * [`experiment`] — configuration plus the end-to-end train/evaluate pipeline
//!
//! Batch-level inner loops (per-sample gradients, window prediction, Gram
//! accumulation) go through [`exec`], which runs on rayon when the `parallel`
//! feature is enabled (default) and falls back to plain iterators otherwise.
//! All parallel reductions are chunk-ordered so results are bitwise identical
//! to the sequential path regardless of thread count.

pub mod eval;
pub mod exec;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod models;
pub mod synth;
pub mod training;
pub mod twin;
