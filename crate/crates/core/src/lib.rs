//! Building blocks for a biomedical vision-language pipeline.
//!
//! - [`tensorio`]: the MSTF tensor container and PNG/JPEG ingestion.
//! - [`pyramid`]: multi-resolution pyramids and base-resolution tiling.
//! - [`encoder`]: tile-wise encoding, cross-scale pooling and channel concatenation.
//! - [`connector`]: the MLP projector, its gradients, schedule and staged training.
//! - [`synth`]: instruction-data synthesis through two chat providers.
//! - [`eval`]: VQA metrics, reports and dataset statistics.
//! - [`cli`]: the `medvl` command-line front end.

pub mod cli;
pub mod connector;
pub mod encoder;
pub mod eval;
pub mod pyramid;
pub mod synth;
pub mod tensorio;
