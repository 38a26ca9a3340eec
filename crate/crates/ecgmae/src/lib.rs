//! Self-supervised pre-training and fine-tuning for single-lead ECG beats.
//!
//! The crate covers the full pipeline at library level:
//!
//! - [`wfdb`] — bit-exact parsing of WFDB records (headers, format 212/16
//!   signal files, MIT annotation streams) into physical-unit signals.
//! - [`preprocess`] — resampling to 360 Hz, R-peak detection, 480-sample
//!   beat segmentation with \[0,1\] normalization, AAMI labeling and the
//!   inter-patient DS1/DS2 split, plus a synthetic ECG generator for tests.
//! - [`nn`] — a minimal reverse-mode autodiff substrate (shaped tensors,
//!   conv1d / linear / layer norm / GELU / GRN / pooling / losses), generic
//!   over `f32`/`f64` so every op is finite-difference checkable.
//! - [`convnext`] — the 1-D convolutional encoder (stem + four stages of
//!   depthwise/pointwise blocks with global response normalization).
//! - [`fcmae`] — patch masking, masked (sparse-emulated) encoding, the light
//!   decoder and the masked reconstruction loss.
//! - [`train`] — SGD/Adam, cosine annealing, mixup/noise augmentation, the
//!   pre-train and fine-tune loops, and binary checkpoints.
//! - [`eval`] — confusion-matrix metrics and comparison reports.
//!
//! Batch-level inner loops are data-parallel via rayon when the default
//! `parallel` feature is enabled; disabling it yields a sequential build with
//! bit-identical results (see [`parallel`]).

pub mod convnext;
pub mod error;
pub mod eval;
pub mod fcmae;
pub mod nn;
pub(crate) mod parallel;
pub mod preprocess;
pub mod rng;
pub mod train;
pub mod wfdb;

pub use error::{Error, Result};
