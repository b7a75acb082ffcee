//! Text-prompted zero-shot object localization.
//!
//! The pipeline turns frozen patch and text embeddings into object centre
//! points:
//!
//! 1. [`tssm`] fuses the prompt's sentence embedding with an embedding of the
//!    title words into a single text vector.
//! 2. [`align`] learns a linear patch projection whose cosine similarity with
//!    that vector, upsampled to pixels, reproduces a ground-truth density.
//! 3. [`locate`] runs the model over sliding windows, fuses the per-window
//!    density maps and decodes local maxima into points.
//! 4. [`metrics`] scores points against ground truth (F1/AP/AR at two
//!    distance thresholds, MAE/RMSE on counts).
//!
//! [`grid`] holds the shared numeric types, [`format`] the binary file
//! formats, and [`manifest`], [`config`], [`synth`] and [`cli`] the dataset
//! and command-line plumbing.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod assignment;
pub mod cli;
pub mod config;
mod error;
pub mod format;
pub mod grid;
pub mod locate;
pub mod manifest;
pub mod metrics;
pub mod synth;
pub mod tssm;

pub use error::{Error, Result};
