//! Candle-direction forecasting and threshold trading.
//!
//! The pipeline runs indicator generation, wavelet denoising, GBDT feature
//! selection, channel grouping, windowing and per-group convolutional
//! autoencoders, then trains a Conv -> LSTM -> dense classifier whose
//! sigmoid output drives a confidence-thresholded long/short strategy.

// `!(x > 0.0)` is the NaN-rejecting form of a positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod classifier;
pub mod dataset;
pub mod denoise;
pub mod error;
pub mod feature_select;
pub mod indicators;
pub mod market_data;
pub mod nn;
pub mod strategy;
pub mod trainer;

pub use error::{Error, Result};
