//! Candlestick chart pipeline.
//!
//! OHLC series go through rule-based pattern detection, strong/weak
//! trend-strength labeling and deterministic chart rasterization. Rendered
//! charts can be decomposed into sliding three-candle sub-charts and parsed
//! back into prices. Small convolutional classifiers (a plain CNN, a
//! two-stream history + pattern CNN, and a convolutional autoencoder feeding
//! a 1-D CNN) are trained from scratch on the resulting images and scored
//! with accuracy, F1 and ROC AUC.

pub mod decomposer;
pub mod experiment;
pub mod labeling;
pub mod market_data;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pattern;
pub mod raster;
pub mod rng;
