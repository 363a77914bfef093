//! Household hot-water demand forecasting.
//!
//! Tank temperature series are cleaned ([`timeseries`]), an LSTM forecaster
//! is pretrained on one household and fine-tuned on the others
//! ([`neuralnet`], [`transfer`]), shower events are found in the forecasts
//! with an isolation forest ([`eventdetect`]) and binned into weekly demand
//! calendars ([`calendar`]). [`pipeline`] wires the stages together for the
//! command-line tool.

pub mod calendar;
pub mod config;
pub mod error;
pub mod eventdetect;
pub mod metrics;
pub mod neuralnet;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod transfer;
pub mod timeseries;

pub use error::{Error, Result};
