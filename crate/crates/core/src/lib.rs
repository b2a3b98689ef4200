//! Body identification benchmark.
//!
//! Starting from 2048-d pooled backbone features, this crate trains a
//! linguistic-attribute head and a direct identity head, turns media into
//! averaged embedding templates, scores probes against a gallery by cosine
//! similarity, fuses two models by averaging their cosines, and evaluates
//! open-set identification with CMC and ROC curves. A seeded synthetic world
//! generator supplies features with known ground truth.

pub mod cli;
pub mod config;
mod container;
pub mod domain;
pub mod error;
pub mod media_io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod provenance;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod templates;
pub mod verify;

pub use error::{Error, Result};
