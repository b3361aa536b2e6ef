//! Echo-chamber detection.
//!
//! A generative model of social networks in which latent communities carry a
//! polarity, an inference procedure that recovers those communities from a
//! follow graph and a set of polarized cascades, and the tooling to evaluate
//! and use the fitted model.

pub mod error;
pub mod evaluation;
pub mod cli;
pub mod generator;
pub mod inference;
pub mod io;
pub mod model;
pub mod prediction;

pub use error::{Error, Result};
pub use model::{CascadeSet, HyperParams, Item, ModelParams, SharingLink, SocialGraph, Table};
