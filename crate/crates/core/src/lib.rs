//! Entity relatedness from knowledge-graph semantics and graph-regularized
//! entity disambiguation.

pub mod cli;
pub mod disambiguator;
pub mod dsrm;
pub mod error;
pub mod evaluate;
pub mod kg;
pub mod miner;
pub mod relatedness;
pub mod synth;
pub mod vectorizer;

pub use error::{Error, Result};
