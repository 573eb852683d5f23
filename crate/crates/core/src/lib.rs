//! Operator-function knowledge base construction.
//!
//! The crate mines operator call patterns from geospatial scripts, clusters
//! LLM-extracted functional statements into a three-level semantic framework,
//! maps frequent operator combinations onto that framework by multi-model
//! voting, and scores the result.

pub mod ast;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod framework;
pub mod gateway;
pub mod io;
pub mod mapper;
pub mod miner;
pub mod pipeline;
pub mod statements;

pub use error::{Error, Result};
