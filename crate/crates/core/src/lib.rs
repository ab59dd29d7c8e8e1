//! Differentiable neural-architecture search over message-passing graph
//! networks that model link information explicitly.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `f64` tensors, a define-by-run reverse-mode tape and Adam.
//! - [`graph`]: graph ingestion, link splits, enclosing subgraphs and distance encoding.
//! - [`supernet`]: the searchable message-passing network and its slot catalogs.
//! - [`search`]: concrete-distribution sampling, joint search, derivation and retraining.
//! - [`tasks`]: link prediction (homogeneous and multi-relational), node and graph
//!   classification pipelines plus metrics.
//! - [`config`] and [`run`]: run configuration and artifact emission used by the CLI.
//! - [`diagnostics`]: the finite-difference gradient suite.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod rng;
pub mod run;
pub mod search;
pub mod supernet;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
