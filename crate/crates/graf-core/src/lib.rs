//! GRAF: attention-weighted fusion of multiple node-association networks
//! with a graph-convolutional classifier.
//!
//! The pipeline composes meta-path-based association networks from a
//! heterogeneous typed graph, trains a hierarchical attention model (node
//! level, then association level) on the classification task, fuses the
//! networks into one directed weighted graph using the learned attention,
//! optionally prunes weak edges stochastically, and trains a two-layer graph
//! convolutional classifier on the fused graph. [`experiment`] wires the
//! whole protocol together: hyperparameter grid, repeated evaluation,
//! medians, and report files.
//!
//! Independent runs (training repeats, grid cells, k-means restarts) execute
//! in parallel under the `parallel` feature (on by default); disabling it
//! produces bit-identical results sequentially.

pub mod attention;
pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod gcn;
pub mod graph;
pub mod hyper;
pub mod parallel;
pub mod rng;
pub mod sparse;
pub mod stopping;
pub mod synth;
pub mod task;

pub use error::{GrafError, Result};
