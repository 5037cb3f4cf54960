//! Homonym detection for curated author profiles in bibliographic databases.
//!
//! A profile that collects the publications of several real persons is a
//! *homonym*. The crate builds a per-profile feature vector from the
//! coauthor neighbourhood, title semantics, venues and publication years,
//! and trains a small feed-forward classifier on curator-derived labels.

pub mod corpus;
pub mod embed;
pub mod features;
pub mod golddata;
pub mod graph;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod ranking;
pub mod synth;
pub mod experiment;
