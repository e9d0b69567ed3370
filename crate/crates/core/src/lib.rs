//! Elaborative simplification through implicit questions under discussion.
//!
//! The crate covers the data model for documents with marked elaborations and
//! their QUD annotations ([`corpus`]), corpus statistics ([`analysis`]),
//! question and elaboration generation through pluggable backends
//! ([`questiongen`], [`elabgen`], [`backends`]), automatic metrics and
//! human-evaluation tallies ([`metrics`]), and batch runs ([`pipeline`]).
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and falls back to plain iteration otherwise.

pub mod analysis;
pub mod backends;
pub mod corpus;
pub mod elabgen;
pub mod generation;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod questiongen;
pub mod report;
pub mod synth;
pub mod tokenize;
