//! Pluralistic reasoning pipeline.
//!
//! Random lexical seeds drive a relevance-agnostic "wild" retrieval; the
//! retrieved corpus is cleaned and chunked; an epistemic graph links
//! constraints from the query to sparks mined from the chunks through
//! Mapping, Blending and Inversion bridges; and the serialized graph
//! conditions the final generation. The [`metrics`] module carries the
//! diversity, novelty and diagnosis measures used to evaluate the outputs.

pub mod clock;
pub mod expert;
pub mod exploration;
pub mod fanout;
pub mod grammar;
pub mod graph;
pub mod harness;
pub mod json;
pub mod metrics;
pub mod persistence;
pub mod protocol;
pub mod providers;
pub mod rng;
pub mod synthesis;
pub mod text;
