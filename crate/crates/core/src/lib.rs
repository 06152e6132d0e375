#![cfg_attr(not(test), no_std)]
//! Malicious-account detection over temporal transaction graphs.
//!
//! The pipeline samples a time-ordered sequence of subgraphs around an
//! account ([`walk`]), turns each subgraph into fixed-shape features
//! ([`features`]), encodes it with graph attention ([`encoder`]) and classifies
//! the resulting sequence with a transposed transformer ([`seqmodel`]).
//!
//! This crate only needs `alloc`; file formats and the command line live in
//! the `scamsweeper` crate.

extern crate alloc;

pub mod nn;
pub mod graph;
pub mod seeding;
pub mod walk;
pub mod features;
pub mod encoder;
pub mod seqmodel;
pub mod model;
pub mod metrics;
pub mod train;
pub mod probe;
pub mod synth;
