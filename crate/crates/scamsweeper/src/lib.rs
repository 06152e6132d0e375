//! File formats, configuration, caching and reporting around `scamsweeper-core`.

pub use scamsweeper_core as core;

pub mod binfmt;
pub mod checkpoint;
pub mod config;
pub mod hashing;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod walkcache;
