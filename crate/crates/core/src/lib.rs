//! Benchmark engine for scene-graph generation over oriented-bounding-box imagery.
//!
//! The crate covers the annotation data model and manifest format, exact
//! rotated-box geometry, large-image tiling, detection and relation metrics,
//! the pair-proposal substrate with its losses, a frequency-prior plus linear
//! baseline scorer, a seeded synthetic data generator and dataset statistics.

pub mod datamodel;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod pairing;
pub mod scorer;
pub mod stats;
pub mod synth;
