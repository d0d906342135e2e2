//! Network reconstruction from path samples.
//!
//! A hidden contact network is sampled as vertex-disjoint paths of fully
//! identified respondents, each of whom names up to `f` friends described only
//! by a range of attribute categories. The reconstructor coalesces friend
//! occurrences that probably denote the same individual until the network
//! reaches a target size. The remaining modules measure how much structure
//! survives: merge precision, community agreement, vertex rankings, and the
//! value of reconstructed key vertices as immunization targets in SIR runs.

pub mod community;
pub mod epidemic;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod netgen;
pub mod reconstruct;
pub mod rng;
pub mod sampler;

pub use community::{detect, modularity, DetectorConfig, DetectorMethod};
pub use error::{Error, Result};
pub use graph::{AttributeMap, Graph, LoadedGraph, Partition};
pub use netgen::{CategoryDistribution, LfrParams};
pub use reconstruct::{reconstruct, CoalesceLog, Reconstruction};
pub use sampler::{Description, SampleForest, SealedTruth, SamplingMethod};
