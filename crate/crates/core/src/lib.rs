//! Misinformation domain detection from browser referrer traffic.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`ingest`] parses referrer logs into monthly [`TrafficRecord`]s.
//! * [`graph`] builds the per-month [`NavigationGraph`] and extracts egonets.
//! * [`labels`] keeps the label store and the category host registry.
//! * [`features`] turns a domain's neighbourhood into a [`FeatureVector`].
//! * [`ml`] trains and evaluates the classifiers.
//! * [`deploy`] selects candidates from misinformation egonets and flags positives.
//! * [`synth`] generates seeded synthetic traffic with planted communities.

pub mod deploy;
pub mod domain;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod labels;
pub mod matrix;
pub mod ml;
pub mod synth;

pub use domain::{Domain, Month};
pub use features::{FeatureMatrix, FeatureMode, FeatureSchema, FeatureVector};
pub use graph::{Direction, Egonet, NavigationGraph};
pub use ingest::TrafficRecord;
pub use labels::{CategoryRegistry, LabelClass, LabelStore, Verdict};
pub use matrix::Matrix;
pub use ml::{ModelConfig, TrainedModel};
