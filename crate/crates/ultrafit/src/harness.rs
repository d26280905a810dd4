//! Experiment harness: seeded instance generators, Monte-Carlo ratio
//! studies with CSV/JSON reports, trace audits for the rounding engine's
//! structural invariants, and two handcrafted regression families.
//!
//! Everything is reproducible from a single master seed: instance `i` of a
//! study draws from generator stream `2i` and its rounding runs from stream
//! `2i + 1`, so trials are embarrassingly parallel without sharing state.

pub mod audit;
pub mod gadget;
pub mod generate;
pub mod study;

pub use audit::{
    audit_trace, classify_triangles, partition_probability_audit, AuditReport,
    BucketStat, PartitionAudit, TriangleCensus,
};
pub use gadget::{
    gadget_comparison, hub_gadget, stable_triangle_study, GadgetComparison,
    HubGadget, StableTriangleReport,
};
pub use generate::{generate, random_ultrametric, GeneratorKind, GeneratorSpec};
pub use study::{
    default_parameters, guarantee, ratio_study, Aggregates, Guarantee, MeanStat,
    RatioReport, StudyConfig, TrialRecord, GOLDEN_ALPHA,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("generator: {0}")]
    BadGenerator(String),
    #[error(transparent)]
    Instance(#[from] crate::instance::InstanceError),
}
