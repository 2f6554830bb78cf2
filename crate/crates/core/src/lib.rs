//! Deployment planning for cooperative sensing and communication networks:
//! localization CRLB fields, cooperative downlink rates, similarity
//! invariance checks and base-station placement optimizers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cli;
pub mod comm;
pub mod error;
pub mod geometry;
pub mod invariance;
pub mod mm;
pub mod problem;
pub mod scenario;
pub mod search;
pub mod sensing;

pub use comm::{area_rate, expected_snr, rate_point, rate_point_mc, CommParams, McEstimate, RateMode};
pub use error::{Error, Result};
pub use geometry::{
    sample_region, Deployment, Density, GaussianBump, Region, SampleMode, SampleSet, SimilarityTransform, Vec3,
};
pub use problem::{BsSpace, PlanningProblem};
pub use sensing::{
    area_crlb, coverage_probability, crlb_field, crlb_of_fisher, crlb_point, fisher_matrix, ranging_variance,
    CrlbField, PhysicalSensing, SensingParams,
};
