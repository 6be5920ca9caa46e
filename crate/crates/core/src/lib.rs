//! Two-branch action-context separation for weakly-supervised temporal
//! action localization.
//!
//! The crate is organized along the pipeline: [`numcore`] provides the
//! numeric primitives, [`model`] the two-branch computation graph,
//! [`losses`] the training objectives, [`localization`] turns model outputs
//! into scored detections, [`evaluation`] computes mAP and snippet-set
//! diagnostics, [`data`] generates and loads datasets, [`training`] runs the
//! optimization loop, [`config`] holds the declarative run configuration and
//! [`verify`] bundles the built-in self-checks.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod localization;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod training;
pub mod verify;
