//! Toolkit for studying flaky failures in GitHub Actions build histories.
//!
//! The crate covers the full pipeline: ingesting rerun histories from the
//! Actions API (or on-disk fixtures), measuring what reruns cost, classifying
//! failure messages into a category taxonomy, labeling failures as flaky via
//! rerun evidence, and training a two-channel detector that fuses log
//! similarity with structured build features. The [`harness`] module evaluates
//! detectors under forward-chaining splits so no model ever sees the future.

pub mod cost;
pub mod detector;
pub mod diag;
pub mod errmark;
pub mod features;
pub mod fnv;
pub mod harness;
pub mod ingest;
pub mod labeler;
pub mod learners;
pub mod logsem;
pub mod model;
pub mod taxonomy;

/// Version stamp written into every machine-readable document this crate emits.
pub const SCHEMA_VERSION: u32 = 1;
