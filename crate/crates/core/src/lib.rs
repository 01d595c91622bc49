//! HMAX feature hierarchy (S1 → C1 → S2 → C2) with a configurable template
//! "tuning size", face stimulus construction, non-parametric statistics and
//! runners for the composite-face, face-inversion and whole-part experiments.
//!
//! The heavy inner loops (per-image feature extraction, per-template
//! matching, bootstrap replicates) go through [`par`], which uses rayon when
//! the `parallel` feature is enabled (the default) and plain iterators
//! otherwise. Results never depend on the schedule.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod hmax;
pub mod par;
pub mod rng;
pub mod stats;
pub mod stimulus;

pub use error::{Error, Result};
pub use hmax::{Band, C2Vector, FeatureMap, Model, ModelConfig, SizeClass, Template, TemplateBank};

pub use stimulus::{Image, OvalMask, Region};
