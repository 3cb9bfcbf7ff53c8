//! Vehicle density estimation from low-resolution traffic camera frames.
//!
//! The pipeline is:
//!
//! 1. [`groundtruth`]: turn bounding-box annotations into per-pixel density maps and
//!    integrate them over a [`BlockGrid`].
//! 2. [`features`]: background subtraction and per-block histogram features.
//! 3. [`optimizer`]: fit one linear regressor per block, with the stacked weight matrix
//!    constrained to low rank, by accelerated projected subgradient descent.
//! 4. [`inference`]: predict block densities, integrate to counts and traffic density,
//!    and score against ground truth.
//!
//! [`mt_losses`] holds the multi-task (density + Huber count) loss kernels with analytic
//! gradients, and [`synthgen`] is a deterministic traffic-scene simulator used as a
//! counting oracle for end-to-end tests.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod groundtruth;
pub mod inference;
pub mod io;
pub mod model_file;
pub mod mt_losses;
pub mod optimizer;
pub mod pipeline;
pub mod synthgen;

pub use data::{
    Annotation, BBox, BlockGrid, DensityMap, FeatureMatrix, Frame, Hyperparams, Manifest, Rect,
    Roi, StepSchedule, WeightMatrix,
};
pub use error::{Error, Result};
pub use features::{FeatureConfig, FgMask};
pub use inference::EvalResult;
pub use optimizer::{FitReport, TrainSet};
pub use synthgen::SceneConfig;
