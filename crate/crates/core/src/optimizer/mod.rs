//! Rank-constrained block regression.
//!
//! Minimizes
//!
//! ```text
//! (1/2N) sum_i sum_j (w_j . x_j^(i) - D_j^(i))^2 + alpha ||W||_F^2 + beta |W|_1
//! subject to rank(W) <= r
//! ```
//!
//! over the `K x J` weight matrix `W` by accelerated projected subgradient descent
//! ([`apsd_fit`]).

mod apsd;
mod cv;
mod objective;
mod projection;

pub use apsd::{apsd_fit, fit_shared, momentum_next, FitReport, RunTrace};
pub use cv::{cross_validate, CvGrid, CvOutcome, CvScore};
pub use objective::{objective, subgradient};
pub use projection::{project_shared, rank_project, Projection};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Training data: per-frame block features and the matching ground-truth block densities.
#[derive(Debug, Clone)]
pub struct TrainSet {
    features: Vec<FeatureMatrix>,
    densities: Vec<Vec<f64>>,
}

impl TrainSet {
    pub fn new(features: Vec<FeatureMatrix>, densities: Vec<Vec<f64>>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if features.len() != densities.len() {
            return Err(Error::shape(format!(
                "{} feature matrices but {} density vectors",
                features.len(),
                densities.len()
            )));
        }
        let (j, k) = (features[0].num_blocks(), features[0].dim());
        for (i, (f, d)) in features.iter().zip(&densities).enumerate() {
            if f.num_blocks() != j || f.dim() != k {
                return Err(Error::shape(format!(
                    "frame {i} has {}x{} features, expected {j}x{k}",
                    f.num_blocks(),
                    f.dim()
                )));
            }
            if d.len() != j {
                return Err(Error::shape(format!(
                    "frame {i} has {} block densities, expected {j}",
                    d.len()
                )));
            }
            if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "frame {i} has a negative or non-finite block density"
                )));
            }
        }
        Ok(TrainSet {
            features,
            densities,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.features[0].num_blocks()
    }

    pub fn dim(&self) -> usize {
        self.features[0].dim()
    }

    pub fn features(&self) -> &[FeatureMatrix] {
        &self.features
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }

    /// Frames at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<TrainSet> {
        TrainSet::new(
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.densities[i].clone()).collect(),
        )
    }
}
