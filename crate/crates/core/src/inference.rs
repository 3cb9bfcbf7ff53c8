//! Prediction, counting, and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Roi, WeightMatrix};
use crate::error::{Error, Result};

/// Block-level prediction for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrediction {
    /// `max(0, w_j . x_j)`: the density used for counting.
    pub clamped: Vec<f64>,
    /// `w_j . x_j` before clamping, kept for diagnostics.
    pub raw: Vec<f64>,
}

impl BlockPrediction {
    pub fn count(&self) -> f64 {
        count_from_blocks(&self.clamped)
    }

    pub fn raw_count(&self) -> f64 {
        count_from_blocks(&self.raw)
    }
}

pub fn predict_blocks(w: &WeightMatrix, x: &FeatureMatrix) -> Result<BlockPrediction> {
    if w.dim() != x.dim() || w.num_blocks() != x.num_blocks() {
        return Err(Error::shape(format!(
            "weights are {}x{} but features are K={} J={}",
            w.dim(),
            w.num_blocks(),
            x.dim(),
            x.num_blocks()
        )));
    }
    let raw: Vec<f64> = (0..w.num_blocks())
        .map(|j| w.column(j).iter().zip(x.block(j)).map(|(a, b)| a * b).sum())
        .collect();
    let clamped = raw.iter().map(|v| v.max(0.0)).collect();
    Ok(BlockPrediction { clamped, raw })
}

pub fn count_from_blocks(blocks: &[f64]) -> f64 {
    blocks.iter().sum()
}

/// Vehicles per unit of road length.
pub fn traffic_density(count: f64, roi: &Roi) -> Result<f64> {
    if !(roi.region_length > 0.0) {
        return Err(Error::invalid("region_length must be positive"));
    }
    Ok(count / roi.region_length)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCount {
    pub frame_id: String,
    pub true_count: f64,
    pub est_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mae: f64,
    pub mse: f64,
    /// Average relative accuracy, `1 - mean(|e_i| / max(c_i, 1))`.
    pub ara: f64,
    pub per_frame: Vec<FrameCount>,
}

/// Count metrics over frames with `e_i = est_i - true_i`.
pub fn evaluate(true_counts: &[f64], est_counts: &[f64]) -> Result<EvalResult> {
    let ids: Vec<String> = (0..true_counts.len()).map(|i| i.to_string()).collect();
    evaluate_frames(&ids, true_counts, est_counts)
}

pub fn evaluate_frames(
    frame_ids: &[String],
    true_counts: &[f64],
    est_counts: &[f64],
) -> Result<EvalResult> {
    if true_counts.len() != est_counts.len() || frame_ids.len() != true_counts.len() {
        return Err(Error::shape(format!(
            "{} true counts, {} estimates, {} frame ids",
            true_counts.len(),
            est_counts.len(),
            frame_ids.len()
        )));
    }
    if true_counts.is_empty() {
        return Err(Error::invalid("evaluation needs at least one frame"));
    }
    let n = true_counts.len() as f64;
    let (mut abs, mut sq, mut rel) = (0.0, 0.0, 0.0);
    for (&c, &e) in true_counts.iter().zip(est_counts) {
        let err = (e - c).abs();
        abs += err;
        sq += err * err;
        rel += err / c.max(1.0);
    }
    Ok(EvalResult {
        mae: abs / n,
        mse: sq / n,
        ara: 1.0 - rel / n,
        per_frame: frame_ids
            .iter()
            .zip(true_counts.iter().zip(est_counts))
            .map(|(id, (&t, &e))| FrameCount {
                frame_id: id.clone(),
                true_count: t,
                est_count: e,
            })
            .collect(),
    })
}

/// Per-frame report CSV: `frame_id,true_count,est_count,abs_err`.
pub fn report_csv(result: &EvalResult) -> Vec<u8> {
    let mut s = String::from("frame_id,true_count,est_count,abs_err\n");
    for f in &result.per_frame {
        s.push_str(&format!(
            "{},{},{},{}\n",
            f.frame_id,
            f.true_count,
            f.est_count,
            (f.est_count - f.true_count).abs()
        ));
    }
    s.into_bytes()
}

/// Summary object for the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mae: f64,
    pub mse: f64,
    pub ara: f64,
    pub n_frames: usize,
}

impl From<&EvalResult> for EvalSummary {
    fn from(r: &EvalResult) -> Self {
        EvalSummary {
            mae: r.mae,
            mse: r.mse,
            ara: r.ara,
            n_frames: r.per_frame.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rect;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn zero_weights_predict_zero() {
        let x = FeatureMatrix::from_block_rows(3, 2, &[1.0; 6]).unwrap();
        let p = predict_blocks(&WeightMatrix::zeros(2, 3), &x).unwrap();
        assert_eq!(p.clamped, vec![0.0; 3]);
    }

    #[test]
    fn scalar_product_and_clamp() {
        let x = FeatureMatrix::from_block_rows(2, 1, &[3.0, 1.0]).unwrap();
        let w = WeightMatrix::from_matrix(DMatrix::from_row_slice(1, 2, &[2.0, -0.5]));
        let p = predict_blocks(&w, &x).unwrap();
        assert_eq!(p.raw, vec![6.0, -0.5]);
        assert_eq!(p.clamped, vec![6.0, 0.0]);
        assert_eq!(p.count(), 6.0);
        assert_eq!(p.raw_count(), 5.5);
        assert!(predict_blocks(&WeightMatrix::zeros(2, 2), &x).is_err());
    }

    #[test]
    fn counts_and_traffic_density() {
        assert_eq!(count_from_blocks(&[1.0, 0.5, 0.5]), 2.0);
        assert_eq!(count_from_blocks(&[0.0; 4]), 0.0);
        let roi = Roi::new(Rect::new(0, 0, 4, 4), 60.0).unwrap();
        assert!((traffic_density(12.0, &roi).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(traffic_density(0.0, &roi).unwrap(), 0.0);
        let longer = Roi::new(roi.rect, 180.0).unwrap();
        let a = traffic_density(12.0, &roi).unwrap();
        let b = traffic_density(12.0, &longer).unwrap();
        assert!((a / 3.0 - b).abs() < 1e-15);
    }

    #[test]
    fn metric_fixtures() {
        let r = evaluate(&[10.0, 10.0], &[10.0, 10.0]).unwrap();
        assert_eq!((r.mae, r.mse, r.ara), (0.0, 0.0, 1.0));
        let r = evaluate(&[10.0], &[12.0]).unwrap();
        assert_eq!((r.mae, r.mse, r.ara), (2.0, 4.0, 0.8));
        let r = evaluate(&[0.0], &[1.0]).unwrap();
        assert_eq!(r.ara, 0.0);
        assert!(evaluate(&[], &[]).is_err());
        assert!(evaluate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_format() {
        let r = evaluate_frames(&["a".into()], &[3.0], &[2.5]).unwrap();
        assert_eq!(
            String::from_utf8(report_csv(&r)).unwrap(),
            "frame_id,true_count,est_count,abs_err\na,3,2.5,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn zero_error_iff_exact(
            truth in proptest::collection::vec(0u32..40, 1..20),
            noise in proptest::collection::vec(-3i32..=3, 20),
        ) {
            let t: Vec<f64> = truth.iter().map(|v| f64::from(*v)).collect();
            let e: Vec<f64> = t.iter().zip(&noise).map(|(a, n)| a + f64::from(*n)).collect();
            let r = evaluate(&t, &e).unwrap();
            let exact = t == e;
            prop_assert_eq!(r.mae == 0.0, exact);
            prop_assert_eq!(r.mse == 0.0, exact);
            prop_assert!(r.mse >= r.mae * r.mae - 1e-12);
            prop_assert!(r.ara <= 1.0);
        }
    }
}
