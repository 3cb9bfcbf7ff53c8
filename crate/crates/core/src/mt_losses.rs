//! Multi-task density + count losses with analytic gradients.
//!
//! The density term is a per-pixel squared error; the count term compares a residual count
//! (density integral plus a caller-supplied offset) against the true count with a Huber loss.
//! These are the loss kernels only; whatever model produces the maps and offsets is outside
//! this crate.

use crate::data::DensityMap;
use crate::error::{Error, Result};

/// Weight of the count term in [`total_loss`].
pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Huber threshold, in vehicles.
pub const DEFAULT_DELTA: f64 = 5.0;

/// `loss = (1/2N) sum_i sum_p (pred - gt)^2`, `grad_i(p) = (pred - gt) / N`.
pub fn density_loss(pred: &[DensityMap], gt: &[DensityMap]) -> Result<(f64, Vec<DensityMap>)> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "{} predicted maps but {} ground-truth maps",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("density loss needs at least one map"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if !p.same_shape(g) {
            return Err(Error::shape(format!(
                "map {i}: prediction is {}x{}, ground truth {}x{}",
                p.width(),
                p.height(),
                g.width(),
                g.height()
            )));
        }
        let diff: Vec<f64> = p.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
        loss += diff.iter().map(|d| d * d).sum::<f64>();
        let grad = diff.into_iter().map(|d| d / n).collect();
        grads.push(DensityMap::from_values_unchecked_sign(p.width(), p.height(), grad)?);
    }
    Ok((loss / (2.0 * n), grads))
}

/// Count expressed as the density integral plus a learned offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountPrediction {
    pub base_count: f64,
    pub offset: f64,
    pub total: f64,
}

pub fn residual_count(density: &DensityMap, offset: f64) -> CountPrediction {
    let base_count = density.total();
    CountPrediction {
        base_count,
        offset,
        total: base_count + offset,
    }
}

/// Huber loss of `est - truth` and its derivative with respect to `est`.
pub fn huber_count_loss(est: f64, truth: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("Huber delta must be > 0, got {delta}")));
    }
    let e = est - truth;
    if e.abs() <= delta {
        Ok((0.5 * e * e, e))
    } else {
        Ok((delta * e.abs() - 0.5 * delta * delta, delta * e.signum()))
    }
}

/// `L = L_D + lambda * mean(count_terms)`; with no count terms the count part is zero.
pub fn total_loss(density_term: f64, count_terms: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if count_terms.is_empty() {
        return Ok(density_term);
    }
    let mean = count_terms.iter().sum::<f64>() / count_terms.len() as f64;
    Ok(density_term + lambda * mean)
}

/// Full multi-task loss with gradients for every input.
#[derive(Debug, Clone)]
pub struct MultiTaskLoss {
    pub loss: f64,
    pub grad_maps: Vec<DensityMap>,
    pub grad_offsets: Vec<f64>,
}

/// Combines the kernels: density loss on `pred` vs `gt`, Huber loss on
/// `residual_count(pred_i, offsets_i)` vs `true_counts_i`, weighted by `lambda`.
pub fn multitask_loss(
    pred: &[DensityMap],
    offsets: &[f64],
    gt: &[DensityMap],
    true_counts: &[f64],
    lambda: f64,
    delta: f64,
) -> Result<MultiTaskLoss> {
    if offsets.len() != pred.len() || true_counts.len() != pred.len() {
        return Err(Error::shape("offsets and counts must match the number of maps"));
    }
    let (ld, mut grad_maps) = density_loss(pred, gt)?;
    let n = pred.len() as f64;
    let mut terms = Vec::with_capacity(pred.len());
    let mut grad_offsets = Vec::with_capacity(pred.len());
    for (i, map) in pred.iter().enumerate() {
        let c = residual_count(map, offsets[i]);
        let (l, dl) = huber_count_loss(c.total, true_counts[i], delta)?;
        terms.push(l);
        // d total / d pixel = 1 and d total / d offset = 1
        let g = lambda * dl / n;
        grad_offsets.push(g);
        grad_maps[i].values_mut().iter_mut().for_each(|v| *v += g);
    }
    Ok(MultiTaskLoss {
        loss: total_loss(ld, &terms, lambda)?,
        grad_maps,
        grad_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(w: usize, h: usize, v: Vec<f64>) -> DensityMap {
        DensityMap::from_values_unchecked_sign(w, h, v).unwrap()
    }

    #[test]
    fn density_loss_zero_when_equal() {
        let m = map(3, 2, vec![0.1, 0.2, 0.0, 1.0, 0.5, 0.3]);
        let (l, g) = density_loss(std::slice::from_ref(&m), std::slice::from_ref(&m)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g[0].values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn density_loss_single_pixel() {
        let (l, g) = density_loss(&[map(1, 1, vec![3.0])], &[map(1, 1, vec![1.0])]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g[0].values(), &[2.0]);
    }

    #[test]
    fn density_loss_errors() {
        assert!(density_loss(&[], &[]).is_err());
        assert!(density_loss(&[map(1, 1, vec![0.0])], &[]).is_err());
        assert!(density_loss(&[map(1, 2, vec![0.0; 2])], &[map(2, 1, vec![0.0; 2])]).is_err());
    }

    #[test]
    fn density_loss_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let p: Vec<f64> = (0..2 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..2 * 12).map(|_| rng.random_range(0.0..1.0)).collect();
            let gt = [map(4, 3, g[..12].to_vec()), map(4, 3, g[12..].to_vec())];
            let f = |v: &[f64]| {
                density_loss(&[map(4, 3, v[..12].to_vec()), map(4, 3, v[12..].to_vec())], &gt)
                    .unwrap()
                    .0
            };
            let (_, grads) =
                density_loss(&[map(4, 3, p[..12].to_vec()), map(4, 3, p[12..].to_vec())], &gt)
                    .unwrap();
            let analytic: Vec<f64> = grads.iter().flat_map(|m| m.values().to_vec()).collect();
            let fd = central_difference(f, &p, 1e-5);
            for (a, b) in analytic.iter().zip(&fd) {
                assert!(rel_err(*a, *b) <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn residual_count_parts() {
        let m = map(2, 2, vec![0.25, 0.5, 0.0, 0.25]);
        let c = residual_count(&m, 0.0);
        assert_eq!(c.total, m.total());
        assert_eq!(residual_count(&DensityMap::zeros(3, 3), 2.5).total, 2.5);
        let a = 3.0;
        let scaled = map(2, 2, m.values().iter().map(|v| a * v).collect());
        let lhs = residual_count(&scaled, 1.5).total;
        assert!((lhs - (a * residual_count(&m, 0.0).total + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber_count_loss(10.5, 10.0, 1.0).unwrap(), (0.125, 0.5));
        assert_eq!(huber_count_loss(12.0, 10.0, 1.0).unwrap(), (1.5, 1.0));
        assert_eq!(huber_count_loss(8.0, 10.0, 1.0).unwrap(), (1.5, -1.0));
        let (q, _) = huber_count_loss(3.0, 0.0, 3.0).unwrap();
        assert_eq!(q, 4.5);
        assert!(huber_count_loss(1.0, 0.0, 0.0).is_err());
        assert!(huber_count_loss(1.0, 0.0, -2.0).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.7, &[3.0, 4.0], 0.0).unwrap(), 1.7);
        assert!((total_loss(1.0, &[2.0, 4.0], 0.1).unwrap() - 1.3).abs() < 1e-15);
        assert_eq!(DEFAULT_LAMBDA, 0.1);
        assert!(total_loss(1.0, &[1.0], -0.1).is_err());
    }

    #[test]
    fn multitask_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (w, h, n) = (3, 3, 2);
        let gt: Vec<DensityMap> = (0..n)
            .map(|_| map(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()))
            .collect();
        let counts = [3.0, 12.0];
        let delta = 2.0;
        // parameters: both maps' pixels then both offsets
        let params: Vec<f64> = (0..n * w * h + n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |v: &[f64]| {
            let maps: Vec<DensityMap> = (0..n)
                .map(|i| map(w, h, v[i * w * h..(i + 1) * w * h].to_vec()))
                .collect();
            multitask_loss(&maps, &v[n * w * h..], &gt, &counts, 0.1, delta).unwrap()
        };
        let r = eval(&params);
        let analytic: Vec<f64> = r
            .grad_maps
            .iter()
            .flat_map(|m| m.values().to_vec())
            .chain(r.grad_offsets.iter().copied())
            .collect();
        let fd = central_difference(|v| eval(v).loss, &params, 1e-5);
        for (a, b) in analytic.iter().zip(&fd) {
            assert!(rel_err(*a, *b) <= 1e-6, "{a} vs {b}");
        }
    }
}
