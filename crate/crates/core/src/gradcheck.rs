//! Finite-difference gradient checks.
//!
//! [`run_checks`] drives every analytic gradient in the crate (the regression subgradient
//! and the multi-task loss kernels) against central differences of the corresponding
//! objective at random points.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DensityMap, FeatureMatrix, WeightMatrix};
use crate::mt_losses::{density_loss, huber_count_loss, multitask_loss, DEFAULT_LAMBDA};
use crate::optimizer::{objective, subgradient, TrainSet};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-5;

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], h: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + h;
            let plus = f(&x);
            x[i] = point[i] - h;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1)`: relative error for gradients of magnitude above one and
/// absolute error below, so near-zero components do not blow up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Deliberate defects for exercising the checker itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate the Huber derivative.
    HuberSignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub points: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

fn max_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max)
}

fn random_train(rng: &mut ChaCha8Rng, n: usize, j: usize, k: usize) -> TrainSet {
    let feats = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..j * k).map(|_| rng.random_range(0.0..1.0)).collect();
            FeatureMatrix::from_block_rows(j, k, &v).unwrap()
        })
        .collect();
    let dens = (0..n)
        .map(|_| (0..j).map(|_| rng.random_range(0.0..2.0)).collect())
        .collect();
    TrainSet::new(feats, dens).unwrap()
}

/// Random weights with every `|W_kj| >= min_abs`, so the L1 term is differentiable there.
fn random_weights(rng: &mut ChaCha8Rng, k: usize, j: usize, min_abs: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, j, |_, _| {
        let m = rng.random_range(min_abs..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn check_subgradient(points: usize, beta: f64, tol: f64, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, j, k) = (8, 5, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let train = random_train(&mut rng, n, j, k);
        let alpha = rng.random_range(0.0..0.5);
        // keep entries well away from the L1 kink relative to the step
        let w = random_weights(&mut rng, k, j, if beta > 0.0 { 1e-3 } else { 0.0 });
        let g = subgradient(&WeightMatrix::from_matrix(w.clone()), &train, alpha, beta).unwrap();
        let fd = central_difference(
            |v| {
                let m = WeightMatrix::from_matrix(DMatrix::from_column_slice(k, j, v));
                objective(&m, &train, alpha, beta).unwrap()
            },
            w.as_slice(),
            DEFAULT_STEP,
        );
        worst = worst.max(max_err(g.as_slice(), &fd));
    }
    CheckResult {
        name: if beta > 0.0 {
            "optimizer.subgradient (beta>0)"
        } else {
            "optimizer.subgradient (beta=0)"
        },
        points,
        max_rel_err: worst,
        tol,
    }
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64) -> DensityMap {
    DensityMap::from_values_unchecked_sign(w, h, (0..w * h).map(|_| rng.random_range(lo..1.0)).collect())
        .unwrap()
}

fn check_density_loss(points: usize, tol: f64, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, n) = (4, 3, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let gt: Vec<DensityMap> = (0..n).map(|_| random_map(&mut rng, w, h, 0.0)).collect();
        let pred: Vec<DensityMap> = (0..n).map(|_| random_map(&mut rng, w, h, -1.0)).collect();
        let (_, grads) = density_loss(&pred, &gt).unwrap();
        let analytic: Vec<f64> = grads.iter().flat_map(|m| m.values().to_vec()).collect();
        let flat: Vec<f64> = pred.iter().flat_map(|m| m.values().to_vec()).collect();
        let fd = central_difference(
            |v| {
                let maps: Vec<DensityMap> = v
                    .chunks(w * h)
                    .map(|c| DensityMap::from_values_unchecked_sign(w, h, c.to_vec()).unwrap())
                    .collect();
                density_loss(&maps, &gt).unwrap().0
            },
            &flat,
            DEFAULT_STEP,
        );
        worst = worst.max(max_err(&analytic, &fd));
    }
    CheckResult {
        name: "mt_losses.density_loss",
        points,
        max_rel_err: worst,
        tol,
    }
}

fn huber_grad(est: f64, truth: f64, delta: f64, fault: Option<Fault>) -> (f64, f64) {
    let (l, g) = huber_count_loss(est, truth, delta).unwrap();
    match fault {
        Some(Fault::HuberSignFlip) => (l, -g),
        None => (l, g),
    }
}

fn check_huber(points: usize, tol: f64, seed: u64, fault: Option<Fault>) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let delta = rng.random_range(0.5..5.0);
        let truth = rng.random_range(0.0..30.0);
        // avoid sampling within one FD step of the branch point
        let mut e: f64 = rng.random_range(-3.0 * delta..3.0 * delta);
        if (e.abs() - delta).abs() < 1e-3 {
            e += 2e-3;
        }
        let est = truth + e;
        let (_, g) = huber_grad(est, truth, delta, fault);
        let fd = central_difference(
            |v| huber_count_loss(v[0], truth, delta).unwrap().0,
            &[est],
            DEFAULT_STEP,
        );
        worst = worst.max(rel_err(g, fd[0]));
    }
    CheckResult {
        name: "mt_losses.huber_count_loss",
        points,
        max_rel_err: worst,
        tol,
    }
}

fn check_multitask(points: usize, tol: f64, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, n) = (3, 3, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let gt: Vec<DensityMap> = (0..n).map(|_| random_map(&mut rng, w, h, 0.0)).collect();
        let counts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let delta = rng.random_range(0.5..5.0);
        let params: Vec<f64> = (0..n * w * h + n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |v: &[f64]| {
            let maps: Vec<DensityMap> = (0..n)
                .map(|i| {
                    DensityMap::from_values_unchecked_sign(w, h, v[i * w * h..(i + 1) * w * h].to_vec())
                        .unwrap()
                })
                .collect();
            multitask_loss(&maps, &v[n * w * h..], &gt, &counts, DEFAULT_LAMBDA, delta).unwrap()
        };
        let r = eval(&params);
        let analytic: Vec<f64> = r
            .grad_maps
            .iter()
            .flat_map(|m| m.values().to_vec())
            .chain(r.grad_offsets.iter().copied())
            .collect();
        let fd = central_difference(|v| eval(v).loss, &params, DEFAULT_STEP);
        worst = worst.max(max_err(&analytic, &fd));
    }
    CheckResult {
        name: "mt_losses.multitask_loss",
        points,
        max_rel_err: worst,
        tol,
    }
}

/// Runs every gradient check at `points` random points each.
pub fn run_checks(points: usize, tol: f64, fault: Option<Fault>) -> Vec<CheckResult> {
    vec![
        check_subgradient(points, 0.0, tol, 101),
        check_subgradient(points, 0.05, tol, 102),
        check_density_loss(points, tol, 103),
        check_huber(points, tol, 104, fault),
        check_multitask(points, tol, 105),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|v| v[0] * v[0] + 3.0 * v[0] * v[1], &[1.0, 2.0], 1e-5);
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn all_checks_pass_by_default() {
        for c in run_checks(50, DEFAULT_TOL, None) {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        let results = run_checks(10, DEFAULT_TOL, Some(Fault::HuberSignFlip));
        let huber = results.iter().find(|c| c.name.contains("huber")).unwrap();
        assert!(!huber.passed());
    }

    #[test]
    fn tiny_tolerance_fails() {
        assert!(run_checks(10, 1e-12, None).iter().any(|c| !c.passed()));
    }
}
