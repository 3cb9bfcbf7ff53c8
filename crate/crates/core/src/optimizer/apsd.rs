//! Accelerated projected subgradient descent.
//!
//! Each iteration takes a subgradient step on the auxiliary iterate `A`, projects it onto the
//! feasible set to get the next `W`, then extrapolates:
//!
//! ```text
//! A <- A - step * dA
//! W_{k+1} <- P(A)
//! t_{k+1} <- (1 + sqrt(1 + 4 t_k^2)) / 2
//! A <- W_{k+1} + ((t_k - 1) / t_{k+1}) (W_{k+1} - W_k)
//! ```
//!
//! The descent step (`eta`, or `eta / sqrt(k)`) and the momentum scalar `t_k` are separate
//! quantities; `t_1 = 1`. With `accelerated = false` the extrapolation is skipped and
//! `A <- W_{k+1}`.
//!
//! The extrapolation is the usual accelerated proximal-gradient form anchored at `W_{k+1}`. A
//! form that rescales the previous auxiliary iterate would throw away the step just taken, so
//! it is not offered.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::objective::BlockQuadratic;
use super::{Projection, TrainSet};
use crate::data::{Hyperparams, StepSchedule, WeightMatrix};
use crate::error::{Error, Result};

const INIT_SCALE: f64 = 0.01;
/// Floor on the denominator of the relative convergence test, so an objective driven to
/// zero still terminates.
const CONVERGENCE_FLOOR: f64 = 1e-12;

/// Objective trace of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub restart: usize,
    /// Objective at the (projected) initialization followed by one value per iteration.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub weights: WeightMatrix,
    /// Objective trace of the winning restart (initialization first).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
    /// Traces of every restart, in restart order.
    pub runs: Vec<RunTrace>,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Momentum update `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`.
pub fn momentum_next(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// Seed of restart `restart`. Depends only on `(seed, restart)`, so a fit with more restarts
/// repeats every run of a fit with fewer.
fn restart_seed(seed: u64, restart: usize) -> u64 {
    let mut z = seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Run {
    weights: DMatrix<f64>,
    trace: RunTrace,
}

fn run_once(
    quad: &BlockQuadratic,
    shape: (usize, usize),
    hp: &Hyperparams,
    projection: Projection,
    restart: usize,
    mut inspect: impl FnMut(usize, &DMatrix<f64>),
) -> Result<Run> {
    let (k, nb) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(hp.seed, restart));
    let init = DMatrix::from_fn(k, nb, |_, _| rng.random_range(-INIT_SCALE..=INIT_SCALE));
    let mut w_prev = projection.apply(&init)?;
    inspect(0, &w_prev);

    let mut a = w_prev.clone();
    let mut grad = DMatrix::zeros(k, nb);
    let mut t = 1.0;
    let mut trace = vec![quad.evaluate(&w_prev, hp.alpha, hp.beta, None)];
    let mut converged = false;

    for iter in 1..=hp.max_iters {
        let step = match hp.schedule {
            StepSchedule::Constant => hp.eta,
            StepSchedule::InvSqrt => hp.eta / (iter as f64).sqrt(),
        };
        quad.evaluate(&a, hp.alpha, hp.beta, Some(&mut grad));
        for (av, gv) in a.iter_mut().zip(grad.iter()) {
            *av -= step * gv;
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                restart,
                iteration: iter,
            });
        }
        // A finite iterate the SVD cannot handle has entries near the overflow threshold.
        let w = projection.apply(&a).map_err(|e| match e {
            Error::SvdFailed => Error::Diverged {
                restart,
                iteration: iter,
            },
            e => e,
        })?;
        inspect(iter, &w);

        let f = quad.evaluate(&w, hp.alpha, hp.beta, None);
        if !f.is_finite() {
            return Err(Error::Diverged {
                restart,
                iteration: iter,
            });
        }
        trace.push(f);

        if hp.accelerated {
            let t_next = momentum_next(t);
            let beta = (t - 1.0) / t_next;
            a = &w + (&w - &w_prev) * beta;
            t = t_next;
        } else {
            a.copy_from(&w);
        }
        w_prev = w;

        let window = Hyperparams::CONVERGENCE_WINDOW;
        if trace.len() > window {
            let old = trace[trace.len() - 1 - window];
            if (old - f).abs() <= hp.tol * old.abs().max(CONVERGENCE_FLOOR) {
                converged = true;
                break;
            }
        }
    }

    Ok(Run {
        weights: w_prev,
        trace: RunTrace {
            restart,
            objective: trace,
            converged,
        },
    })
}

fn fit_with(train: &TrainSet, hp: &Hyperparams, projection: Projection) -> Result<FitReport> {
    let shape = (train.dim(), train.num_blocks());
    let quad = BlockQuadratic::new(train);
    let runs: Vec<Run> = (0..hp.restarts)
        .into_par_iter()
        .map(|r| run_once(&quad, shape, hp, projection, r, |_, _| {}))
        .collect::<Result<_>>()?;

    // lowest final objective wins; ties go to the earliest restart
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            let fa = a.trace.objective.last().unwrap();
            let fb = b.trace.objective.last().unwrap();
            fa.total_cmp(fb).then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");

    let traces: Vec<RunTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    let winner = runs.into_iter().nth(best).unwrap();
    Ok(FitReport {
        weights: WeightMatrix::from_matrix(winner.weights),
        iterations: winner.trace.objective.len() - 1,
        objective_trace: winner.trace.objective,
        restart_index: best,
        converged: winner.trace.converged,
        runs: traces,
    })
}

/// Fits the rank-constrained block regression, returning the best of `hp.restarts` runs.
pub fn apsd_fit(train: &TrainSet, hp: &Hyperparams) -> Result<FitReport> {
    hp.validate(train.dim(), train.num_blocks())?;
    fit_with(train, hp, Projection::Rank(hp.rank))
}

/// Fits a single regressor shared by every block (all columns of `W` equal), with the same
/// solver and regularization. `hp.rank` is ignored.
pub fn fit_shared(train: &TrainSet, hp: &Hyperparams) -> Result<FitReport> {
    let hp = Hyperparams {
        rank: 1,
        ..hp.clone()
    };
    hp.validate(train.dim(), train.num_blocks())?;
    fit_with(train, &hp, Projection::Shared)
}
