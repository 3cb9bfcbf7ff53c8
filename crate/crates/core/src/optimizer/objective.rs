use nalgebra::DMatrix;

use super::TrainSet;
use crate::data::WeightMatrix;
use crate::error::{Error, Result};

fn check_shape(w: &WeightMatrix, train: &TrainSet) -> Result<()> {
    if w.dim() != train.dim() || w.num_blocks() != train.num_blocks() {
        return Err(Error::shape(format!(
            "weights are {}x{} but training data is K={} J={}",
            w.dim(),
            w.num_blocks(),
            train.dim(),
            train.num_blocks()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regularized least-squares objective, evaluated directly from the training frames.
pub fn objective(w: &WeightMatrix, train: &TrainSet, alpha: f64, beta: f64) -> Result<f64> {
    check_shape(w, train)?;
    let n = train.len() as f64;
    let mut data = 0.0;
    for (x, d) in train.features().iter().zip(train.densities()) {
        for (j, dj) in d.iter().enumerate() {
            let r = dot(w.column(j), x.block(j)) - dj;
            data += r * r;
        }
    }
    let m = w.matrix();
    let frob = m.iter().map(|v| v * v).sum::<f64>();
    let l1 = m.iter().map(|v| v.abs()).sum::<f64>();
    Ok(data / (2.0 * n) + alpha * frob + beta * l1)
}

/// A subgradient of [`objective`]. The L1 term uses `+1` for entries `>= 0` and `-1`
/// otherwise, so a zero weight contributes `+beta`.
pub fn subgradient(
    w: &WeightMatrix,
    train: &TrainSet,
    alpha: f64,
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_shape(w, train)?;
    let (k, nb) = (w.dim(), w.num_blocks());
    let inv_n = 1.0 / train.len() as f64;
    let mut g = DMatrix::zeros(k, nb);
    for (x, d) in train.features().iter().zip(train.densities()) {
        for (j, dj) in d.iter().enumerate() {
            let xj = x.block(j);
            let r = dot(w.column(j), xj) - dj;
            let col = &mut g.as_mut_slice()[j * k..(j + 1) * k];
            for (gk, xk) in col.iter_mut().zip(xj) {
                *gk += r * xk;
            }
        }
    }
    for (gv, wv) in g.iter_mut().zip(w.matrix().iter()) {
        let sign = if *wv >= 0.0 { 1.0 } else { -1.0 };
        *gv = *gv * inv_n + 2.0 * alpha * wv + beta * sign;
    }
    Ok(g)
}

/// Per-block sufficient statistics of the data term, so each solver iteration costs
/// `O(J K^2)` rather than `O(N J K)`:
/// `data(W) = sum_j (1/2 w_j' C_j w_j - b_j' w_j + c_j / 2)`.
pub(crate) struct BlockQuadratic {
    k: usize,
    /// `C_j = (1/N) sum_i x x'`, `J` column-major `K x K` blocks.
    gram: Vec<f64>,
    /// `b_j = (1/N) sum_i D x`.
    cross: Vec<f64>,
    /// `sum_j (1/N) sum_i D^2`.
    const_term: f64,
}

impl BlockQuadratic {
    pub(crate) fn new(train: &TrainSet) -> Self {
        let (k, nb) = (train.dim(), train.num_blocks());
        let inv_n = 1.0 / train.len() as f64;
        let mut gram = vec![0.0; nb * k * k];
        let mut cross = vec![0.0; nb * k];
        let mut const_term = 0.0;
        for (x, d) in train.features().iter().zip(train.densities()) {
            for (j, dj) in d.iter().enumerate() {
                let xj = x.block(j);
                let g = &mut gram[j * k * k..(j + 1) * k * k];
                for a in 0..k {
                    for b in 0..k {
                        g[a * k + b] += xj[a] * xj[b];
                    }
                }
                for (c, xa) in cross[j * k..(j + 1) * k].iter_mut().zip(xj) {
                    *c += dj * xa;
                }
                const_term += dj * dj;
            }
        }
        gram.iter_mut().for_each(|v| *v *= inv_n);
        cross.iter_mut().for_each(|v| *v *= inv_n);
        BlockQuadratic {
            k,
            gram,
            cross,
            const_term: const_term * inv_n,
        }
    }

    /// Objective value and subgradient at `w` in one pass.
    pub(crate) fn evaluate(
        &self,
        w: &DMatrix<f64>,
        alpha: f64,
        beta: f64,
        grad: Option<&mut DMatrix<f64>>,
    ) -> f64 {
        let k = self.k;
        let ws = w.as_slice();
        let mut value = 0.5 * self.const_term;
        let mut grad_slice = grad.map(|g| g.as_mut_slice());
        for j in 0..w.ncols() {
            let wj = &ws[j * k..(j + 1) * k];
            let c = &self.gram[j * k * k..(j + 1) * k * k];
            let b = &self.cross[j * k..(j + 1) * k];
            for a in 0..k {
                let cw: f64 = c[a * k..(a + 1) * k].iter().zip(wj).map(|(x, y)| x * y).sum();
                let g = cw - b[a];
                value += wj[a] * (0.5 * cw - b[a]);
                if let Some(gs) = grad_slice.as_deref_mut() {
                    let sign = if wj[a] >= 0.0 { 1.0 } else { -1.0 };
                    gs[j * k + a] = g + 2.0 * alpha * wj[a] + beta * sign;
                }
            }
        }
        let frob: f64 = ws.iter().map(|v| v * v).sum();
        let l1: f64 = ws.iter().map(|v| v.abs()).sum();
        value + alpha * frob + beta * l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;
    use crate::gradcheck::central_difference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n: usize, j: usize, k: usize) -> TrainSet {
        let feats = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..j * k).map(|_| rng.random_range(-1.0..1.0)).collect();
                FeatureMatrix::from_block_rows(j, k, &v).unwrap()
            })
            .collect();
        let dens = (0..n)
            .map(|_| (0..j).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        TrainSet::new(feats, dens).unwrap()
    }

    fn random_w(rng: &mut ChaCha8Rng, k: usize, j: usize) -> WeightMatrix {
        WeightMatrix::from_matrix(DMatrix::from_fn(k, j, |_, _| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn zero_weights_give_half_mean_squared_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_set(&mut rng, 7, 4, 3);
        let expect: f64 = t.densities().iter().flatten().map(|d| d * d).sum::<f64>() / 14.0;
        let got = objective(&WeightMatrix::zeros(3, 4), &t, 0.0, 0.0).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn scalar_hand_example() {
        let t = TrainSet::new(
            vec![FeatureMatrix::from_block_rows(1, 1, &[2.0]).unwrap()],
            vec![vec![3.0]],
        )
        .unwrap();
        let w = WeightMatrix::from_matrix(DMatrix::from_element(1, 1, 1.0));
        assert_eq!(objective(&w, &t, 1.0, 1.0).unwrap(), 2.5);
        // (2-3)*2 + 2*1 + 1 = 1
        assert_eq!(subgradient(&w, &t, 1.0, 1.0).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn exact_fit_has_zero_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (j, k) = (3, 2);
        let w = WeightMatrix::from_matrix(DMatrix::from_fn(k, j, |_, _| rng.random_range(0.0..1.0)));
        let feats: Vec<FeatureMatrix> = (0..5)
            .map(|_| {
                let v: Vec<f64> = (0..j * k).map(|_| rng.random_range(0.0..1.0)).collect();
                FeatureMatrix::from_block_rows(j, k, &v).unwrap()
            })
            .collect();
        let dens = feats
            .iter()
            .map(|x| (0..j).map(|b| dot(w.column(b), x.block(b))).collect())
            .collect();
        let t = TrainSet::new(feats, dens).unwrap();
        assert!(objective(&w, &t, 0.0, 0.0).unwrap() < 1e-30);
    }

    #[test]
    fn zero_weight_l1_subgradient_is_plus_beta() {
        let t = TrainSet::new(
            vec![FeatureMatrix::from_block_rows(1, 2, &[0.0, 0.0]).unwrap()],
            vec![vec![0.0]],
        )
        .unwrap();
        let g = subgradient(&WeightMatrix::zeros(2, 1), &t, 0.3, 0.7).unwrap();
        assert_eq!(g.as_slice(), &[0.7, 0.7]);
        let g = subgradient(&WeightMatrix::zeros(2, 1), &t, 0.0, 0.0).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_set(&mut rng, 2, 4, 3);
        assert!(objective(&WeightMatrix::zeros(3, 5), &t, 0.0, 0.0).is_err());
        assert!(subgradient(&WeightMatrix::zeros(4, 4), &t, 0.0, 0.0).is_err());
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = random_set(&mut rng, 6, 3, 4);
            let w = random_w(&mut rng, 4, 3);
            let alpha = rng.random_range(0.0..0.5);
            let g = subgradient(&w, &t, alpha, 0.0).unwrap();
            let fd = central_difference(
                |v| {
                    let m = DMatrix::from_column_slice(4, 3, v);
                    objective(&WeightMatrix::from_matrix(m), &t, alpha, 0.0).unwrap()
                },
                w.matrix().as_slice(),
                1e-5,
            );
            for (a, b) in g.iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
                assert!(rel <= 1e-5, "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn block_quadratic_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_set(&mut rng, 9, 5, 3);
        let q = BlockQuadratic::new(&t);
        for _ in 0..10 {
            let w = random_w(&mut rng, 3, 5);
            let mut g = DMatrix::zeros(3, 5);
            let v = q.evaluate(w.matrix(), 0.1, 0.2, Some(&mut g));
            let direct = objective(&w, &t, 0.1, 0.2).unwrap();
            assert!((v - direct).abs() < 1e-12 * direct.max(1.0));
            let gd = subgradient(&w, &t, 0.1, 0.2).unwrap();
            assert!((g - gd).norm() < 1e-12);
        }
    }
}
