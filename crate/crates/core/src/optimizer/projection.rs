use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Feasible set the solver projects onto after each descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Matrices of rank at most `r`.
    Rank(usize),
    /// Matrices whose columns are all equal: one regressor shared by every block.
    Shared,
}

impl Projection {
    pub fn apply(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match *self {
            Projection::Rank(r) => rank_project(a, r),
            Projection::Shared => Ok(project_shared(a)),
        }
    }
}

/// Frobenius-nearest matrix of rank at most `r`: the SVD truncated to the `r` largest
/// singular triplets.
pub fn rank_project(a: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    let full = m.min(n);
    if r < 1 || r > full {
        return Err(Error::invalid(format!(
            "rank {r} out of range 1..={full} for a {m}x{n} matrix"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot project a matrix with non-finite entries"));
    }
    if r == full {
        return Ok(a.clone());
    }
    let svd = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|_| Error::SvdFailed)?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();

    // Singular values come out non-increasing; sort anyway so ties keep index order.
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut out = DMatrix::zeros(m, n);
    for &k in &order[..r] {
        for j in 0..n {
            let scaled = s[k] * v[(j, k)];
            for i in 0..m {
                out[(i, j)] += u[(i, k)] * scaled;
            }
        }
    }
    Ok(out)
}

/// Frobenius-nearest matrix with identical columns: every column becomes the column mean.
pub fn project_shared(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.column_mean();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, _| mean[i])
}
