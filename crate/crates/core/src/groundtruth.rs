//! Ground-truth density maps from annotations.
//!
//! The canonical map spreads each box's unit mass uniformly over the box: a pixel covered by
//! boxes `O(p)` gets `sum over o in O(p) of 1 / area(o)`. Boxes crossing the frame border are
//! clipped but keep their full-area denominator, so only the visible fraction of the vehicle
//! is counted. [`gaussian_density`] is the kernel-based alternative used by point-annotated
//! counting datasets.

use crate::data::{BBox, BlockGrid, DensityMap};
use crate::error::{Error, Result};

pub fn box_density(width: usize, height: usize, boxes: &[BBox]) -> Result<DensityMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("density map dimensions must be at least 1x1"));
    }
    let mut map = DensityMap::zeros(width, height);
    let values = map.values_mut();
    for b in boxes {
        let visible = b.clip(width, height).ok_or_else(|| {
            Error::invalid(format!(
                "box ({},{})-({},{}) does not intersect the {width}x{height} frame",
                b.x0, b.y0, b.x1, b.y1
            ))
        })?;
        let mass = 1.0 / b.area() as f64;
        for y in visible.y..visible.y + visible.height {
            let row = y * width;
            for v in &mut values[row + visible.x..row + visible.x + visible.width] {
                *v += mass;
            }
        }
    }
    Ok(map)
}

/// Density mass of every block: `out[j]` is the sum of `map` over block `j`.
pub fn block_density(map: &DensityMap, grid: &BlockGrid) -> Result<Vec<f64>> {
    grid.roi().check_within(map.width(), map.height())?;
    Ok(grid.blocks().map(|r| map.sum_in(r)).collect())
}

/// Sum of 2D Gaussian kernels centred at `centers` (pixel coordinates, pixel centres at
/// integers). Each kernel is truncated at radius `4 * sigma` and at the frame border, then
/// renormalized so it contributes exactly one unit of mass.
pub fn gaussian_density(
    width: usize,
    height: usize,
    centers: &[(f64, f64)],
    sigma: f64,
) -> Result<DensityMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("density map dimensions must be at least 1x1"));
    }
    let mut map = DensityMap::zeros(width, height);
    let radius = 4.0 * sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut kernel = Vec::new();

    for &(cx, cy) in centers {
        let inside = cx >= -0.5 && cy >= -0.5 && cx < width as f64 - 0.5 && cy < height as f64 - 0.5;
        if !inside || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::invalid(format!("center ({cx}, {cy}) is outside the frame")));
        }
        let x_lo = (cx - radius).ceil().max(0.0) as usize;
        let x_hi = ((cx + radius).floor() as usize).min(width - 1);
        let y_lo = (cy - radius).ceil().max(0.0) as usize;
        let y_hi = ((cy + radius).floor() as usize).min(height - 1);

        kernel.clear();
        let mut total = 0.0;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= radius * radius {
                    let k = (-d2 * inv_two_var).exp();
                    total += k;
                    kernel.push((y * width + x, k));
                }
            }
        }
        let values = map.values_mut();
        if total > 0.0 {
            for &(i, k) in &kernel {
                values[i] += k / total;
            }
        } else {
            // sigma so small that no pixel centre falls in the support
            let x = (cx.round().max(0.0) as usize).min(width - 1);
            let y = (cy.round().max(0.0) as usize).min(height - 1);
            values[y * width + x] += 1.0;
        }
    }
    Ok(map)
}
