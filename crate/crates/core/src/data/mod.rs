//! Core domain types and their on-disk formats.

mod annotations;
mod dmap;
mod manifest;
mod pgm;

pub use annotations::{encode_annotations, load_annotations, parse_annotations, save_annotations};
pub use dmap::{decode_density, encode_density, load_density, save_density};
pub use manifest::{FrameEntry, Manifest};
pub use pgm::{decode_pgm, encode_pgm, load_frame, save_frame};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel 8-bit raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be at least 1x1"));
        }
        let len = width
            .checked_mul(height)
            .ok_or_else(|| Error::invalid("frame dimensions overflow"))?;
        if pixels.len() != len {
            return Err(Error::shape(format!(
                "frame {width}x{height} needs {len} pixels, got {}",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_size(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Axis-aligned pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x.checked_add(self.width).is_some_and(|r| r <= width)
            && self.y.checked_add(self.height).is_some_and(|b| b <= height)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Vehicle bounding box with half-open integer bounds: `x0 <= x < x1`, `y0 <= y < y1`.
///
/// Coordinates may lie outside the frame; [`BBox::clip`] handles that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BBox {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::invalid(format!(
                "degenerate box ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0 || h <= 0 {
            0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// Visible part of the box inside a `width x height` frame, or `None` if it lies
    /// entirely outside.
    pub fn clip(&self, width: usize, height: usize) -> Option<Rect> {
        let x0 = self.x0.max(0);
        let y0 = self.y0.max(0);
        let x1 = self.x1.min(width as i64);
        let y1 = self.y1.min(height as i64);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(Rect::new(
            x0 as usize,
            y0 as usize,
            (x1 - x0) as usize,
            (y1 - y0) as usize,
        ))
    }

    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= width as i64 && self.y1 <= height as i64
    }

    pub fn translated(&self, dx: i64, dy: i64) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub frame_id: String,
    pub boxes: Vec<BBox>,
}

/// Region of interest: the counting area in frame coordinates, plus its physical length
/// along the road (used to convert counts into vehicles per unit length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub rect: Rect,
    pub region_length: f64,
}

impl Roi {
    pub fn new(rect: Rect, region_length: f64) -> Result<Self> {
        if !(region_length > 0.0 && region_length.is_finite()) {
            return Err(Error::invalid(format!(
                "region_length must be positive, got {region_length}"
            )));
        }
        if rect.width == 0 || rect.height == 0 {
            return Err(Error::invalid("ROI must be non-empty"));
        }
        Ok(Roi {
            rect,
            region_length,
        })
    }

    pub fn full_frame(width: usize, height: usize, region_length: f64) -> Result<Self> {
        Self::new(Rect::new(0, 0, width, height), region_length)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.rect.fits_within(width, height) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "ROI {:?} does not fit in a {width}x{height} frame",
                self.rect
            )))
        }
    }
}

/// Per-pixel vehicle density (vehicles / pixel), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        DensityMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Builds a map from raw values. Negative or non-finite values are rejected.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::from_values_unchecked_sign(width, height, values).and_then(|m| {
            if m.values.iter().all(|v| *v >= 0.0 && v.is_finite()) {
                Ok(m)
            } else {
                Err(Error::invalid("density values must be finite and non-negative"))
            }
        })
    }

    /// Like [`DensityMap::from_values`] but allows any sign; used for predicted maps and
    /// gradients, which are not densities in the strict sense.
    pub fn from_values_unchecked_sign(
        width: usize,
        height: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let len = width
            .checked_mul(height)
            .ok_or_else(|| Error::invalid("dimension overflow"))?;
        if values.len() != len {
            return Err(Error::shape(format!(
                "{width}x{height} map needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(DensityMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sum_in(&self, rect: Rect) -> f64 {
        (rect.y..rect.y + rect.height)
            .map(|y| {
                let row = y * self.width;
                self.values[row + rect.x..row + rect.x + rect.width]
                    .iter()
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn same_shape(&self, other: &DensityMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Partition of a ROI into `rows x cols` rectangular blocks, indexed `j = row * cols + col`.
///
/// Blocks on the right and bottom edges are truncated when the ROI size is not a multiple of
/// the block size, so every ROI pixel belongs to exactly one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGrid {
    roi: Roi,
    block_w: usize,
    block_h: usize,
    rows: usize,
    cols: usize,
}

impl BlockGrid {
    pub fn new(roi: Roi, block_w: usize, block_h: usize) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(Error::invalid("block size must be at least 1x1"));
        }
        let cols = roi.rect.width.div_ceil(block_w);
        let rows = roi.rect.height.div_ceil(block_h);
        Ok(BlockGrid {
            roi,
            block_w,
            block_h,
            rows,
            cols,
        })
    }

    pub fn roi(&self) -> &Roi {
        &self.roi
    }

    pub fn block_size(&self) -> (usize, usize) {
        (self.block_w, self.block_h)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_blocks(&self) -> usize {
        self.rows * self.cols
    }

    /// Frame-coordinate rectangle of block `j`.
    pub fn block_rect(&self, j: usize) -> Rect {
        assert!(j < self.num_blocks(), "block index {j} out of range");
        let (row, col) = (j / self.cols, j % self.cols);
        let r = &self.roi.rect;
        let x = r.x + col * self.block_w;
        let y = r.y + row * self.block_h;
        Rect::new(
            x,
            y,
            self.block_w.min(r.x + r.width - x),
            self.block_h.min(r.y + r.height - y),
        )
    }

    pub fn blocks(&self) -> impl Iterator<Item = Rect> + '_ {
        (0..self.num_blocks()).map(|j| self.block_rect(j))
    }

    /// Block containing frame pixel `(x, y)`, if it is inside the ROI.
    pub fn block_index(&self, x: usize, y: usize) -> Option<usize> {
        let r = &self.roi.rect;
        if !r.contains(x, y) {
            return None;
        }
        let col = (x - r.x) / self.block_w;
        let row = (y - r.y) / self.block_h;
        Some(row * self.cols + col)
    }
}

/// Per-frame block features: one `K`-vector per block.
///
/// Stored as a `K x J` matrix so that block `j`'s features are column `j`, aligned with the
/// corresponding column of the [`WeightMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    /// `rows` holds `blocks * dim` values, block-major (block 0's features first).
    pub fn from_block_rows(blocks: usize, dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != blocks * dim {
            return Err(Error::shape(format!(
                "{blocks}x{dim} feature matrix needs {} values, got {}",
                blocks * dim,
                rows.len()
            )));
        }
        // column-major K x J storage is exactly block-major order
        Ok(FeatureMatrix(DMatrix::from_column_slice(dim, blocks, rows)))
    }

    /// Wraps a `K x J` matrix.
    pub fn from_columns(m: DMatrix<f64>) -> Self {
        FeatureMatrix(m)
    }

    pub fn num_blocks(&self) -> usize {
        self.0.ncols()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// The `K x J` backing matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn block(&self, j: usize) -> &[f64] {
        let k = self.dim();
        &self.0.as_slice()[j * k..(j + 1) * k]
    }

    /// All values, block-major.
    pub fn as_block_rows(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Block regressors stacked as columns: `K x J`, column `j` is the weight vector of block `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn zeros(dim: usize, blocks: usize) -> Self {
        WeightMatrix(DMatrix::zeros(dim, blocks))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        WeightMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let k = self.dim();
        &self.0.as_slice()[j * k..(j + 1) * k]
    }
}

/// Descent step schedule for the subgradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `eta` at every iteration.
    #[default]
    Constant,
    /// `eta / sqrt(k)` at iteration `k` (1-based).
    InvSqrt,
}

/// Regularization, rank bound, and solver settings for the block regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Weight of the squared Frobenius norm.
    pub alpha: f64,
    /// Weight of the entrywise L1 norm.
    pub beta: f64,
    /// Rank bound on the weight matrix.
    pub rank: usize,
    /// Descent step size.
    pub eta: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Relative objective change (over [`Hyperparams::CONVERGENCE_WINDOW`] iterations)
    /// below which a run stops.
    pub tol: f64,
    pub seed: u64,
    /// Nesterov extrapolation between projections. Off gives plain projected subgradient.
    pub accelerated: bool,
    pub schedule: StepSchedule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 1e-3,
            beta: 0.0,
            rank: 2,
            eta: 1e-2,
            max_iters: 2000,
            restarts: 3,
            tol: 1e-6,
            seed: 0,
            accelerated: true,
            schedule: StepSchedule::Constant,
        }
    }
}

impl Hyperparams {
    pub const CONVERGENCE_WINDOW: usize = 5;

    /// Checks every constraint, including `rank <= min(dim, blocks)`.
    pub fn validate(&self, dim: usize, blocks: usize) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.tol > 0.0) {
            return fail(format!("tol must be > 0, got {}", self.tol));
        }
        if self.restarts < 1 {
            return fail("restarts must be >= 1".into());
        }
        if self.max_iters < 1 {
            return fail("max_iters must be >= 1".into());
        }
        let max_rank = dim.min(blocks);
        if self.rank < 1 || self.rank > max_rank {
            return fail(format!(
                "rank r must satisfy 1 <= r <= min(K, J) = {max_rank}, got {}",
                self.rank
            ));
        }
        Ok(())
    }
}
