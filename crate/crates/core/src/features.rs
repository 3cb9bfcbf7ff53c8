//! Background subtraction and per-block features.
//!
//! Each block's feature vector is the concatenation of
//!
//! * an L1-normalized intensity histogram over the block's foreground pixels,
//! * an L1-normalized, magnitude-weighted gradient-orientation histogram over the same
//!   pixels (orientation bins split `[0, 2pi)` evenly, starting at angle 0),
//! * the foreground ratio `|fg in block| / |block|`,
//! * a constant bias of 1.
//!
//! Histograms of blocks without foreground are all zero. Every entry lies in `[0, 1]`.

use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{BlockGrid, FeatureMatrix, Frame};
use crate::error::{Error, Result};
use crate::io;

pub const DEFAULT_BG_THRESHOLD: u8 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub intensity_bins: usize,
    pub orient_bins: usize,
    pub include_fg_ratio: bool,
    pub include_bias: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            intensity_bins: 8,
            orient_bins: 8,
            include_fg_ratio: true,
            include_bias: true,
        }
    }
}

impl FeatureConfig {
    /// Feature dimension `K`.
    pub fn dim(&self) -> usize {
        self.intensity_bins
            + self.orient_bins
            + usize::from(self.include_fg_ratio)
            + usize::from(self.include_bias)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intensity_bins < 2 || self.intensity_bins > 256 {
            return Err(Error::invalid("intensity_bins must be in [2, 256]"));
        }
        if self.orient_bins < 2 {
            return Err(Error::invalid("orient_bins must be >= 2"));
        }
        Ok(())
    }
}

/// Foreground mask; `true` marks a foreground pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FgMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl FgMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape("mask length does not match its dimensions"));
        }
        Ok(FgMask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Marks pixels whose absolute difference from the background exceeds `threshold`.
pub fn background_subtract(frame: &Frame, background: &Frame, threshold: u8) -> Result<FgMask> {
    if !frame.same_size(background) {
        return Err(Error::shape(format!(
            "frame is {}x{} but background is {}x{}",
            frame.width(),
            frame.height(),
            background.width(),
            background.height()
        )));
    }
    let bits = frame
        .pixels()
        .iter()
        .zip(background.pixels())
        .map(|(a, b)| a.abs_diff(*b) > threshold)
        .collect();
    FgMask::new(frame.width(), frame.height(), bits)
}

/// Central-difference gradient; one-sided differences on the frame border.
fn gradient(frame: &Frame, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (frame.width(), frame.height());
    let px = |x: usize, y: usize| f64::from(frame.get(x, y));
    let gx = if w == 1 {
        0.0
    } else if x == 0 {
        px(1, y) - px(0, y)
    } else if x == w - 1 {
        px(x, y) - px(x - 1, y)
    } else {
        0.5 * (px(x + 1, y) - px(x - 1, y))
    };
    let gy = if h == 1 {
        0.0
    } else if y == 0 {
        px(x, 1) - px(x, 0)
    } else if y == h - 1 {
        px(x, y) - px(x, y - 1)
    } else {
        0.5 * (px(x, y + 1) - px(x, y - 1))
    };
    (gx, gy)
}

fn orientation_bin(gx: f64, gy: f64, bins: usize) -> usize {
    let mut angle = gy.atan2(gx);
    if angle < 0.0 {
        angle += TAU;
    }
    ((angle / TAU * bins as f64) as usize).min(bins - 1)
}

fn normalize(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
}

pub fn extract_block_features(
    frame: &Frame,
    mask: &FgMask,
    grid: &BlockGrid,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if mask.width() != frame.width() || mask.height() != frame.height() {
        return Err(Error::shape("mask and frame dimensions differ"));
    }
    grid.roi().check_within(frame.width(), frame.height())?;

    let k = cfg.dim();
    let (ib, ob) = (cfg.intensity_bins, cfg.orient_bins);
    let mut rows = vec![0.0; grid.num_blocks() * k];
    for (j, rect) in grid.blocks().enumerate() {
        let row = &mut rows[j * k..(j + 1) * k];
        let (intensity, rest) = row.split_at_mut(ib);
        let (orient, tail) = rest.split_at_mut(ob);
        let mut fg = 0usize;
        for y in rect.y..rect.y + rect.height {
            for x in rect.x..rect.x + rect.width {
                if !mask.get(x, y) {
                    continue;
                }
                fg += 1;
                intensity[usize::from(frame.get(x, y)) * ib / 256] += 1.0;
                let (gx, gy) = gradient(frame, x, y);
                let mag = gx.hypot(gy);
                if mag > 0.0 {
                    orient[orientation_bin(gx, gy, ob)] += mag;
                }
            }
        }
        normalize(intensity);
        normalize(orient);
        let mut t = 0;
        if cfg.include_fg_ratio {
            tail[t] = fg as f64 / rect.area() as f64;
            t += 1;
        }
        if cfg.include_bias {
            tail[t] = 1.0;
        }
    }
    FeatureMatrix::from_block_rows(grid.num_blocks(), k, &rows)
}

/// Background subtraction plus feature extraction for a batch of frames, in parallel.
pub fn extract_frames(
    frames: &[Frame],
    background: &Frame,
    threshold: u8,
    grid: &BlockGrid,
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureMatrix>> {
    frames
        .par_iter()
        .map(|f| {
            let mask = background_subtract(f, background, threshold)?;
            extract_block_features(f, &mask, grid, cfg)
        })
        .collect()
}

/// Identifies everything that determines the feature space: the feature layout, the
/// foreground threshold, and the block grid. Models record it so they are never applied to
/// features computed differently.
pub fn feature_hash(cfg: &FeatureConfig, threshold: u8, grid: &BlockGrid) -> String {
    let r = grid.roi().rect;
    let (bw, bh) = grid.block_size();
    let canon = format!(
        "ib={};ob={};fg={};bias={};thr={};roi={},{},{},{};block={}x{}",
        cfg.intensity_bins,
        cfg.orient_bins,
        cfg.include_fg_ratio,
        cfg.include_bias,
        threshold,
        r.x,
        r.y,
        r.width,
        r.height,
        bw,
        bh
    );
    let digest = Sha256::digest(canon.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

const FEAT_MAGIC: &[u8; 4] = b"FEAT";

/// Feature cache: `FEAT`, then `N`, `J`, `K` as little-endian `u32`, then `N * J * K`
/// little-endian doubles (frame-major, then block-major).
pub fn encode_features(frames: &[FeatureMatrix]) -> Result<Vec<u8>> {
    let (j, k) = frames
        .first()
        .map(|f| (f.num_blocks(), f.dim()))
        .unwrap_or((0, 0));
    if frames.iter().any(|f| f.num_blocks() != j || f.dim() != k) {
        return Err(Error::shape("frames have differing feature shapes"));
    }
    let word = |v: usize| {
        u32::try_from(v)
            .map(u32::to_le_bytes)
            .map_err(|_| Error::invalid("dimension overflow"))
    };
    let mut out = Vec::with_capacity(16 + frames.len() * j * k * 8);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&word(frames.len())?);
    out.extend_from_slice(&word(j)?);
    out.extend_from_slice(&word(k)?);
    for f in frames {
        for v in f.as_block_rows() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<FeatureMatrix>> {
    if bytes.len() < 16 || &bytes[..4] != FEAT_MAGIC {
        return Err(Error::format("not a feature cache file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, j, k) = (word(4), word(8), word(12));
    let expected = n
        .checked_mul(j)
        .and_then(|v| v.checked_mul(k))
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::format("dimension overflow"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::format("feature cache payload has the wrong length"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    (0..n)
        .map(|i| FeatureMatrix::from_block_rows(j, k, &values[i * j * k..(i + 1) * j * k]))
        .collect()
}

pub fn save_features(frames: &[FeatureMatrix], path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_features(frames)?)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureMatrix>> {
    decode_features(&io::read(path)?)
}
