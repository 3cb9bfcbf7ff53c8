//! Trained model files.
//!
//! A single JSON header line, a newline, the ASCII tag `WMAT`, then the `K x J` weight
//! matrix as little-endian doubles in row-major order (row `k`, column `j`).

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{BlockGrid, Roi, WeightMatrix};
use crate::error::{Error, Result};
use crate::features::{feature_hash, FeatureConfig};
use crate::io;

const WMAT: &[u8; 4] = b"WMAT";
pub const FORMAT: &str = "vdensity-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format: String,
    pub k: usize,
    pub j: usize,
    pub rank: usize,
    pub alpha: f64,
    pub beta: f64,
    pub features: FeatureConfig,
    pub bg_threshold: u8,
    pub block_w: usize,
    pub block_h: usize,
    pub feature_hash: String,
    /// Hash of the experiment configuration that produced the model.
    pub config_hash: String,
}

impl ModelHeader {
    /// Grid the model expects over `roi`, after checking the feature hash it produces.
    pub fn grid_for(&self, roi: Roi) -> Result<BlockGrid> {
        let grid = BlockGrid::new(roi, self.block_w, self.block_h)?;
        let data = feature_hash(&self.features, self.bg_threshold, &grid);
        if data != self.feature_hash {
            return Err(Error::FeatureHash {
                model: self.feature_hash.clone(),
                data,
            });
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub header: ModelHeader,
    pub weights: WeightMatrix,
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let w = &model.weights;
    if w.dim() != model.header.k || w.num_blocks() != model.header.j {
        return Err(Error::shape("model header does not match weight shape"));
    }
    let mut out = serde_json::to_vec(&model.header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(WMAT);
    let m = w.matrix();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::format("model file has no header line"))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(format!("invalid model header: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::format(format!(
            "unsupported model format {:?}",
            header.format
        )));
    }
    let body = &bytes[nl + 1..];
    if body.len() < 4 || &body[..4] != WMAT {
        return Err(Error::format("model file is missing the WMAT block"));
    }
    let (k, j) = (header.k, header.j);
    let data = &body[4..];
    if data.len() != k * j * 8 {
        return Err(Error::format(format!(
            "WMAT block is {} bytes, expected {}",
            data.len(),
            k * j * 8
        )));
    }
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Model {
        weights: WeightMatrix::from_matrix(DMatrix::from_row_slice(k, j, &vals)),
        header,
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&io::read(path)?)
}
