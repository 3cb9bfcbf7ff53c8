//! End-to-end drivers: dataset preparation, training, and evaluation from a manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{BlockGrid, FeatureMatrix, Hyperparams, Manifest, Roi};
use crate::error::{Error, Result};
use crate::features::{extract_frames, feature_hash, FeatureConfig, DEFAULT_BG_THRESHOLD};
use crate::groundtruth::{block_density, box_density};
use crate::inference::{evaluate_frames, predict_blocks, BlockPrediction, EvalResult};
use crate::io;
use crate::model_file::{Model, ModelHeader, FORMAT};
use crate::optimizer::{apsd_fit, cross_validate, CvGrid, CvOutcome, FitReport, TrainSet};

/// Short content hash (16 hex digits) of a value's compact JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canon = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&canon)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn default_block() -> usize {
    16
}

fn default_threshold() -> u8 {
    DEFAULT_BG_THRESHOLD
}

/// Training/evaluation experiment, stored as JSON. Relative paths are resolved against the
/// directory holding the config file, so the hash does not depend on where a run lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    /// Default output directory when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_block")]
    pub block_w: usize,
    #[serde(default = "default_block")]
    pub block_h: usize,
    #[serde(default = "default_threshold")]
    pub bg_threshold: u8,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    /// Grid-search `(alpha, beta, rank)` by cross-validation before the final fit.
    #[serde(default)]
    pub cv: Option<CvGrid>,
    /// Training fails its check if the train-set count MAE exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train_mae: Option<f64>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(manifest: PathBuf) -> Self {
        ExperimentConfig {
            manifest,
            out_dir: None,
            block_w: default_block(),
            block_h: default_block(),
            bg_threshold: default_threshold(),
            features: FeatureConfig::default(),
            hyperparams: Hyperparams::default(),
            cv: None,
            max_train_mae: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read(path)?;
        let mut cfg: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::invalid(format!("{}: invalid config: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Directory relative paths are resolved against.
    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.base_dir.join(&self.manifest)
    }

    pub fn out_dir_path(&self) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| self.base_dir.join(d))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("config serializes");
        v.push(b'\n');
        v
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Structural checks that do not need the data (the rank bound is checked once `K` and
    /// `J` are known).
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.block_w == 0 || self.block_h == 0 {
            return Err(Error::invalid("block_w and block_h must be >= 1"));
        }
        if let Some(t) = self.max_train_mae {
            if !(t >= 0.0) {
                return Err(Error::invalid("max_train_mae must be >= 0"));
            }
        }
        let manifest = self.manifest_path();
        if !manifest.exists() {
            return Err(Error::invalid(format!(
                "manifest {} does not exist",
                manifest.display()
            )));
        }
        Ok(())
    }
}

/// Features and ground truth for every frame of a manifest.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub ids: Vec<String>,
    pub features: Vec<FeatureMatrix>,
    /// Ground-truth block densities per frame.
    pub densities: Vec<Vec<f64>>,
    pub grid: BlockGrid,
    pub feature_hash: String,
}

impl PreparedData {
    /// Ground-truth count in the ROI: the density mass over all blocks.
    pub fn true_counts(&self) -> Vec<f64> {
        self.densities.iter().map(|d| d.iter().sum()).collect()
    }

    pub fn train_set(&self) -> Result<TrainSet> {
        TrainSet::new(self.features.clone(), self.densities.clone())
    }

    pub fn roi(&self) -> &Roi {
        self.grid.roi()
    }
}

pub fn prepare(
    manifest: &Manifest,
    grid: BlockGrid,
    bg_threshold: u8,
    features: &FeatureConfig,
) -> Result<PreparedData> {
    let background = manifest.load_background()?;
    grid.roi().check_within(background.width(), background.height())?;
    let frames = (0..manifest.frames.len())
        .into_par_iter()
        .map(|i| manifest.load_frame(i))
        .collect::<Result<Vec<_>>>()?;
    let boxes = manifest.load_boxes()?;
    let densities = frames
        .par_iter()
        .zip(&boxes)
        .map(|(f, b)| block_density(&box_density(f.width(), f.height(), b)?, &grid))
        .collect::<Result<Vec<_>>>()?;
    let feats = extract_frames(&frames, &background, bg_threshold, &grid, features)?;
    Ok(PreparedData {
        ids: manifest.frames.iter().map(|f| f.id.clone()).collect(),
        features: feats,
        densities,
        feature_hash: feature_hash(features, bg_threshold, &grid),
        grid,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: FitReport,
    pub cv: Option<CvOutcome>,
    pub train_eval: EvalResult,
    pub data: PreparedData,
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest_path())?;
    let grid = BlockGrid::new(manifest.roi()?, cfg.block_w, cfg.block_h)?;
    cfg.hyperparams
        .validate(cfg.features.dim(), grid.num_blocks())?;
    let data = prepare(&manifest, grid, cfg.bg_threshold, &cfg.features)?;
    let train = data.train_set()?;

    let (hp, cv) = match &cfg.cv {
        Some(g) => {
            let out = cross_validate(&train, &cfg.hyperparams, g)?;
            (out.best.clone(), Some(out))
        }
        None => (cfg.hyperparams.clone(), None),
    };
    let report = apsd_fit(&train, &hp)?;
    let model = Model {
        header: ModelHeader {
            format: FORMAT.into(),
            k: train.dim(),
            j: train.num_blocks(),
            rank: hp.rank,
            alpha: hp.alpha,
            beta: hp.beta,
            features: cfg.features,
            bg_threshold: cfg.bg_threshold,
            block_w: cfg.block_w,
            block_h: cfg.block_h,
            feature_hash: data.feature_hash.clone(),
            config_hash: cfg.hash(),
        },
        weights: report.weights.clone(),
    };
    let (train_eval, _) = evaluate_model(&model, &data)?;
    Ok(TrainOutcome {
        model,
        report,
        cv,
        train_eval,
        data,
    })
}

/// Checks that `model` was trained on features computed like `data`'s, then predicts and
/// scores every frame.
pub fn evaluate_model(
    model: &Model,
    data: &PreparedData,
) -> Result<(EvalResult, Vec<BlockPrediction>)> {
    if model.header.feature_hash != data.feature_hash {
        return Err(Error::FeatureHash {
            model: model.header.feature_hash.clone(),
            data: data.feature_hash.clone(),
        });
    }
    let preds = data
        .features
        .iter()
        .map(|x| predict_blocks(&model.weights, x))
        .collect::<Result<Vec<_>>>()?;
    let est: Vec<f64> = preds.iter().map(BlockPrediction::count).collect();
    let eval = evaluate_frames(&data.ids, &data.true_counts(), &est)?;
    Ok((eval, preds))
}

/// Prepares `manifest` the way `model` expects (its grid over the manifest's ROI).
pub fn prepare_for_model(model: &Model, manifest: &Manifest) -> Result<PreparedData> {
    let grid = model.header.grid_for(manifest.roi()?)?;
    prepare(
        manifest,
        grid,
        model.header.bg_threshold,
        &model.header.features,
    )
}

/// Training log CSV: `iter,restart,objective` for every restart.
pub fn training_log_csv(report: &FitReport) -> Vec<u8> {
    let mut s = String::from("iter,restart,objective\n");
    for run in &report.runs {
        for (it, f) in run.objective.iter().enumerate() {
            s.push_str(&format!("{it},{},{f:e}\n", run.restart));
        }
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::RunTrace;

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = ExperimentConfig::new("data/manifest.json".into());
        cfg.hyperparams.rank = 3;
        cfg.cv = Some(CvGrid::default());
        cfg.max_train_mae = Some(0.5);
        let back: ExperimentConfig = serde_json::from_slice(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::new("m.json".into());
        let mut b = a.clone();
        b.hyperparams.seed = 1;
        assert_eq!(a.hash().len(), 16);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"manifest": "d/manifest.json", "out_dir": "o"}"#).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.manifest_path(), dir.path().join("d/manifest.json"));
        assert_eq!(cfg.out_dir_path(), Some(dir.path().join("o")));
        // The manifest does not exist yet.
        assert!(matches!(cfg.validate(), Err(Error::Invalid(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        std::fs::write(&path, r#"{"manifest": "m.json", "rnak": 2}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(Error::Invalid(_))));
    }

    #[test]
    fn training_log_lists_every_restart() {
        let report = FitReport {
            weights: crate::data::WeightMatrix::zeros(1, 1),
            objective_trace: vec![2.0, 1.0],
            iterations: 1,
            restart_index: 1,
            converged: true,
            runs: vec![
                RunTrace {
                    restart: 0,
                    objective: vec![3.0, 2.5],
                    converged: true,
                },
                RunTrace {
                    restart: 1,
                    objective: vec![2.0, 1.0],
                    converged: true,
                },
            ],
        };
        let log = String::from_utf8(training_log_csv(&report)).unwrap();
        assert_eq!(
            log,
            "iter,restart,objective\n0,0,3e0\n1,0,2.5e0\n0,1,2e0\n1,1,1e0\n"
        );
    }
}
