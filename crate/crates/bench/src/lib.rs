//! Fixtures shared by the benchmarks.

use vdensity::data::BlockGrid;
use vdensity::features::{extract_frames, FeatureConfig, DEFAULT_BG_THRESHOLD};
use vdensity::groundtruth::{block_density, box_density};
use vdensity::optimizer::TrainSet;
use vdensity::synthgen::{generate, Dataset, SceneConfig};

pub fn scene(n_frames: usize) -> Dataset {
    generate(&SceneConfig {
        n_frames,
        seed: 42,
        ..SceneConfig::default()
    })
    .expect("default scene is valid")
}

pub fn grid(ds: &Dataset) -> BlockGrid {
    BlockGrid::new(ds.roi(), 16, 16).expect("scene ROI holds a 16x16 grid")
}

/// Features and block densities for every frame, computed in memory.
pub fn training_set(ds: &Dataset) -> TrainSet {
    let grid = grid(ds);
    let frames: Vec<_> = ds.frames.iter().map(|f| f.frame.clone()).collect();
    let features = extract_frames(
        &frames,
        &ds.background,
        DEFAULT_BG_THRESHOLD,
        &grid,
        &FeatureConfig::default(),
    )
    .expect("features");
    let densities = ds
        .frames
        .iter()
        .map(|f| {
            let d = box_density(f.frame.width(), f.frame.height(), &f.boxes).expect("density");
            block_density(&d, &grid).expect("block density")
        })
        .collect();
    TrainSet::new(features, densities).expect("consistent shapes")
}
