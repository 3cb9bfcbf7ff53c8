//! Deterministic synthetic traffic scenes.
//!
//! Vehicles are filled rectangles on a flat background. Each frame draws a Poisson number
//! of vehicles; each gets a lane and a ground-contact row between the horizon and the bottom
//! of the frame, and its size is the base size scaled linearly from `far_scale` at the
//! horizon to `near_scale` at the bottom row. Within a lane, overlaps are capped by
//! [`resolve_overlaps`]. Annotations are exactly the drawn boxes.
//!
//! All randomness comes from [`prng::XorShift64Star`] streams keyed by `(seed, frame)`, so a
//! dataset depends only on its config, never on generation order.

pub mod prng;
mod overlap;

pub use overlap::{resolve_overlaps, DEFAULT_MAX_IOU};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use self::prng::XorShift64Star;
use crate::data::{
    save_annotations, save_frame, Annotation, BBox, FrameEntry, Manifest, Rect, Roi,
};
use crate::data::Frame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub n_lanes: usize,
    /// Row where vehicles are smallest; vehicles touch the ground between here and the bottom.
    pub horizon_row: usize,
    pub near_scale: f64,
    pub far_scale: f64,
    /// Vehicle `[width, height]` in pixels at scale 1.
    pub base_vehicle: [usize; 2],
    /// Expected vehicles per frame.
    pub arrival_rate: f64,
    /// Inclusive range of vehicle intensities.
    pub intensity_fg_range: [u8; 2],
    pub intensity_bg: u8,
    pub noise_sigma: f64,
    pub max_iou: f64,
    pub n_frames: usize,
    pub seed: u64,
    /// Physical length of the counting region, written to the manifest.
    pub region_length: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 160,
            height: 120,
            n_lanes: 4,
            horizon_row: 20,
            near_scale: 1.0,
            far_scale: 0.3,
            base_vehicle: [30, 20],
            arrival_rate: 8.0,
            intensity_fg_range: [150, 250],
            intensity_bg: 90,
            noise_sigma: 3.0,
            max_iou: DEFAULT_MAX_IOU,
            n_frames: 100,
            seed: 0,
            region_length: 100.0,
        }
    }
}

const MAX_ARRIVAL_RATE: f64 = 500.0;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return fail("width and height must be >= 1");
        }
        if self.n_lanes == 0 || self.n_lanes > self.width {
            return fail("n_lanes must be in [1, width]");
        }
        if self.horizon_row >= self.height {
            return fail("horizon_row must be < height");
        }
        if !(self.far_scale > 0.0 && self.far_scale < self.near_scale && self.near_scale.is_finite()) {
            return fail("scales must satisfy 0 < far_scale < near_scale");
        }
        if !(0.0..=MAX_ARRIVAL_RATE).contains(&self.arrival_rate) {
            return fail("arrival_rate must be in [0, 500]");
        }
        if self.intensity_fg_range[0] > self.intensity_fg_range[1] {
            return fail("intensity_fg_range must be [low, high] with low <= high");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.max_iou) {
            return fail("max_iou must be in [0, 1]");
        }
        if !(self.region_length > 0.0 && self.region_length.is_finite()) {
            return fail("region_length must be > 0");
        }
        if self.base_vehicle[0] == 0 || self.base_vehicle[1] == 0 {
            return fail("base_vehicle dimensions must be >= 1");
        }
        let (w, h) = self.vehicle_size(self.height - 1);
        if w > self.lane_width() || h > self.height {
            return Err(Error::invalid(format!(
                "vehicle too large for frame at requested scale: {w}x{h} pixels in a lane {} \
                 pixels wide and a frame {} pixels tall",
                self.lane_width(),
                self.height
            )));
        }
        Ok(())
    }

    /// Narrowest lane width.
    fn lane_width(&self) -> usize {
        self.width / self.n_lanes
    }

    fn lane_bounds(&self, lane: usize) -> (usize, usize) {
        (lane * self.width / self.n_lanes, (lane + 1) * self.width / self.n_lanes)
    }

    /// Perspective scale for a vehicle whose bottom edge sits on `row`.
    pub fn scale_at(&self, row: usize) -> f64 {
        let span = (self.height - 1).saturating_sub(self.horizon_row);
        if span == 0 {
            return self.near_scale;
        }
        let t = row.saturating_sub(self.horizon_row).min(span) as f64 / span as f64;
        self.far_scale + (self.near_scale - self.far_scale) * t
    }

    /// Vehicle `(width, height)` in pixels at ground row `row`.
    pub fn vehicle_size(&self, row: usize) -> (usize, usize) {
        let s = self.scale_at(row);
        let dim = |base: usize| ((base as f64 * s).round() as usize).max(1);
        (dim(self.base_vehicle[0]), dim(self.base_vehicle[1]))
    }

    /// Counting region: the road between the horizon and the bottom of the frame.
    pub fn roi(&self) -> Roi {
        Roi {
            rect: Rect::new(0, self.horizon_row, self.width, self.height - self.horizon_row),
            region_length: self.region_length,
        }
    }

    pub fn background(&self) -> Frame {
        Frame::filled(self.width, self.height, self.intensity_bg).expect("validated size")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub id: String,
    pub frame: Frame,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SceneConfig,
    pub background: Frame,
    pub frames: Vec<SyntheticFrame>,
}

impl Dataset {
    pub fn vehicles_total(&self) -> usize {
        self.frames.iter().map(|f| f.boxes.len()).sum()
    }

    pub fn roi(&self) -> Roi {
        self.config.roi()
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.frames
            .iter()
            .map(|f| Annotation {
                frame_id: f.id.clone(),
                boxes: f.boxes.clone(),
            })
            .collect()
    }
}

pub fn frame_id(index: usize) -> String {
    format!("f{index:05}")
}

fn generate_frame(cfg: &SceneConfig, index: usize) -> SyntheticFrame {
    let mut rng = XorShift64Star::from_stream(cfg.seed, index as u64);
    let n = rng.poisson(cfg.arrival_rate);

    let mut lanes: Vec<Vec<(BBox, u8)>> = vec![Vec::new(); cfg.n_lanes];
    let rows = (cfg.height - cfg.horizon_row) as u64;
    let [lo, hi] = cfg.intensity_fg_range;
    for _ in 0..n {
        let lane = rng.below(cfg.n_lanes as u64) as usize;
        let ground = cfg.horizon_row + rng.below(rows) as usize;
        let (w, h) = cfg.vehicle_size(ground);
        let (lx0, lx1) = cfg.lane_bounds(lane);
        let x0 = lx0 + rng.below((lx1 - lx0 - w + 1) as u64) as usize;
        let y1 = (ground + 1).max(h);
        let intensity = lo + rng.below(u64::from(hi - lo) + 1) as u8;
        let b = BBox::new(x0 as i64, (y1 - h) as i64, (x0 + w) as i64, y1 as i64)
            .expect("vehicle sizes are at least 1");
        lanes[lane].push((b, intensity));
    }

    let mut drawn: Vec<(BBox, u8)> = Vec::new();
    for lane in lanes {
        let boxes: Vec<BBox> = lane.iter().map(|(b, _)| *b).collect();
        let settled = resolve_overlaps(&boxes, cfg.max_iou, cfg.height);
        // resolve_overlaps keeps input order; walk both to recover intensities
        let mut it = settled.into_iter().peekable();
        for (b, v) in &lane {
            if let Some(s) = it.peek() {
                if s.x0 == b.x0 && s.width() == b.width() && s.height() == b.height() {
                    drawn.push((*s, *v));
                    it.next();
                }
            }
        }
    }
    // far vehicles first so nearer ones occlude them
    drawn.sort_by_key(|(b, _)| b.y1);

    let mut pixels = vec![cfg.intensity_bg; cfg.width * cfg.height];
    for (b, v) in &drawn {
        for y in b.y0 as usize..b.y1 as usize {
            pixels[y * cfg.width + b.x0 as usize..y * cfg.width + b.x1 as usize].fill(*v);
        }
    }
    if cfg.noise_sigma > 0.0 {
        for p in pixels.iter_mut() {
            let v = f64::from(*p) + cfg.noise_sigma * rng.normal();
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    SyntheticFrame {
        id: frame_id(index),
        frame: Frame::new(cfg.width, cfg.height, pixels).expect("validated size"),
        boxes: drawn.into_iter().map(|(b, _)| b).collect(),
    }
}

pub fn generate(cfg: &SceneConfig) -> Result<Dataset> {
    cfg.validate()?;
    let frames = (0..cfg.n_frames)
        .into_par_iter()
        .map(|i| generate_frame(cfg, i))
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        background: cfg.background(),
        frames,
    })
}

/// Writes `background.pgm`, `frames/<id>.pgm`, `annotations.csv` and `manifest.json` under
/// `dir` (created if missing). Returns the manifest path.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::Io {
        path: frames_dir.clone(),
        source: e,
    })?;
    save_frame(&ds.background, &dir.join("background.pgm"))?;
    let entries = ds
        .frames
        .par_iter()
        .map(|f| {
            let rel = PathBuf::from("frames").join(format!("{}.pgm", f.id));
            save_frame(&f.frame, &dir.join(&rel))?;
            Ok(FrameEntry {
                id: f.id.clone(),
                path: rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    save_annotations(&ds.annotations(), &dir.join("annotations.csv"))?;
    let roi = ds.roi();
    let manifest = Manifest::new(
        entries,
        PathBuf::from("annotations.csv"),
        PathBuf::from("background.pgm"),
        roi.rect,
        roi.region_length,
    );
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            n_frames: 12,
            seed: 5,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn zero_arrivals_is_noisy_background() {
        let cfg = SceneConfig {
            arrival_rate: 0.0,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.vehicles_total(), 0);
        for f in &ds.frames {
            assert!(f.boxes.is_empty());
            let max_dev = f
                .frame
                .pixels()
                .iter()
                .map(|p| p.abs_diff(cfg.intensity_bg))
                .max()
                .unwrap();
            assert!(max_dev <= (6.0 * cfg.noise_sigma) as u8);
        }
    }

    #[test]
    fn noiseless_frame_shows_every_box() {
        let cfg = SceneConfig {
            noise_sigma: 0.0,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        assert!(ds.vehicles_total() > 0);
        for f in &ds.frames {
            for b in &f.boxes {
                assert!(b.is_inside(cfg.width, cfg.height));
            }
            // each box's bottom-right pixel belongs to the nearest vehicle covering it,
            // which is never background
            for b in &f.boxes {
                let p = f.frame.get(b.x1 as usize - 1, b.y1 as usize - 1);
                assert!(p >= cfg.intensity_fg_range[0]);
            }
            let fg = f.frame.pixels().iter().filter(|p| **p != cfg.intensity_bg).count();
            assert_eq!(fg == 0, f.boxes.is_empty());
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SceneConfig { seed: 6, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn frames_depend_only_on_index() {
        let a = generate(&small()).unwrap();
        let b = generate(&SceneConfig { n_frames: 4, ..small() }).unwrap();
        assert_eq!(&a.frames[..4], &b.frames[..]);
    }

    #[test]
    fn perspective_scaling() {
        let cfg = small();
        let (fw, fh) = cfg.vehicle_size(cfg.horizon_row);
        let (nw, nh) = cfg.vehicle_size(cfg.height - 1);
        assert!(fw * fh < nw * nh);
        assert_eq!((nw, nh), (30, 20));
        assert_eq!((fw, fh), (9, 6));
    }

    #[test]
    fn mean_area_shrinks_toward_horizon() {
        let cfg = SceneConfig {
            n_frames: 200,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        let buckets = 4;
        let span = cfg.height - cfg.horizon_row;
        let mut sum = vec![0.0; buckets];
        let mut cnt = vec![0usize; buckets];
        for f in &ds.frames {
            for b in &f.boxes {
                let ground = (b.y1 - 1) as usize;
                let bucket = ((ground.saturating_sub(cfg.horizon_row)) * buckets / span).min(buckets - 1);
                sum[bucket] += b.area() as f64;
                cnt[bucket] += 1;
            }
        }
        let means: Vec<f64> = sum.iter().zip(&cnt).map(|(s, c)| s / *c as f64).collect();
        for w in means.windows(2) {
            assert!(w[0] <= w[1], "{means:?}");
        }
    }

    #[test]
    fn rejects_oversized_vehicles() {
        let cfg = SceneConfig {
            base_vehicle: [60, 20],
            ..small()
        };
        let e = generate(&cfg).unwrap_err().to_string();
        assert!(e.contains("vehicle too large"), "{e}");
        assert!(generate(&SceneConfig { far_scale: 1.0, ..small() }).is_err());
        assert!(generate(&SceneConfig { horizon_row: 120, ..small() }).is_err());
    }

    #[test]
    fn writes_loadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small()).unwrap();
        let mpath = write_dataset(&ds, dir.path()).unwrap();
        let m = Manifest::load(&mpath).unwrap();
        assert_eq!(m.frames.len(), 12);
        let boxes = m.load_boxes().unwrap();
        for (i, f) in ds.frames.iter().enumerate() {
            assert_eq!(boxes[i], f.boxes);
            assert_eq!(m.load_frame(i).unwrap(), f.frame);
        }
        assert_eq!(m.load_background().unwrap(), ds.background);
        assert_eq!(m.roi().unwrap(), ds.roi());
    }
}
