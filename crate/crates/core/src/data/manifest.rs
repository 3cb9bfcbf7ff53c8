//! Dataset manifest (JSON).
//!
//! ```json
//! {
//!   "frames": [{"id": "f0000", "path": "frames/f0000.pgm"}],
//!   "annotations": "annotations.csv",
//!   "background": "background.pgm",
//!   "roi": {"x": 0, "y": 20, "width": 160, "height": 100},
//!   "region_length": 60.0
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_annotations, load_frame, Annotation, BBox, Frame, Rect, Roi};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub frames: Vec<FrameEntry>,
    pub annotations: PathBuf,
    pub background: PathBuf,
    pub roi: Rect,
    pub region_length: f64,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(
        frames: Vec<FrameEntry>,
        annotations: PathBuf,
        background: PathBuf,
        roi: Rect,
        region_length: f64,
    ) -> Self {
        Manifest {
            frames,
            annotations,
            background,
            roi,
            region_length,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read(path)?;
        let mut m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(format!("{}: invalid manifest: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        io::write_atomic(path, &bytes)
    }

    fn validate(&self) -> Result<()> {
        Roi::new(self.roi, self.region_length)?;
        let mut seen = std::collections::HashSet::new();
        for f in &self.frames {
            if !seen.insert(&f.id) {
                return Err(Error::invalid(format!("duplicate frame id {:?}", f.id)));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn roi(&self) -> Result<Roi> {
        Roi::new(self.roi, self.region_length)
    }

    pub fn load_background(&self) -> Result<Frame> {
        load_frame(&self.resolve(&self.background))
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        load_frame(&self.resolve(&self.frames[index].path))
    }

    /// Boxes for every manifest frame, in manifest order. Frames absent from the annotation
    /// file have no vehicles; annotations for frames not in the manifest are an error.
    pub fn load_boxes(&self) -> Result<Vec<Vec<BBox>>> {
        let anns: Vec<Annotation> = load_annotations(&self.resolve(&self.annotations))?;
        let mut by_id: HashMap<String, Vec<BBox>> =
            anns.into_iter().map(|a| (a.frame_id, a.boxes)).collect();
        let out = self
            .frames
            .iter()
            .map(|f| by_id.remove(&f.id).unwrap_or_default())
            .collect();
        if let Some(id) = by_id.keys().min() {
            return Err(Error::invalid(format!(
                "annotation for unknown frame id {id:?}"
            )));
        }
        Ok(out)
    }
}
