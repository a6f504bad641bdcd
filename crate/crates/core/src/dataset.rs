//! Frames with ground truth, and the manifest listing them.
//!
//! A manifest is a text file with one `image-path,truth-path` pair per line.
//! Relative paths resolve against the manifest's directory. Blank lines and
//! `#` comments are skipped.

use std::path::{Path, PathBuf};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use crate::io;

/// An image together with its (possibly empty) ground-truth boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub image: PixelGrid,
    pub truth: Vec<BoundingBox>,
}

impl Frame {
    pub fn new(image: PixelGrid, truth: Vec<BoundingBox>) -> Result<Self> {
        if let Some(b) = truth.iter().find(|b| !b.inside(image.dims())) {
            return Err(Error::OutOfBounds(format!(
                "truth box {},{},{},{} outside {}x{} image",
                b.x0,
                b.y0,
                b.w,
                b.h,
                image.width(),
                image.height()
            )));
        }
        Ok(Self { image, truth })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub truth: PathBuf,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (img, truth) = line.split_once(',').ok_or_else(|| {
            Error::parse("manifest", format!("line {}: expected image-path,truth-path", i + 1))
        })?;
        let resolve = |p: &str| {
            let p = Path::new(p.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        out.push(ManifestEntry {
            image: resolve(img),
            truth: resolve(truth),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn load_frame(entry: &ManifestEntry) -> Result<Frame> {
    let image = io::load_image(&entry.image)?;
    let truth = io::read_truth(&entry.truth)?;
    Frame::new(image, truth)
}

/// Load every frame listed in a manifest, in order.
pub fn load_frames(manifest: impl AsRef<Path>) -> Result<Vec<Frame>> {
    read_manifest(manifest)?.iter().map(load_frame).collect()
}

/// Write frames as `frame_NNNN.pgm` / `frame_NNNN.csv` plus `manifest.txt`.
///
/// Intensities are rounded to integers; 8-bit when every sample fits,
/// otherwise 16-bit.
pub fn write_dataset(dir: impl AsRef<Path>, frames: &[Frame]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, frame) in frames.iter().enumerate() {
        let img = format!("frame_{i:04}.pgm");
        let csv = format!("frame_{i:04}.csv");
        let maxval = io::pgm::natural_maxval(&frame.image);
        io::write_pgm(dir.join(&img), &frame.image, maxval)?;
        io::write_truth(dir.join(&csv), &frame.truth)?;
        manifest.push_str(&format!("{img},{csv}\n"));
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
