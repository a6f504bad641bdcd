//! Learning all model parameters from frames with ground-truth boxes.
//!
//! The target SAR model is fit on the pixels inside truth boxes. The
//! background model is fit on patches of the same sizes drawn at random
//! outside every truth box. The label prior is fit on the rasterized truth.

use rand::Rng as _;

use crate::autologistic::{fit_auto_with, AutoFit, FitAutoOptions, PllStats};
use crate::bbox::BoundingBox;
use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::grid::LabelGrid;
use crate::icm::{ClassGaussian, GaussianParams};
use crate::rng;
use crate::sar::{fit_sar, samples_from_region, ClassSarModel, SarSample, DEFAULT_RIDGE};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub sar: ClassSarModel,
    pub prior: AutoFit,
    /// Per-class i.i.d. Gaussians over the same training pixels.
    pub iid: ClassGaussian,
    /// Fraction of target pixels in the truth label grids.
    pub target_rate: f64,
    pub background_patches: Vec<(usize, BoundingBox)>,
}

/// A same-size box clear of every truth box, or `None` if none fits.
fn background_patch(frame: &Frame, w: u32, h: u32, rng: &mut rng::Rng) -> Option<BoundingBox> {
    let dims = frame.image.dims();
    if w as usize > dims.width || h as usize > dims.height {
        return None;
    }
    for _ in 0..1000 {
        let b = BoundingBox::new(
            rng.random_range(0..=dims.width - w as usize) as i64,
            rng.random_range(0..=dims.height - h as usize) as i64,
            w,
            h,
        );
        if frame.truth.iter().all(|t| t.intersection_area(&b) == 0) {
            return Some(b);
        }
    }
    None
}

fn region(frame: &Frame, b: &BoundingBox) -> Result<Vec<SarSample>> {
    samples_from_region(&frame.image, b.x0 as usize, b.y0 as usize, b.w as usize, b.h as usize)
}

pub fn train(frames: &[Frame], seed: u64) -> Result<TrainedModel> {
    train_with(frames, seed, &FitAutoOptions::default())
}

pub fn train_with(frames: &[Frame], seed: u64, auto_opts: &FitAutoOptions) -> Result<TrainedModel> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("training frames"));
    }
    if frames.iter().all(|f| f.truth.is_empty()) {
        return Err(Error::DegenerateLabels("no truth boxes in the training frames".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut target = Vec::new();
    let mut background = Vec::new();
    let mut patches = Vec::new();
    let mut stats = PllStats::default();
    let (mut ones, mut total) = (0usize, 0usize);
    for (i, f) in frames.iter().enumerate() {
        for b in &f.truth {
            target.extend(region(f, b)?);
            if let Some(p) = background_patch(f, b.w, b.h, &mut rng) {
                background.extend(region(f, &p)?);
                patches.push((i, p));
            }
        }
        let labels = LabelGrid::from_boxes(f.image.dims(), &f.truth)?;
        ones += labels.count_ones();
        total += labels.dims().len();
        stats.add(&PllStats::from_labels(&labels));
    }
    let sar = ClassSarModel::new(fit_sar(&target, DEFAULT_RIDGE)?, fit_sar(&background, DEFAULT_RIDGE)?)?;
    let prior = fit_auto_with(&stats, auto_opts)?;
    let values = |s: &[SarSample]| s.iter().map(|s| s.y).collect::<Vec<_>>();
    let iid = ClassGaussian {
        target: GaussianParams::from_samples(&values(&target))?,
        background: GaussianParams::from_samples(&values(&background))?,
    };
    Ok(TrainedModel {
        sar,
        prior,
        iid,
        target_rate: ones as f64 / total as f64,
        background_patches: patches,
    })
}
