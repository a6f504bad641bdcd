//! Synthetic scenes: SAR-textured targets planted on SAR-textured
//! backgrounds, plus moving-target sequences for background subtraction.
//!
//! Each box region is overwritten by an independently sampled patch; nothing
//! is blended at the borders.

use rand::Rng as _;

use crate::autologistic::AutoParams;
use crate::bbox::BoundingBox;
use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::grid::{Dims, PixelGrid};
use crate::rng;
use crate::sar::{sample_sar, SarParams};

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 96;

/// Learned target model reported for the thermal benchmark.
pub fn paper_target() -> SarParams {
    SarParams::new(117.4, 2.11, [0.044, 0.443, 0.479, 0.068]).unwrap()
}

/// Learned background model reported for the thermal benchmark.
pub fn paper_background() -> SarParams {
    SarParams::new(86.53, 1.19, [0.016, 0.487, 0.483, 0.016]).unwrap()
}

/// Learned label prior reported for the thermal benchmark.
///
/// `gamma < 0` makes this prior repulsive: a target neighbor lowers the odds
/// of a target label.
pub fn paper_prior() -> AutoParams {
    AutoParams::new(9.54, -4.6924).unwrap()
}

/// Sampleable stand-in for [`paper_target`]: same mean and noise, coupling
/// scaled by 0.7.
pub fn desk_target() -> SarParams {
    SarParams::new(117.4, 2.11, [0.031, 0.310, 0.335, 0.048]).unwrap()
}

/// Sampleable stand-in for [`paper_background`], coupling scaled by 0.6.
pub fn desk_background() -> SarParams {
    SarParams::new(86.53, 1.19, [0.0096, 0.292, 0.290, 0.0096]).unwrap()
}

/// Rough, weakly coupled target used by the pole fixture.
pub fn pole_target() -> SarParams {
    SarParams::new(117.4, 2.0, [0.075; 4]).unwrap()
}

/// Background made of nearly independent, strongly coupled columns.
pub fn pole_background() -> SarParams {
    SarParams::new(86.53, 0.3, [0.495, 0.005, 0.005, 0.495]).unwrap()
}

/// Background texture raised to the target mean.
pub fn pole_look() -> SarParams {
    SarParams { mu: 117.4, ..pole_background() }
}

/// Mildly attractive label prior used with the synthetic fixtures.
pub fn fixture_prior() -> AutoParams {
    AutoParams::new(-2.0, 1.0).unwrap()
}

/// A patch rendered with its own parameters but not part of the truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distractor {
    pub bbox: BoundingBox,
    pub params: SarParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: SarParams,
    pub target: SarParams,
    pub boxes: Vec<BoundingBox>,
    pub distractors: Vec<Distractor>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, background: SarParams, target: SarParams, seed: u64) -> Self {
        Self {
            width,
            height,
            background,
            target,
            boxes: Vec::new(),
            distractors: Vec::new(),
            seed,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    /// Boxes must lie inside the frame and not overlap each other, targets
    /// and distractors alike.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid("scene size must be positive".into()));
        }
        self.background.validate()?;
        self.target.validate()?;
        let dims = self.dims();
        let all: Vec<&BoundingBox> = self.boxes.iter().chain(self.distractors.iter().map(|d| &d.bbox)).collect();
        for (i, b) in all.iter().enumerate() {
            if !b.inside(dims) {
                return Err(Error::OutOfBounds(format!(
                    "box ({}, {}, {}, {}) outside {}x{} scene",
                    b.x0, b.y0, b.w, b.h, self.width, self.height
                )));
            }
            if all[..i].iter().any(|o| o.intersection_area(b) > 0) {
                return Err(Error::InvalidParameter(format!(
                    "box ({}, {}, {}, {}) overlaps another box",
                    b.x0, b.y0, b.w, b.h
                )));
            }
        }
        for d in &self.distractors {
            d.params.validate()?;
        }
        Ok(())
    }
}

fn paste_patch(image: &mut PixelGrid, b: &BoundingBox, params: &SarParams, seed: u64) -> Result<()> {
    let patch = sample_sar(params, b.w as usize, b.h as usize, seed)?;
    image.paste(b.x0 as usize, b.y0 as usize, &patch)
}

/// Background field overwritten by a fresh target patch in every box.
pub fn render_scene(spec: &SceneSpec) -> Result<Frame> {
    spec.validate()?;
    let mut image = sample_sar(&spec.background, spec.width, spec.height, rng::derive_seed(spec.seed, 0))?;
    for (k, b) in spec.boxes.iter().enumerate() {
        paste_patch(&mut image, b, &spec.target, rng::derive_seed(spec.seed, 1 + k as u64))?;
    }
    let offset = 1 + spec.boxes.len() as u64;
    for (k, d) in spec.distractors.iter().enumerate() {
        paste_patch(&mut image, &d.bbox, &d.params, rng::derive_seed(spec.seed, offset + k as u64))?;
    }
    Frame::new(image, spec.boxes.clone())
}

/// `frames` scenes in which the target boxes move by `motion` pixels per
/// frame while every distractor stays put. Each frame gets fresh noise.
///
/// A static distractor is also given by `distractor`, rendered with the
/// target parameters.
pub fn render_sequence(
    spec: &SceneSpec,
    frames: usize,
    motion: (i64, i64),
    distractor: Option<BoundingBox>,
) -> Result<Vec<Frame>> {
    if frames == 0 {
        return Err(Error::InvalidParameter("sequence needs at least one frame".into()));
    }
    let mut base = spec.clone();
    if let Some(bbox) = distractor {
        base.distractors.push(Distractor {
            bbox,
            params: spec.target,
        });
    }
    let specs: Vec<SceneSpec> = (0..frames)
        .map(|t| {
            let step = t as i64;
            SceneSpec {
                boxes: base.boxes.iter().map(|b| b.translated(motion.0 * step, motion.1 * step)).collect(),
                seed: if t == 0 { base.seed } else { rng::derive_seed(base.seed, 1 << 32 | t as u64) },
                ..base.clone()
            }
        })
        .collect();
    for (t, s) in specs.iter().enumerate() {
        s.validate().map_err(|e| match e {
            Error::OutOfBounds(m) => Error::OutOfBounds(format!("frame {t}: {m}")),
            other => other,
        })?;
    }
    crate::par::Execution::default()
        .map(0..frames, |t| render_scene(&specs[t]))
        .into_iter()
        .collect()
}

/// Place `sizes.len()` boxes uniformly at random, keeping `gap` pixels
/// between any two of them (and clear of `avoid`).
pub fn place_boxes(
    dims: Dims,
    sizes: &[(u32, u32)],
    gap: i64,
    avoid: &[BoundingBox],
    rng: &mut rng::Rng,
) -> Result<Vec<BoundingBox>> {
    let mut placed: Vec<BoundingBox> = Vec::new();
    for &(w, h) in sizes {
        if w as usize > dims.width || h as usize > dims.height {
            return Err(Error::OutOfBounds(format!("{w}x{h} box does not fit")));
        }
        let mut ok = false;
        for _ in 0..10_000 {
            let b = BoundingBox::new(
                rng.random_range(0..=(dims.width - w as usize)) as i64,
                rng.random_range(0..=(dims.height - h as usize)) as i64,
                w,
                h,
            );
            let padded = BoundingBox::new(b.x0 - gap, b.y0 - gap, w + 2 * gap as u32, h + 2 * gap as u32);
            if placed.iter().chain(avoid).all(|o| o.intersection_area(&padded) == 0) {
                placed.push(b);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::InvalidParameter("could not place boxes without overlap".into()));
        }
    }
    Ok(placed)
}

/// Planted-blob dataset: `frames` independent scenes with `per_frame` target
/// boxes each.
pub fn planted_blobs(
    frames: usize,
    per_frame: usize,
    background: SarParams,
    target: SarParams,
    seed: u64,
) -> Result<Vec<Frame>> {
    let mut specs = Vec::with_capacity(frames);
    for f in 0..frames {
        let frame_seed = rng::derive_seed(seed, f as u64);
        let mut rng = rng::seeded(frame_seed);
        let sizes: Vec<(u32, u32)> = (0..per_frame)
            .map(|_| (rng.random_range(10..=16), rng.random_range(8..=14)))
            .collect();
        let mut spec = SceneSpec::new(DEFAULT_WIDTH, DEFAULT_HEIGHT, background, target, frame_seed);
        spec.boxes = place_boxes(spec.dims(), &sizes, 4, &[], &mut rng)?;
        specs.push(spec);
    }
    render_all(&specs)
}

/// Planted targets plus full-height poles of width `pole_width` rendered
/// with `look`. Poles run top to bottom, so under a column-coupled
/// background model only their two image-border rows break the texture.
#[allow(clippy::too_many_arguments)]
pub fn pole_distractors(
    frames: usize,
    per_frame: usize,
    poles: usize,
    pole_width: u32,
    background: SarParams,
    target: SarParams,
    look: SarParams,
    seed: u64,
) -> Result<Vec<Frame>> {
    let width = DEFAULT_WIDTH as i64;
    let spacing = pole_width as i64 + 8;
    if pole_width == 0 || poles as i64 * spacing > width {
        return Err(Error::InvalidParameter(format!("{poles} poles of width {pole_width} do not fit")));
    }
    let mut specs = Vec::with_capacity(frames);
    for f in 0..frames {
        let frame_seed = rng::derive_seed(seed, f as u64);
        let mut rng = rng::seeded(frame_seed);
        let mut bars: Vec<BoundingBox> = Vec::with_capacity(poles);
        for _ in 0..10_000 {
            if bars.len() == poles {
                break;
            }
            let x = rng.random_range(0..=width - pole_width as i64);
            if bars.iter().all(|b| (b.x0 - x).abs() >= spacing) {
                bars.push(BoundingBox::new(x, 0, pole_width, DEFAULT_HEIGHT as u32));
            }
        }
        if bars.len() < poles {
            return Err(Error::InvalidParameter("could not place poles".into()));
        }
        let avoid: Vec<_> = bars
            .iter()
            .map(|b| BoundingBox::new(b.x0 - 2, 0, b.w + 4, b.h))
            .collect();
        let sizes: Vec<(u32, u32)> = (0..per_frame)
            .map(|_| (rng.random_range(10..=16), rng.random_range(8..=14)))
            .collect();
        let mut spec = SceneSpec::new(DEFAULT_WIDTH, DEFAULT_HEIGHT, background, target, frame_seed);
        spec.boxes = place_boxes(spec.dims(), &sizes, 4, &avoid, &mut rng)?;
        spec.distractors = bars.into_iter().map(|bbox| Distractor { bbox, params: look }).collect();
        specs.push(spec);
    }
    render_all(&specs)
}

pub const SEQUENCE_WIDTH: usize = 320;
pub const SEQUENCE_HEIGHT: usize = 64;

/// A 12x10 target crossing a 320x64 scene at 14 px per frame, optionally
/// with a static distractor in the lower half rendered with target texture.
/// The step is wider than the target so consecutive positions never overlap.
pub fn moving_target_sequence(frames: usize, distractor: bool, background: SarParams, target: SarParams, seed: u64) -> Result<Vec<Frame>> {
    let mut spec = SceneSpec::new(SEQUENCE_WIDTH, SEQUENCE_HEIGHT, background, target, seed);
    spec.boxes = vec![BoundingBox::new(4, 8, 12, 10)];
    let static_box = distractor.then(|| BoundingBox::new(150, 40, 14, 12));
    render_sequence(&spec, frames, (14, 1), static_box)
}

fn render_all(specs: &[SceneSpec]) -> Result<Vec<Frame>> {
    crate::par::Execution::default()
        .map(0..specs.len(), |i| render_scene(&specs[i]))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SceneSpec {
        SceneSpec::new(48, 32, desk_background(), desk_target(), 11)
    }

    #[test]
    fn zero_boxes_is_pure_background() {
        let s = spec();
        let f = render_scene(&s).unwrap();
        assert!(f.truth.is_empty());
        assert_eq!(f.image, sample_sar(&s.background, 48, 32, rng::derive_seed(11, 0)).unwrap());
    }

    #[test]
    fn box_region_is_the_target_patch() {
        let mut s = spec();
        s.boxes.push(BoundingBox::new(5, 6, 20, 12));
        let f = render_scene(&s).unwrap();
        let patch = sample_sar(&s.target, 20, 12, rng::derive_seed(11, 1)).unwrap();
        assert_eq!(f.image.crop(5, 6, 20, 12).unwrap(), patch);
        assert_eq!(f.truth, s.boxes);
        // untouched outside the box
        let bg = sample_sar(&s.background, 48, 32, rng::derive_seed(11, 0)).unwrap();
        assert_eq!(f.image.at(4, 6), bg.at(4, 6));
        assert_eq!(f.image.at(25, 17), bg.at(25, 17));
    }

    #[test]
    fn paper_means_separate_inside_and_outside() {
        let mut s = SceneSpec::new(64, 48, paper_background(), paper_target(), 3);
        s.boxes.push(BoundingBox::new(20, 10, 12, 20));
        let f = render_scene(&s).unwrap();
        let inside = f.image.crop(20, 10, 12, 20).unwrap().mean();
        let n = f.image.values().len() as f64;
        let outside = (f.image.mean() * n - inside * 240.0) / (n - 240.0);
        assert!(inside > outside, "{inside} vs {outside}");
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec();
        s.boxes.push(BoundingBox::new(40, 0, 10, 5));
        assert!(matches!(render_scene(&s), Err(Error::OutOfBounds(_))));
        let mut s = spec();
        s.boxes = vec![BoundingBox::new(0, 0, 10, 10), BoundingBox::new(5, 5, 10, 10)];
        assert!(render_scene(&s).is_err());
    }

    #[test]
    fn sequence_motion_and_distractor() {
        let mut s = spec();
        s.boxes.push(BoundingBox::new(0, 2, 6, 6));
        let d = BoundingBox::new(30, 20, 8, 8);
        let frames = render_sequence(&s, 4, (7, 0), Some(d)).unwrap();
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.truth, vec![BoundingBox::new(7 * t as i64, 2, 6, 6)]);
        }
        // fresh noise each frame
        assert_ne!(frames[1].image.crop(30, 20, 8, 8).unwrap(), frames[2].image.crop(30, 20, 8, 8).unwrap());
        assert!(matches!(render_sequence(&s, 8, (7, 0), None), Err(Error::OutOfBounds(_))));
        let single = render_sequence(&s, 1, (7, 0), None).unwrap();
        assert_eq!(single[0], render_scene(&s).unwrap());
    }

    #[test]
    fn deterministic() {
        let a = planted_blobs(3, 2, desk_background(), desk_target(), 5).unwrap();
        let b = planted_blobs(3, 2, desk_background(), desk_target(), 5).unwrap();
        assert_eq!(a, b);
        for f in &a {
            assert_eq!(f.truth.len(), 2);
            assert!(box_gap(&f.truth[0], &f.truth[1]) >= 4);
        }
    }

    fn box_gap(a: &BoundingBox, b: &BoundingBox) -> i64 {
        let dx = (b.x0 - a.x1()).max(a.x0 - b.x1());
        let dy = (b.y0 - a.y1()).max(a.y0 - b.y1());
        dx.max(dy)
    }

    #[test]
    fn moving_sequence_fits_twenty_frames() {
        let f = moving_target_sequence(20, true, desk_background(), desk_target(), 3).unwrap();
        assert_eq!(f.len(), 20);
        assert_eq!(f[19].truth[0], BoundingBox::new(4 + 14 * 19, 8 + 19, 12, 10));
        assert!(moving_target_sequence(22, false, desk_background(), desk_target(), 3).is_ok());
        assert!(moving_target_sequence(23, false, desk_background(), desk_target(), 3).is_err());
    }

    #[test]
    fn distractors_are_not_truth() {
        let f = pole_distractors(2, 1, 3, 3, pole_background(), pole_target(), pole_look(), 9).unwrap();
        assert!(f.iter().all(|f| f.truth.len() == 1));
    }
}
