//! Kernel density background model over a sliding window of frames.
//!
//! The background probability of a pixel is the mean Gaussian kernel between
//! its current value and its last `T` values. Kernels are not
//! density-normalized, so 1.0 means "identical to every stored frame".

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::{Dims, LabelGrid, PixelGrid};
use crate::par::Execution;

pub const DEFAULT_HISTORY: usize = 50;
pub const DEFAULT_SIGMA: f64 = 5.0;
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct KdeModel {
    history_len: usize,
    sigma: f64,
    dims: Option<Dims>,
    frames: VecDeque<PixelGrid>,
}

impl KdeModel {
    pub fn new(history_len: usize, sigma: f64) -> Result<Self> {
        if history_len == 0 {
            return Err(Error::InvalidParameter("KDE history length must be >= 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("KDE bandwidth must be positive, got {sigma}")));
        }
        Ok(Self {
            history_len,
            sigma,
            dims: None,
            frames: VecDeque::with_capacity(history_len),
        })
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Frames currently stored.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Append a frame, evicting the oldest once `T` are stored.
    pub fn update(&mut self, frame: &PixelGrid) -> Result<()> {
        match self.dims {
            Some(d) => d.expect_same(frame.dims())?,
            None => self.dims = Some(frame.dims()),
        }
        if self.frames.len() == self.history_len {
            self.frames.pop_front();
        }
        self.frames.push_back(frame.clone());
        Ok(())
    }

    pub fn background_prob(&self, frame: &PixelGrid) -> Result<PixelGrid> {
        self.background_prob_with(frame, Execution::default())
    }

    pub fn background_prob_with(&self, frame: &PixelGrid, exec: Execution) -> Result<PixelGrid> {
        let dims = self.dims.ok_or(Error::EmptyHistory)?;
        dims.expect_same(frame.dims())?;
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let norm = 1.0 / self.frames.len() as f64;
        let mut out = vec![0.0; dims.len()];
        exec.for_each_row(&mut out, dims.width, |r, row| {
            let base = r * dims.width;
            let cur = &frame.values()[base..base + dims.width];
            for past in &self.frames {
                let old = &past.values()[base..base + dims.width];
                for ((o, &y), &p) in row.iter_mut().zip(cur).zip(old) {
                    let d = y - p;
                    *o += (-d * d * inv).exp();
                }
            }
            row.iter_mut().for_each(|o| *o *= norm);
        });
        PixelGrid::new(dims.width, dims.height, out)
    }
}

/// Foreground (1) where the background probability is below `tau`.
pub fn foreground_mask(prob: &PixelGrid, tau: f64) -> LabelGrid {
    let labels = prob.values().iter().map(|&p| (p < tau) as u8).collect();
    LabelGrid::from_parts(prob.dims(), labels)
}

/// Pixelwise AND of two label grids.
pub fn fuse_and(mrf_labels: &LabelGrid, fg_mask: &LabelGrid) -> Result<LabelGrid> {
    mrf_labels.dims().expect_same(fg_mask.dims())?;
    let labels = mrf_labels
        .labels()
        .iter()
        .zip(fg_mask.labels())
        .map(|(a, b)| a & b)
        .collect();
    Ok(LabelGrid::from_parts(mrf_labels.dims(), labels))
}

/// Foreground masks for a sequence, scoring each frame against the frames
/// before it. The first frame has no history and gets an all-foreground mask.
pub fn sequence_masks(frames: &[PixelGrid], history_len: usize, sigma: f64, tau: f64, exec: Execution) -> Result<Vec<LabelGrid>> {
    let mut model = KdeModel::new(history_len, sigma)?;
    let mut masks = Vec::with_capacity(frames.len());
    for f in frames {
        let mask = if model.is_empty() {
            LabelGrid::ones(f.width(), f.height())?
        } else {
            foreground_mask(&model.background_prob_with(f, exec)?, tau)
        };
        masks.push(mask);
        model.update(f)?;
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat(v: f64) -> PixelGrid {
        PixelGrid::filled(4, 3, v).unwrap()
    }

    #[test]
    fn hand_evaluated_two_frame_history() {
        let mut m = KdeModel::new(2, 2.0).unwrap();
        m.update(&flat(100.0)).unwrap();
        m.update(&flat(104.0)).unwrap();
        let p = m.background_prob(&flat(100.0)).unwrap();
        for &v in p.values() {
            assert_abs_diff_eq!(v, 0.5 * (1.0 + (-2.0f64).exp()), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p.get(0), 0.5677, epsilon = 1e-4);
    }

    #[test]
    fn identical_and_distant_values() {
        let mut m = KdeModel::new(5, 5.0).unwrap();
        for _ in 0..5 {
            m.update(&flat(40.0)).unwrap();
        }
        assert!(m.background_prob(&flat(40.0)).unwrap().values().iter().all(|&v| v == 1.0));
        assert!(m.background_prob(&flat(400.0)).unwrap().values().iter().all(|&v| v < 1e-100));
    }

    #[test]
    fn ring_buffer_keeps_last_frames() {
        let mut m = KdeModel::new(3, 1.0).unwrap();
        for k in 0..4 {
            m.update(&flat(k as f64 * 100.0)).unwrap();
        }
        assert_eq!(m.len(), 3);
        // the first frame (0.0) has been evicted
        let p = m.background_prob(&flat(0.0)).unwrap();
        assert!(p.get(0) < 1e-100);
        let p = m.background_prob(&flat(300.0)).unwrap();
        assert_abs_diff_eq!(p.get(0), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn history_order_does_not_matter() {
        let frames: Vec<PixelGrid> = (0..4)
            .map(|k| PixelGrid::new(2, 2, vec![k as f64, 2.0 * k as f64, 1.0, -(k as f64)]).unwrap())
            .collect();
        let cur = PixelGrid::new(2, 2, vec![1.5, 2.5, 0.0, -1.0]).unwrap();
        let mut fwd = KdeModel::new(4, 1.5).unwrap();
        let mut rev = KdeModel::new(4, 1.5).unwrap();
        frames.iter().for_each(|f| fwd.update(f).unwrap());
        frames.iter().rev().for_each(|f| rev.update(f).unwrap());
        let (a, b) = (fwd.background_prob(&cur).unwrap(), rev.background_prob(&cur).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn errors() {
        assert!(KdeModel::new(0, 1.0).is_err());
        assert!(KdeModel::new(3, 0.0).is_err());
        let mut m = KdeModel::new(3, 1.0).unwrap();
        assert!(matches!(m.background_prob(&flat(1.0)), Err(Error::EmptyHistory)));
        m.update(&flat(1.0)).unwrap();
        assert!(m.update(&PixelGrid::filled(3, 3, 1.0).unwrap()).is_err());
        assert!(fuse_and(&LabelGrid::zeros(2, 2).unwrap(), &LabelGrid::zeros(3, 2).unwrap()).is_err());
    }

    #[test]
    fn mask_and_fusion() {
        let prob = PixelGrid::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(foreground_mask(&prob, 0.0).count_ones(), 0);
        assert_eq!(foreground_mask(&prob, 1.0).labels(), &[1, 1, 0]);
        let mrf = LabelGrid::new(3, 1, vec![1, 0, 1]).unwrap();
        assert_eq!(fuse_and(&mrf, &LabelGrid::ones(3, 1).unwrap()).unwrap(), mrf);
        assert_eq!(fuse_and(&mrf, &LabelGrid::zeros(3, 1).unwrap()).unwrap().count_ones(), 0);
        assert_eq!(fuse_and(&mrf, &foreground_mask(&prob, 0.7)).unwrap().labels(), &[1, 0, 0]);
    }

    #[test]
    fn sequence_masks_flag_changes_only() {
        let base = PixelGrid::filled(4, 3, 10.0).unwrap();
        let mut moved = base.clone();
        moved.paste(1, 1, &PixelGrid::filled(1, 1, 60.0).unwrap()).unwrap();
        let masks = sequence_masks(&[base.clone(), base, moved], 5, 5.0, 0.05, Execution::Sequential).unwrap();
        assert_eq!(masks[0].count_ones(), 12);
        assert_eq!(masks[1].count_ones(), 0);
        assert_eq!(masks[2].labels().iter().position(|&l| l == 1), Some(5));
        assert_eq!(masks[2].count_ones(), 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut m = KdeModel::new(4, 3.0).unwrap();
        for k in 0..4 {
            m.update(&PixelGrid::new(5, 7, (0..35).map(|i| ((i * k) % 11) as f64).collect()).unwrap()).unwrap();
        }
        let cur = PixelGrid::new(5, 7, (0..35).map(|i| (i % 7) as f64).collect()).unwrap();
        assert_eq!(
            m.background_prob_with(&cur, Execution::Sequential).unwrap(),
            m.background_prob_with(&cur, Execution::Parallel).unwrap()
        );
    }
}
