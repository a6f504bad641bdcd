//! Row-major grid containers and the 4-connected neighborhood shared by the
//! intensity and label models.

use crate::error::{Error, Result};

/// Width and height of a grid, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.width, site / self.width)
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn expect_same(&self, other: Dims) -> Result<()> {
        if *self != other {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                got: (other.width, other.height),
            });
        }
        Ok(())
    }
}

/// One of the four first-order neighbor slots.
///
/// The discriminant order (up, left, right, down) is also the layout of every
/// per-direction array in the crate, e.g. the SAR regression coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up = 0,
    Left = 1,
    Right = 2,
    Down = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Left,
        Direction::Right,
        Direction::Down,
    ];

    #[inline]
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// `(dx, dy)` step towards the neighbor in this slot.
    #[inline]
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::Up => (0, -1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Down => "down",
        }
    }
}

/// The fixed first-order (4-connected) neighborhood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Neighborhood;

impl Neighborhood {
    pub const OFFSETS: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

    /// Index of the neighbor of `site` in direction `dir`, if in bounds.
    #[inline]
    pub fn neighbor(dims: Dims, site: usize, dir: Direction) -> Option<usize> {
        let (x, y) = dims.coords(site);
        match dir {
            Direction::Up => (y > 0).then(|| site - dims.width),
            Direction::Left => (x > 0).then(|| site - 1),
            Direction::Right => (x + 1 < dims.width).then(|| site + 1),
            Direction::Down => (y + 1 < dims.height).then(|| site + dims.width),
        }
    }

    /// In-bounds neighbors of `site`, tagged with their direction slot and
    /// listed in slot order. Boundary sites simply have fewer entries.
    pub fn neighbors(dims: Dims, site: usize) -> Vec<(Direction, usize)> {
        debug_assert!(site < dims.len());
        Direction::ALL
            .iter()
            .filter_map(|&d| Self::neighbor(dims, site, d).map(|j| (d, j)))
            .collect()
    }

    /// Per-slot neighbor indices of `site` (`None` outside the grid).
    #[inline]
    pub fn slots(dims: Dims, site: usize) -> [Option<usize>; 4] {
        Direction::ALL.map(|d| Self::neighbor(dims, site, d))
    }
}

/// Free-function form of [`Neighborhood::neighbors`].
pub fn neighbors(dims: Dims, site: usize) -> Vec<(Direction, usize)> {
    Neighborhood::neighbors(dims, site)
}

/// Per-direction neighbor intensities; `None` where the neighbor is missing.
pub type NeighborValues = [Option<f64>; 4];

/// A 2-D field of finite real intensities, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    dims: Dims,
    values: Vec<f64>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(width, height);
        dims.check()?;
        if values.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {}x{}, got {}",
                dims.len(),
                width,
                height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value {} at site {i}",
                values[i]
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[self.dims.index(x, y)]
    }

    #[inline]
    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// Neighbor intensities of `site` in slot order.
    #[inline]
    pub fn neighbor_values(&self, site: usize) -> NeighborValues {
        Neighborhood::slots(self.dims, site).map(|j| j.map(|j| self.values[j]))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Copy out the sub-grid `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<PixelGrid> {
        if x0 + w > self.width() || y0 + h > self.height() {
            return Err(Error::OutOfBounds(format!(
                "crop {x0},{y0},{w},{h} outside {}x{}",
                self.width(),
                self.height()
            )));
        }
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = self.dims.index(x0, y);
            out.extend_from_slice(&self.values[row..row + w]);
        }
        PixelGrid::new(w, h, out)
    }

    /// Overwrite the region starting at `(x0, y0)` with `patch`.
    pub fn paste(&mut self, x0: usize, y0: usize, patch: &PixelGrid) -> Result<()> {
        if x0 + patch.width() > self.width() || y0 + patch.height() > self.height() {
            return Err(Error::OutOfBounds(format!(
                "patch {}x{} at {x0},{y0} outside {}x{}",
                patch.width(),
                patch.height(),
                self.width(),
                self.height()
            )));
        }
        for py in 0..patch.height() {
            let dst = self.dims.index(x0, y0 + py);
            let src = py * patch.width();
            self.values[dst..dst + patch.width()]
                .copy_from_slice(&patch.values[src..src + patch.width()]);
        }
        Ok(())
    }
}

/// A 2-D field of binary labels; 1 marks a target pixel, 0 background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelGrid {
    dims: Dims,
    labels: Vec<u8>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        let dims = Dims::new(width, height);
        dims.check()?;
        if labels.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} labels for {}x{}, got {}",
                dims.len(),
                width,
                height,
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::InvalidGrid(format!(
                "label {} at site {i} is not binary",
                labels[i]
            )));
        }
        Ok(Self { dims, labels })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![1; width * height])
    }

    pub(crate) fn from_parts(dims: Dims, labels: Vec<u8>) -> Self {
        debug_assert_eq!(dims.len(), labels.len());
        debug_assert!(labels.iter().all(|&l| l <= 1));
        Self { dims, labels }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, site: usize) -> u8 {
        self.labels[site]
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.labels[self.dims.index(x, y)]
    }

    /// Set one site; `label` must be 0 or 1.
    #[inline]
    pub fn set(&mut self, site: usize, label: u8) {
        assert!(label <= 1, "label must be binary");
        self.labels[site] = label;
    }

    /// Number of target-labeled in-bounds neighbors of `site`.
    #[inline]
    pub fn neighbor_sum(&self, site: usize) -> u32 {
        Neighborhood::slots(self.dims, site)
            .iter()
            .flatten()
            .map(|&j| self.labels[j] as u32)
            .sum()
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Rasterize boxes into a label grid (1 inside any box).
    pub fn from_boxes(dims: Dims, boxes: &[crate::bbox::BoundingBox]) -> Result<Self> {
        let mut grid = Self::zeros(dims.width, dims.height)?;
        for b in boxes {
            let (x0, y0, x1, y1) = b.clip_to(dims).ok_or_else(|| {
                Error::OutOfBounds(format!("box {b:?} outside {}x{}", dims.width, dims.height))
            })?;
            for y in y0..y1 {
                for x in x0..x1 {
                    grid.labels[dims.index(x, y)] = 1;
                }
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_site_has_four_neighbors_in_slot_order() {
        let d = Dims::new(3, 3);
        assert_eq!(
            neighbors(d, 4),
            vec![
                (Direction::Up, 1),
                (Direction::Left, 3),
                (Direction::Right, 5),
                (Direction::Down, 7)
            ]
        );
    }

    #[test]
    fn corner_site_has_two_neighbors() {
        let d = Dims::new(3, 3);
        assert_eq!(
            neighbors(d, 0),
            vec![(Direction::Right, 1), (Direction::Down, 3)]
        );
    }

    #[test]
    fn single_pixel_grid_has_no_neighbors() {
        assert!(neighbors(Dims::new(1, 1), 0).is_empty());
    }

    #[test]
    fn grids_reject_bad_shapes() {
        assert!(PixelGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(PixelGrid::new(0, 2, vec![]).is_err());
        assert!(PixelGrid::new(1, 1, vec![f64::NAN]).is_err());
        assert!(LabelGrid::new(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let g = PixelGrid::new(4, 3, (0..12).map(f64::from).collect()).unwrap();
        let c = g.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.values(), &[5.0, 6.0, 9.0, 10.0]);
        let mut z = PixelGrid::filled(4, 3, 0.0).unwrap();
        z.paste(1, 1, &c).unwrap();
        assert_eq!(z.at(2, 2), 10.0);
        assert_eq!(z.at(0, 0), 0.0);
        assert!(z.paste(3, 2, &c).is_err());
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric(w in 1usize..8, h in 1usize..8, seed in 0usize..64) {
            let d = Dims::new(w, h);
            let i = seed % d.len();
            for (dir, j) in neighbors(d, i) {
                let back = neighbors(d, j);
                prop_assert!(back.contains(&(dir.opposite(), i)));
            }
        }
    }
}
