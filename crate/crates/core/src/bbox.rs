use crate::grid::Dims;

/// Axis-aligned pixel box. `score` is NaN for unscored boxes (ground truth).
#[derive(Clone, Copy, Debug)]
pub struct BoundingBox {
    pub x0: i64,
    pub y0: i64,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

impl BoundingBox {
    /// Unscored box; zero extents are bumped to 1.
    pub fn new(x0: i64, y0: i64, w: u32, h: u32) -> Self {
        Self {
            x0,
            y0,
            w: w.max(1),
            h: h.max(1),
            score: f64::NAN,
        }
    }

    pub fn scored(x0: i64, y0: i64, w: u32, h: u32, score: f64) -> Self {
        Self {
            score,
            ..Self::new(x0, y0, w, h)
        }
    }

    pub fn x1(&self) -> i64 {
        self.x0 + self.w as i64
    }

    pub fn y1(&self) -> i64 {
        self.y0 + self.h as i64
    }

    pub fn area(&self) -> i64 {
        self.w as i64 * self.h as i64
    }

    /// Continuous center `(x0 + w/2, y0 + h/2)`.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + self.w as f64 / 2.0,
            self.y0 as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        Self {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> i64 {
        let ix = (self.x1().min(other.x1()) - self.x0.max(other.x0)).max(0);
        let iy = (self.y1().min(other.y1()) - self.y0.max(other.y0)).max(0);
        ix * iy
    }

    pub fn inside(&self, dims: Dims) -> bool {
        self.x0 >= 0
            && self.y0 >= 0
            && self.x1() <= dims.width as i64
            && self.y1() <= dims.height as i64
    }

    /// Clip to the grid; returns `(x0, y0, x1, y1)` or `None` if nothing is left.
    pub fn clip_to(&self, dims: Dims) -> Option<(usize, usize, usize, usize)> {
        let x0 = self.x0.max(0);
        let y0 = self.y0.max(0);
        let x1 = self.x1().min(dims.width as i64);
        let y1 = self.y1().min(dims.height as i64);
        (x1 > x0 && y1 > y0).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    /// Geometry equality, ignoring the score.
    pub fn same_geometry(&self, other: &BoundingBox) -> bool {
        self.x0 == other.x0 && self.y0 == other.y0 && self.w == other.w && self.h == other.h
    }
}

impl PartialEq for BoundingBox {
    fn eq(&self, other: &Self) -> bool {
        self.same_geometry(other)
            && (self.score == other.score || (self.score.is_nan() && other.score.is_nan()))
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn box_overlap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_boxes_overlap_fully() {
        let a = BoundingBox::new(0, 0, 10, 10);
        assert_eq!(box_overlap(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_boxes_do_not_overlap() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(20, 20, 5, 5);
        assert_eq!(box_overlap(&a, &b), 0.0);
    }

    #[test]
    fn half_shifted_box_has_one_third_iou() {
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(5, 0, 10, 10);
        assert!((box_overlap(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = BoundingBox::new(0, 0, 4, 4);
        let b = BoundingBox::new(4, 0, 4, 4);
        assert_eq!(box_overlap(&a, &b), 0.0);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-5i64..20, -5i64..20, 1u32..12, 1u32..12).prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = box_overlap(&a, &b);
            prop_assert_eq!(ab, box_overlap(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a.same_geometry(&b));
        }
    }
}
