//! From ratio maps to scored boxes, and from boxes to ROC points.
//!
//! Pipeline per frame and threshold: binarize `ln ρ > δ`, label 8-connected
//! components, keep those with at least `min_area` pixels as tight boxes
//! scored by their peak `ln ρ`, merge boxes overlapping by IoU ≥ 0.5, then
//! match greedily against ground truth at IoU ≥ 0.3 (each truth box can be
//! hit once).

use std::fmt::Write as _;
use std::path::Path;

use crate::bbox::{box_overlap, BoundingBox};
use crate::error::{Error, Result};
use crate::grid::{Dims, LabelGrid};
use crate::icm::RatioMap;
use crate::par::Execution;

pub const DEFAULT_MIN_AREA: usize = 4;
pub const MERGE_IOU: f64 = 0.5;
pub const HIT_IOU: f64 = 0.3;
pub const DEFAULT_LADDER_LEN: usize = 21;

/// Scored components of `ln ρ > delta`.
pub fn extract_components(rho: &RatioMap, delta: f64, min_area: usize) -> Vec<BoundingBox> {
    extract_masked(rho, delta, None, min_area)
}

/// Like [`extract_components`], restricted to sites where `mask` is 1.
pub fn extract_masked(rho: &RatioMap, delta: f64, mask: Option<&LabelGrid>, min_area: usize) -> Vec<BoundingBox> {
    let dims = rho.dims();
    let on: Vec<bool> = (0..dims.len())
        .map(|i| rho.get(i) > delta && mask.is_none_or(|m| m.get(i) == 1))
        .collect();
    label_components(dims, &on, min_area, |i| rho.get(i))
}

/// Components of a binary grid. Boxes are scored by peak `ln ρ` when a ratio
/// map is given, otherwise left unscored.
pub fn components_from_mask(mask: &LabelGrid, rho: Option<&RatioMap>, min_area: usize) -> Result<Vec<BoundingBox>> {
    if let Some(r) = rho {
        mask.dims().expect_same(r.dims())?;
    }
    let on: Vec<bool> = mask.labels().iter().map(|&l| l == 1).collect();
    Ok(label_components(mask.dims(), &on, min_area, |i| {
        rho.map_or(f64::NAN, |r| r.get(i))
    }))
}

fn label_components(dims: Dims, on: &[bool], min_area: usize, score: impl Fn(usize) -> f64) -> Vec<BoundingBox> {
    let (w, h) = (dims.width as isize, dims.height as isize);
    let mut seen = vec![false; on.len()];
    let mut stack = Vec::new();
    let mut boxes = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        let mut peak = f64::NAN;
        while let Some(i) = stack.pop() {
            let (x, y) = dims.coords(i);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            area += 1;
            peak = peak.max(score(i));
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = dims.index(nx as usize, ny as usize);
                    if on[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if area >= min_area {
            boxes.push(BoundingBox::scored(
                x0 as i64,
                y0 as i64,
                (x1 - x0 + 1) as u32,
                (y1 - y0 + 1) as u32,
                peak,
            ));
        }
    }
    boxes
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merge boxes whose IoU reaches 0.5, transitively, until no pair qualifies.
///
/// A merged box sits at the mean of its members' centers with their mean
/// extents (rounded to whole pixels) and keeps the best score. Output order
/// follows the first member of each group.
pub fn merge_boxes(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    let mut current = boxes.to_vec();
    loop {
        let n = current.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut joined = false;
        for i in 0..n {
            for j in i + 1..n {
                if box_overlap(&current[i], &current[j]) >= MERGE_IOU {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                        joined = true;
                    }
                }
            }
        }
        if !joined {
            return current;
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let root = find(&mut parent, i);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push(i);
        }
        current = groups
            .iter()
            .map(|g| {
                if g.len() == 1 {
                    return current[g[0]];
                }
                let k = g.len() as f64;
                let (mut cx, mut cy, mut mw, mut mh) = (0.0, 0.0, 0.0, 0.0);
                let mut score = f64::NAN;
                for &i in g {
                    let b = &current[i];
                    let (x, y) = b.center();
                    cx += x / k;
                    cy += y / k;
                    mw += b.w as f64 / k;
                    mh += b.h as f64 / k;
                    score = score.max(b.score);
                }
                let (w, h) = (mw.round().max(1.0), mh.round().max(1.0));
                BoundingBox::scored(
                    (cx - w / 2.0).round() as i64,
                    (cy - h / 2.0).round() as i64,
                    w as u32,
                    h as u32,
                    score,
                )
            })
            .collect();
    }
}

/// Outcome of matching one frame's detections against its truth boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEval {
    pub detections: Vec<BoundingBox>,
    /// For each detection, the truth box it hit.
    pub matched: Vec<Option<usize>>,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// Greedy matching in descending score order; ties keep input order.
///
/// A detection hits the unmatched truth box it overlaps best at IoU >= 0.3.
/// Each truth box is hit at most once, so a second detection on it counts
/// as a false alarm.
pub fn evaluate_frame(detections: &[BoundingBox], truth: &[BoundingBox]) -> FrameEval {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (detections[a].score, detections[b].score);
        sb.partial_cmp(&sa).unwrap_or_else(|| sa.is_nan().cmp(&sb.is_nan()))
    });
    let mut taken = vec![false; truth.len()];
    let mut matched = vec![None; detections.len()];
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (t, tb) in truth.iter().enumerate() {
            if taken[t] {
                continue;
            }
            let iou = box_overlap(&detections[d], tb);
            if iou >= HIT_IOU && best.is_none_or(|(_, b)| iou > b) {
                best = Some((t, iou));
            }
        }
        if let Some((t, _)) = best {
            taken[t] = true;
            matched[d] = Some(t);
        }
    }
    let hits = matched.iter().flatten().count();
    FrameEval {
        detections: detections.to_vec(),
        matched,
        hits,
        misses: truth.len() - hits,
        false_alarms: detections.len() - hits,
    }
}

/// Strictly increasing `ln ρ` thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdLadder {
    deltas: Vec<f64>,
}

impl ThresholdLadder {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::EmptyInput("threshold ladder"));
        }
        if deltas.iter().any(|d| d.is_nan()) {
            return Err(Error::InvalidParameter("ladder thresholds must not be NaN".into()));
        }
        if deltas.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidParameter("ladder must be strictly increasing".into()));
        }
        Ok(Self { deltas })
    }

    /// `k` evenly spaced quantiles (including min and max) of the pooled
    /// values; repeated quantiles collapse, so the ladder may be shorter.
    pub fn quantiles<'a>(values: impl IntoIterator<Item = &'a f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput("threshold ladder"));
        }
        let mut v: Vec<f64> = values.into_iter().copied().collect();
        if v.is_empty() {
            return Err(Error::EmptyInput("ratio values"));
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut deltas: Vec<f64> = (0..k)
            .map(|j| {
                let pos = if k == 1 { 0.0 } else { j as f64 * (n - 1) as f64 / (k - 1) as f64 };
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
            })
            .collect();
        deltas.dedup();
        Self::new(deltas)
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub delta: f64,
    pub hit_rate: f64,
    pub fa_per_frame: f64,
    pub hits: usize,
    pub false_alarms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub points: Vec<RocPoint>,
    /// `frames[k][f]`: frame `f` evaluated at the `k`-th threshold.
    pub frames: Vec<Vec<FrameEval>>,
    pub truths: usize,
}

impl EvalReport {
    /// Best hit rate among points with at most `max_fa` false alarms per frame.
    pub fn hit_rate_at_fa(&self, max_fa: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.fa_per_frame <= max_fa)
            .map(|p| p.hit_rate)
            .reduce(f64::max)
    }

    /// Whether hit and false-alarm counts never rise along the ladder.
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|p| p[1].hits <= p[0].hits && p[1].false_alarms <= p[0].false_alarms)
    }

    /// `delta,hit_rate,fa_per_frame` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,hit_rate,fa_per_frame\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.delta, p.hit_rate, p.fa_per_frame);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One frame to evaluate: its ratio map, truth boxes and an optional mask
/// (e.g. a background-subtraction foreground mask) ANDed with the threshold.
#[derive(Clone, Copy, Debug)]
pub struct EvalFrame<'a> {
    pub rho: &'a RatioMap,
    pub truth: &'a [BoundingBox],
    pub mask: Option<&'a LabelGrid>,
}

/// Sweep the ladder over all frames. With no truth boxes at all, the hit rate
/// is reported as 1.
pub fn build_roc(
    frames: &[EvalFrame<'_>],
    ladder: &ThresholdLadder,
    min_area: usize,
    exec: Execution,
) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("evaluation frames"));
    }
    for f in frames {
        if let Some(m) = f.mask {
            f.rho.dims().expect_same(m.dims())?;
        }
    }
    let per_frame: Vec<Vec<FrameEval>> = exec.map(0..frames.len(), |i| {
        let f = &frames[i];
        ladder
            .deltas()
            .iter()
            .map(|&d| evaluate_frame(&merge_boxes(&extract_masked(f.rho, d, f.mask, min_area)), f.truth))
            .collect()
    });
    let truths: usize = frames.iter().map(|f| f.truth.len()).sum();
    let n = frames.len() as f64;
    let mut points = Vec::with_capacity(ladder.len());
    let mut by_delta = Vec::with_capacity(ladder.len());
    for (k, &delta) in ladder.deltas().iter().enumerate() {
        let evals: Vec<FrameEval> = per_frame.iter().map(|f| f[k].clone()).collect();
        let hits: usize = evals.iter().map(|e| e.hits).sum();
        let false_alarms: usize = evals.iter().map(|e| e.false_alarms).sum();
        points.push(RocPoint {
            delta,
            hit_rate: if truths == 0 { 1.0 } else { hits as f64 / truths as f64 },
            fa_per_frame: false_alarms as f64 / n,
            hits,
            false_alarms,
        });
        by_delta.push(evals);
    }
    Ok(EvalReport {
        points,
        frames: by_delta,
        truths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(w: usize, h: usize, hot: &[(usize, usize, f64)]) -> RatioMap {
        let mut v = vec![-5.0; w * h];
        for &(x, y, s) in hot {
            v[y * w + x] = s;
        }
        RatioMap::new(w, h, v).unwrap()
    }

    fn square(x0: usize, y0: usize, n: usize) -> Vec<(usize, usize, f64)> {
        (0..n * n).map(|i| (x0 + i % n, y0 + i / n, 1.0 + i as f64 * 0.01)).collect()
    }

    #[test]
    fn nothing_above_threshold() {
        assert!(extract_components(&map_with(8, 8, &[]), 0.0, 1).is_empty());
    }

    #[test]
    fn single_square_gives_tight_box() {
        let rho = map_with(30, 30, &square(10, 10, 5));
        let boxes = extract_components(&rho, 0.0, DEFAULT_MIN_AREA);
        assert_eq!(boxes.len(), 1);
        assert!(boxes[0].same_geometry(&BoundingBox::new(10, 10, 5, 5)));
        assert_eq!(boxes[0].score, 1.24);
    }

    #[test]
    fn diagonal_contact_joins_components() {
        let mut hot = square(2, 2, 2);
        hot.extend(square(4, 4, 2));
        let boxes = extract_components(&map_with(10, 10, &hot), 0.0, 1);
        assert_eq!(boxes.len(), 1);
        assert!(boxes[0].same_geometry(&BoundingBox::new(2, 2, 4, 4)));
    }

    #[test]
    fn small_components_are_dropped() {
        let mut hot = square(0, 0, 1);
        hot.extend(square(5, 5, 2));
        let boxes = extract_components(&map_with(10, 10, &hot), 0.0, 4);
        assert_eq!(boxes.len(), 1);
        assert_eq!(extract_components(&map_with(10, 10, &hot), 0.0, 1).len(), 2);
    }

    #[test]
    fn mask_restricts_components() {
        let rho = map_with(10, 10, &square(0, 0, 4));
        let mut mask = LabelGrid::zeros(10, 10).unwrap();
        for y in 0..4 {
            mask.set(y * 10, 1);
            mask.set(y * 10 + 1, 1);
        }
        let boxes = extract_masked(&rho, 0.0, Some(&mask), 1);
        assert_eq!(boxes.len(), 1);
        assert!(boxes[0].same_geometry(&BoundingBox::new(0, 0, 2, 4)));
        let unscored = components_from_mask(&mask, None, 1).unwrap();
        assert!(unscored[0].score.is_nan());
    }

    #[test]
    fn merge_examples() {
        let a = BoundingBox::scored(0, 0, 10, 10, 1.0);
        assert_eq!(merge_boxes(&[a, a]), vec![a]);
        let far = BoundingBox::scored(40, 40, 5, 5, 0.5);
        assert_eq!(merge_boxes(&[a, far]), vec![a, far]);
        let b = BoundingBox::scored(2, 0, 10, 10, 3.0);
        let m = merge_boxes(&[a, b]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].center(), (6.0, 5.0));
        assert_eq!((m[0].w, m[0].h, m[0].score), (10, 10, 3.0));
    }

    #[test]
    fn merge_is_transitive_and_idempotent() {
        // a~b and b~c, but a and c overlap less than half
        let a = BoundingBox::scored(0, 0, 10, 10, 1.0);
        let b = BoundingBox::scored(3, 0, 10, 10, 2.0);
        let c = BoundingBox::scored(6, 0, 10, 10, 0.5);
        assert!(box_overlap(&a, &c) < MERGE_IOU);
        let once = merge_boxes(&[a, b, c]);
        assert_eq!(once.len(), 1);
        assert_eq!(merge_boxes(&once), once);
    }

    #[test]
    fn evaluation_examples() {
        let truth = [BoundingBox::new(0, 0, 10, 10), BoundingBox::new(30, 30, 8, 8)];
        let exact: Vec<_> = truth.iter().map(|t| BoundingBox { score: 1.0, ..*t }).collect();
        let e = evaluate_frame(&exact, &truth);
        assert_eq!((e.hits, e.misses, e.false_alarms), (2, 0, 0));
        let e = evaluate_frame(&[], &truth);
        assert_eq!((e.hits, e.misses, e.false_alarms), (0, 2, 0));
        let two = [BoundingBox::scored(1, 0, 10, 10, 1.0), BoundingBox::scored(0, 1, 10, 10, 2.0)];
        let e = evaluate_frame(&two, &truth[..1]);
        assert_eq!((e.hits, e.misses, e.false_alarms), (1, 0, 1));
        assert_eq!(e.matched, vec![None, Some(0)]);
    }

    #[test]
    fn ladder_validation() {
        assert!(ThresholdLadder::new(vec![]).is_err());
        assert!(ThresholdLadder::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdLadder::new(vec![2.0, 1.0]).is_err());
        let q = ThresholdLadder::quantiles(&[0.0, 1.0, 2.0, 3.0, 4.0], 3).unwrap();
        assert_eq!(q.deltas(), &[0.0, 2.0, 4.0]);
        let flat = ThresholdLadder::quantiles(&[1.0; 10], 21).unwrap();
        assert_eq!(flat.deltas(), &[1.0]);
    }

    #[test]
    fn roc_extremes_and_csv() {
        let rho = map_with(20, 20, &square(2, 2, 4));
        let truth = [BoundingBox::new(2, 2, 4, 4)];
        let frames = [EvalFrame { rho: &rho, truth: &truth, mask: None }];
        let ladder = ThresholdLadder::new(vec![-10.0, 0.0, 100.0]).unwrap();
        let r = build_roc(&frames, &ladder, 1, Execution::Sequential).unwrap();
        // everything on: the whole map is one box, which still hits nothing at 0.3 IoU
        assert_eq!((r.points[0].hits, r.points[0].false_alarms), (0, 1));
        assert_eq!((r.points[1].hit_rate, r.points[1].fa_per_frame), (1.0, 0.0));
        assert_eq!((r.points[2].hits, r.points[2].false_alarms), (0, 0));
        assert_eq!(r.hit_rate_at_fa(1.0), Some(1.0));
        assert_eq!(r.to_csv().lines().next(), Some("delta,hit_rate,fa_per_frame"));
        assert_eq!(r.to_csv().lines().nth(2), Some("0,1,0"));
        assert!(build_roc(&[], &ladder, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn parallel_roc_matches_sequential() {
        let maps: Vec<RatioMap> = (0..6).map(|k| map_with(16, 16, &square(k, k, 3 + k % 2))).collect();
        let truth = [BoundingBox::new(2, 2, 4, 4)];
        let frames: Vec<_> = maps.iter().map(|m| EvalFrame { rho: m, truth: &truth, mask: None }).collect();
        let ladder = ThresholdLadder::new(vec![-1.0, 0.5, 1.05]).unwrap();
        assert_eq!(
            build_roc(&frames, &ladder, 1, Execution::Sequential).unwrap(),
            build_roc(&frames, &ladder, 1, Execution::Parallel).unwrap()
        );
    }
}
