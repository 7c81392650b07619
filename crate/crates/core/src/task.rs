//! SHPP tasks: a tour segment with pinned endpoints, its local metric, and
//! the min-max coordinate transform plus flip augmentation fed to revisers.

use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};
use crate::types::{DistanceMatrix, EdgeWeights, PathOrder, Point, RoutingInstance};

/// How a task's transformed coordinates relate to the raw ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub sc: f64,
    pub axis_swapped: bool,
    pub x_min: f64,
    pub y_min: f64,
    /// Height of the transformed box; the width is always 1.
    pub y_max: f64,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl TransformRecord {
    /// Maps a raw point into the transformed frame, flips included.
    pub fn apply(&self, p: Point) -> Point {
        let (a, b) = if self.axis_swapped { (p.y, p.x) } else { (p.x, p.y) };
        let (amin, bmin) = if self.axis_swapped { (self.y_min, self.x_min) } else { (self.x_min, self.y_min) };
        let mut x = (a - amin) * self.sc;
        let mut y = (b - bmin) * self.sc;
        if self.flip_x {
            x = 1.0 - x;
        }
        if self.flip_y {
            y = self.y_max - y;
        }
        Point::new(x, y)
    }

    /// Inverse of [`apply`](Self::apply), up to rounding.
    pub fn invert(&self, p: Point) -> Point {
        let x = if self.flip_x { 1.0 - p.x } else { p.x };
        let y = if self.flip_y { self.y_max - p.y } else { p.y };
        let a = x / self.sc;
        let b = y / self.sc;
        if self.axis_swapped {
            Point::new(b + self.x_min, a + self.y_min)
        } else {
            Point::new(a + self.x_min, b + self.y_min)
        }
    }
}

/// One SHPP extracted from a tour. Local index 0 is the start and `len()-1`
/// the terminal; `nodes` maps local indices to instance node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ShppTask {
    pub tour_id: usize,
    pub segment: usize,
    pub nodes: Vec<usize>,
    pub raw: Vec<Point>,
    /// Reviser input coordinates. Equal to `raw` until [`transform`] runs.
    pub coords: Vec<Point>,
    pub record: Option<TransformRecord>,
    /// Explicit local distances for non-Euclidean instances.
    pub matrix: Option<DistanceMatrix>,
    /// Length of the current path `0, 1, .., n-1` under the raw metric.
    pub length: f64,
}

impl ShppTask {
    /// Task over the given instance nodes, visited in the given order.
    pub fn from_instance(instance: &RoutingInstance, nodes: Vec<usize>) -> Self {
        let raw: Vec<Point> = nodes.iter().map(|&i| instance.coords[i]).collect();
        let matrix = match &instance.weights {
            EdgeWeights::Euclidean => None,
            EdgeWeights::Explicit(m) => Some(m.restrict(&nodes)),
            EdgeWeights::RoundedEuclidean => {
                let k = nodes.len();
                let mut data = Vec::with_capacity(k * k);
                for &a in &nodes {
                    for &b in &nodes {
                        data.push(instance.dist(a, b));
                    }
                }
                DistanceMatrix::new(k, data).ok()
            }
        };
        Self::build(nodes, raw, matrix)
    }

    /// Free-standing Euclidean task; node ids are the local indices.
    pub fn from_points(points: Vec<Point>) -> Self {
        let nodes = (0..points.len()).collect();
        Self::build(nodes, points, None)
    }

    /// Free-standing task over an explicit matrix.
    pub fn from_matrix(matrix: DistanceMatrix) -> Self {
        let n = matrix.len();
        Self::build((0..n).collect(), vec![Point::default(); n], Some(matrix))
    }

    fn build(nodes: Vec<usize>, raw: Vec<Point>, matrix: Option<DistanceMatrix>) -> Self {
        let mut t = ShppTask {
            tour_id: 0,
            segment: 0,
            nodes,
            coords: raw.clone(),
            raw,
            record: None,
            matrix,
            length: 0.0,
        };
        t.length = t.path_length(&(0..t.len()).collect::<Vec<_>>());
        t
    }

    pub fn with_ids(mut self, tour_id: usize, segment: usize) -> Self {
        self.tour_id = tour_id;
        self.segment = segment;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Raw-metric distance between local indices.
    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        match &self.matrix {
            Some(m) => m.get(i, j),
            None => self.raw[i].dist(&self.raw[j]),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix.as_ref().is_none_or(|m| m.is_symmetric())
    }

    /// Whether the task's metric is plain Euclidean over `raw`.
    pub fn is_euclidean(&self) -> bool {
        self.matrix.is_none()
    }

    /// Open-path length of a local ordering (unchecked).
    pub fn path_length(&self, order: &[usize]) -> f64 {
        order.windows(2).map(|w| self.d(w[0], w[1])).sum()
    }

    /// The same task with local indices renumbered so that `path` becomes
    /// the identity order.
    pub fn reordered(&self, path: &PathOrder) -> ShppTask {
        let o = path.order();
        ShppTask {
            tour_id: self.tour_id,
            segment: self.segment,
            nodes: o.iter().map(|&i| self.nodes[i]).collect(),
            raw: o.iter().map(|&i| self.raw[i]).collect(),
            coords: o.iter().map(|&i| self.coords[i]).collect(),
            record: self.record,
            matrix: self.matrix.as_ref().map(|m| m.restrict(o)),
            length: self.path_length(o),
        }
    }
}

/// Validated open-path length of `path` on `task`.
pub fn shpp_length(task: &ShppTask, path: &PathOrder) -> Result<f64> {
    path.check(task.len())?;
    Ok(task.path_length(path.order()))
}

/// Min-max normalisation with axis swap: the wider axis becomes x and is
/// scaled onto `[0, 1]`; y lands in `[0, y_max]` with the same scale.
pub fn transform(task: &ShppTask) -> Result<ShppTask> {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &task.raw {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(GlopError::Input("non-finite segment coordinate".into()));
        }
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }
    let (xr, yr) = (x_max - x_min, y_max - y_min);
    if !(xr > 0.0 || yr > 0.0) {
        return Err(GlopError::Degenerate);
    }
    let axis_swapped = !(xr > yr);
    let (wide, narrow) = if axis_swapped { (yr, xr) } else { (xr, yr) };
    let sc = 1.0 / wide;
    let record = TransformRecord {
        sc,
        axis_swapped,
        x_min,
        y_min,
        y_max: narrow * sc,
        flip_x: false,
        flip_y: false,
    };
    let mut out = task.clone();
    out.coords = task.raw.iter().map(|&p| record.apply(p)).collect();
    out.record = Some(record);
    Ok(out)
}

/// Number of flip variants produced by [`augment_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Augment {
    None,
    X2,
    #[default]
    X4,
}

impl Augment {
    pub fn count(self) -> usize {
        match self {
            Augment::None => 1,
            Augment::X2 => 2,
            Augment::X4 => 4,
        }
    }
}

impl std::str::FromStr for Augment {
    type Err = GlopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "none" => Ok(Augment::None),
            "2" => Ok(Augment::X2),
            "4" => Ok(Augment::X4),
            _ => Err(GlopError::Config(format!("augmentation must be 1, 2 or 4, got {s}"))),
        }
    }
}

/// The four flip variants: identity, x flip, y flip, both.
pub fn augment(task: &ShppTask) -> Vec<ShppTask> {
    augment_with(task, Augment::X4)
}

/// Flip variants of a transformed task. An untransformed task yields itself.
pub fn augment_with(task: &ShppTask, mode: Augment) -> Vec<ShppTask> {
    let Some(rec) = task.record else {
        return vec![task.clone()];
    };
    [(false, false), (true, false), (false, true), (true, true)]
        .into_iter()
        .take(mode.count())
        .map(|(fx, fy)| flip(task, &rec, fx, fy))
        .collect()
}

fn flip(task: &ShppTask, rec: &TransformRecord, fx: bool, fy: bool) -> ShppTask {
    let mut out = task.clone();
    for p in &mut out.coords {
        if fx {
            p.x = 1.0 - p.x;
        }
        if fy {
            p.y = rec.y_max - p.y;
        }
    }
    out.record = Some(TransformRecord { flip_x: rec.flip_x ^ fx, flip_y: rec.flip_y ^ fy, ..*rec });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn two_node_and_collinear_lengths() {
        let t = ShppTask::from_points(pts(&[(0.0, 0.0), (0.3, 0.4)]));
        assert_eq!(shpp_length(&t, &PathOrder::identity(2)).unwrap(), 0.5);
        let t = ShppTask::from_points(pts(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]));
        assert_eq!(shpp_length(&t, &PathOrder::identity(3)).unwrap(), 1.0);
        assert!(shpp_length(&t, &PathOrder(vec![1, 0, 2])).is_err());
    }

    #[test]
    fn fixed_point_transform() {
        let t = ShppTask::from_points(pts(&[(0.0, 0.0), (1.0, 0.5), (0.5, 0.25)]));
        let tt = transform(&t).unwrap();
        let r = tt.record.unwrap();
        assert_eq!(r.sc, 1.0);
        assert!(!r.axis_swapped);
        assert_eq!(tt.coords, t.raw);
    }

    #[test]
    fn box_transform() {
        let t = ShppTask::from_points(pts(&[(0.2, 0.1), (0.6, 0.3), (0.4, 0.2)]));
        let tt = transform(&t).unwrap();
        let r = tt.record.unwrap();
        assert!((r.sc - 2.5).abs() < 1e-12);
        assert!(!r.axis_swapped);
        assert!((r.y_max - 0.5).abs() < 1e-12);
        assert!((tt.coords[1].x - 1.0).abs() < 1e-12 && (tt.coords[1].y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tall_box_swaps_axes() {
        let t = ShppTask::from_points(pts(&[(0.1, 0.0), (0.2, 0.8), (0.15, 0.4)]));
        let tt = transform(&t).unwrap();
        let r = tt.record.unwrap();
        assert!(r.axis_swapped);
        let xs: Vec<f64> = tt.coords.iter().map(|p| p.x).collect();
        assert_eq!(xs.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert!((xs.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        for (p, q) in t.raw.iter().zip(&tt.coords) {
            let back = r.invert(*q);
            assert!((back.x - p.x).abs() < 1e-12 && (back.y - p.y).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let t = ShppTask::from_points(pts(&[(0.3, 0.3); 4]));
        assert!(matches!(transform(&t), Err(GlopError::Degenerate)));
    }

    #[test]
    fn flips_are_isometries_and_involutions() {
        let t = ShppTask::from_points(pts(&[(0.1, 0.2), (0.9, 0.4), (0.5, 0.35), (0.3, 0.25)]));
        let tt = transform(&t).unwrap();
        let vars = augment(&tt);
        assert_eq!(vars.len(), 4);
        let dists = |t: &ShppTask| {
            let mut v = Vec::new();
            for i in 0..t.len() {
                for j in 0..t.len() {
                    v.push(t.coords[i].dist(&t.coords[j]));
                }
            }
            v
        };
        let base = dists(&vars[0]);
        for v in &vars[1..] {
            for (a, b) in base.iter().zip(dists(v)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let twice = augment(&vars[3]);
        for (a, b) in twice[3].coords.iter().zip(&tt.coords) {
            assert!((a.x - b.x).abs() < 1e-15 && (a.y - b.y).abs() < 1e-15);
        }
        let r = twice[3].record.unwrap();
        assert!(!r.flip_x && !r.flip_y);
        for v in &vars {
            let r = v.record.unwrap();
            for (p, q) in t.raw.iter().zip(&v.coords) {
                let back = r.invert(*q);
                assert!((back.x - p.x).abs() < 1e-12 && (back.y - p.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reordering_keeps_the_metric() {
        let m = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 2.0, 3.0],
            vec![4.0, 0.0, 5.0, 6.0],
            vec![7.0, 8.0, 0.0, 9.0],
            vec![1.5, 2.5, 3.5, 0.0],
        ])
        .unwrap();
        let t = ShppTask::from_matrix(m);
        let p = PathOrder(vec![0, 2, 1, 3]);
        let r = t.reordered(&p);
        assert_eq!(r.nodes, vec![0, 2, 1, 3]);
        assert_eq!(r.length, 2.0 + 8.0 + 6.0);
        assert_eq!(r.length, shpp_length(&t, &p).unwrap());
    }
}
