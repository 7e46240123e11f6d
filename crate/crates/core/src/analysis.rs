//! Sample-set summaries: the flexibility multiset, convex hull and area
//! comparisons, and sector-wise extremes of the feasible cloud.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sampler::FlexSample;

/// Interconnection operating points rounded to `k` decimals, with the number
/// of feasible samples that landed on each.
#[derive(Clone, Debug, PartialEq)]
pub struct FlexMultiset {
    pub k: u32,
    /// Keys are the rounded coordinates scaled by 10^k.
    bins: BTreeMap<(i64, i64), u64>,
}

impl FlexMultiset {
    pub fn new(k: u32) -> Self {
        FlexMultiset {
            k,
            bins: BTreeMap::new(),
        }
    }

    fn scale(&self) -> f64 {
        10f64.powi(self.k as i32)
    }

    /// Bin key of a point; rounding is half away from zero.
    pub fn key(&self, p: f64, q: f64) -> (i64, i64) {
        let s = self.scale();
        ((p * s).round() as i64, (q * s).round() as i64)
    }

    pub fn insert(&mut self, p: f64, q: f64) {
        *self.bins.entry(self.key(p, q)).or_insert(0) += 1;
    }

    /// Multiplicity of the bin containing (p, q); 0 when absent.
    pub fn multiplicity(&self, p: f64, q: f64) -> u64 {
        self.bins.get(&self.key(p, q)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn max_multiplicity(&self) -> u64 {
        self.bins.values().copied().max().unwrap_or(0)
    }

    /// Bins as (p_bin, q_bin, m), ordered by p then q.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        let s = self.scale();
        self.bins
            .iter()
            .map(move |(&(p, q), &m)| (p as f64 / s, q as f64 / s, m))
    }

    /// CSV `p_bin,q_bin,m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_bin,q_bin,m\n");
        let k = self.k as usize;
        for (p, q, m) in self.iter() {
            out.push_str(&format!("{p:.k$},{q:.k$},{m}\n"));
        }
        out
    }
}

/// Counts feasible samples per rounded operating point.
pub fn bin_samples(samples: &[FlexSample], k: u32) -> FlexMultiset {
    let mut ms = FlexMultiset::new(k);
    for s in samples.iter().filter(|s| s.feasible) {
        ms.insert(s.y.0, s.y.1);
    }
    ms
}

pub type Point = (f64, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct HullResult {
    /// Counter-clockwise, starting at the lowest-p (then lowest-q) vertex.
    pub vertices: Vec<Point>,
    pub area: f64,
}

impl HullResult {
    /// True when `pt` lies inside or on the hull (with absolute slack `eps`).
    pub fn contains(&self, pt: Point, eps: f64) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => dist(self.vertices[0], pt) <= eps,
            2 => segment_distance(self.vertices[0], self.vertices[1], pt) <= eps,
            n => (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let len = dist(a, b);
                cross(a, b, pt) >= -eps * len
            }),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,p_mw,q_mvar\n");
        for (i, (p, q)) in self.vertices.iter().enumerate() {
            out.push_str(&format!("{i},{p},{q}\n"));
        }
        out
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn segment_distance(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(a, p);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    dist((a.0 + t * dx, a.1 + t * dy), p)
}

/// Shoelace area of a simple polygon (positive for counter-clockwise order).
pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice / 2.0
}

/// Monotone-chain convex hull. Collinear boundary points are dropped;
/// non-finite points are ignored.
pub fn convex_hull(points: &[Point]) -> HullResult {
    let mut pts: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() <= 2 {
        return HullResult {
            vertices: pts,
            area: 0.0,
        };
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let area = polygon_area(&hull).max(0.0);
    HullResult { vertices: hull, area }
}

/// Hull of the feasible samples' operating points.
pub fn feasible_hull(samples: &[FlexSample]) -> HullResult {
    let pts: Vec<Point> = samples.iter().filter(|s| s.feasible).map(|s| s.y).collect();
    convex_hull(&pts)
}

/// Relative area change `100 * (cv1 - cv0) / cv0` [%].
pub fn area_difference(cv1: f64, cv0: f64) -> Result<f64> {
    if !(cv0 > 0.0) {
        return Err(Error::Domain(format!("reference area must be positive, got {cv0}")));
    }
    Ok(100.0 * (cv1 - cv0) / cv0)
}

/// Farthest feasible point within one angular sector around the initial point.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorExtreme {
    pub angle_start: f64,
    pub angle_end: f64,
    /// Zero when no feasible sample lies in the sector.
    pub radius: f64,
    pub point: Option<Point>,
}

/// Splits the plane around `origin` into `n_angles` equal sectors, starting
/// at angle 0 and turning counter-clockwise, and reports the farthest
/// feasible sample in each. Empty when nothing is feasible.
pub fn directional_extremes(samples: &[FlexSample], origin: Point, n_angles: usize) -> Result<Vec<SectorExtreme>> {
    if n_angles < 4 {
        return Err(Error::Validation(format!("need at least 4 sectors, got {n_angles}")));
    }
    let width = 2.0 * PI / n_angles as f64;
    let mut sectors: Vec<SectorExtreme> = (0..n_angles)
        .map(|i| SectorExtreme {
            angle_start: i as f64 * width,
            angle_end: (i + 1) as f64 * width,
            radius: 0.0,
            point: None,
        })
        .collect();
    let mut any = false;
    for s in samples.iter().filter(|s| s.feasible) {
        any = true;
        let (dx, dy) = (s.y.0 - origin.0, s.y.1 - origin.1);
        let r = dx.hypot(dy);
        let angle = dy.atan2(dx).rem_euclid(2.0 * PI);
        let idx = ((angle / width) as usize).min(n_angles - 1);
        let sec = &mut sectors[idx];
        if sec.point.is_none() || r > sec.radius {
            sec.radius = r;
            sec.point = Some(s.y);
        }
    }
    if !any {
        return Ok(Vec::new());
    }
    Ok(sectors)
}
