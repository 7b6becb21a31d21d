//! Deterministic path types: right-continuous counting paths, continuous
//! piecewise-linear paths, vectors of either, and routing-matrix paths whose
//! rows are parameterized by cumulative departure count.
//!
//! Every path carries a finite horizon and a declared constant tail slope
//! (zero for counting paths), so evaluation is total on [0, ∞). Suprema and
//! moduli are computed exactly on merged knot grids; between knots every
//! difference of our path classes is linear, so scanning knots, shifted
//! knots, and their left limits attains the supremum.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Common evaluation interface for the two path kinds.
pub trait Curve {
    /// Right-continuous value at t ≥ 0 (tail extension past the horizon).
    fn eval(&self, t: f64) -> f64;
    /// Left limit at t (equals eval for continuous paths; at t = 0 returns
    /// the initial value).
    fn eval_left(&self, t: f64) -> f64;
    fn horizon(&self) -> f64;
    /// All times where the path may change slope or jump, including 0.
    fn knots(&self) -> Vec<f64>;
    fn tail_slope(&self) -> f64;
}

/// Nondecreasing right-continuous step function: an initial value plus
/// positive jumps at strictly increasing times. Constant after the last jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathJson", into = "PathJson")]
pub struct StepPath {
    initial_value: f64,
    jumps: Vec<(f64, f64)>,
    horizon: f64,
    // cumulative value after each jump; for uniform increments each entry is
    // initial + count * size (one rounding), which keeps residual checks on
    // long scaled counting paths at ulp-level error
    cum: Vec<f64>,
}

impl StepPath {
    pub fn new(initial_value: f64, jumps: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        if !(initial_value >= 0.0) || !initial_value.is_finite() {
            return Err(Error::invalid("step path initial value must be >= 0"));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("step path horizon must be >= 0"));
        }
        let mut prev = -1.0f64;
        for &(t, inc) in &jumps {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::invalid("jump time must be >= 0"));
            }
            if t <= prev {
                return Err(Error::invalid("jump times must be strictly increasing"));
            }
            if !(inc > 0.0) || !inc.is_finite() {
                return Err(Error::invalid("jump increments must be > 0"));
            }
            prev = t;
        }
        if prev > horizon {
            return Err(Error::invalid("jump beyond horizon"));
        }
        let uniform = jumps.windows(2).all(|w| w[0].1 == w[1].1);
        let mut cum = Vec::with_capacity(jumps.len());
        if uniform && !jumps.is_empty() {
            let size = jumps[0].1;
            for i in 0..jumps.len() {
                cum.push(initial_value + (i + 1) as f64 * size);
            }
        } else {
            let mut v = initial_value;
            for &(_, inc) in &jumps {
                v += inc;
                cum.push(v);
            }
        }
        Ok(StepPath {
            initial_value,
            jumps,
            horizon,
            cum,
        })
    }

    /// Unit jumps at the given times, initial value 0.
    pub fn counting(times: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::from_scaled(times, 1.0, horizon)
    }

    /// Jumps of a fixed size at the given times (the 1/n-scaled counting
    /// paths of the fluid limit).
    pub fn from_scaled(times: Vec<f64>, size: f64, horizon: f64) -> Result<Self> {
        Self::new(0.0, times.into_iter().map(|t| (t, size)).collect(), horizon)
    }

    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    /// Number of jumps in (s, t].
    pub fn count_in(&self, s: f64, t: f64) -> usize {
        self.jumps.iter().filter(|&&(u, _)| u > s && u <= t).count()
    }
}

impl Curve for StepPath {
    fn eval(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "path evaluated at negative time");
        let idx = self.jumps.partition_point(|&(u, _)| u <= t);
        if idx == 0 {
            self.initial_value
        } else {
            self.cum[idx - 1]
        }
    }

    fn eval_left(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "path evaluated at negative time");
        let idx = self.jumps.partition_point(|&(u, _)| u < t);
        if idx == 0 {
            self.initial_value
        } else {
            self.cum[idx - 1]
        }
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn knots(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(self.jumps.len() + 2);
        k.push(0.0);
        k.extend(self.jumps.iter().map(|&(t, _)| t));
        k.push(self.horizon);
        dedup_sorted(&mut k);
        k
    }

    fn tail_slope(&self) -> f64 {
        0.0
    }
}

/// Continuous nondecreasing piecewise-linear path given by breakpoints
/// starting at t = 0; beyond the last breakpoint the declared tail slope
/// applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathJson", into = "PathJson")]
pub struct PiecewisePath {
    points: Vec<(f64, f64)>,
    tail_slope: f64,
}

impl PiecewisePath {
    pub fn new(points: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("piecewise path needs at least one breakpoint"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::invalid("piecewise path must start at t = 0"));
        }
        if !(tail_slope >= 0.0) {
            return Err(Error::invalid("tail slope must be >= 0"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("breakpoint times must be strictly increasing"));
            }
            if w[1].1 < w[0].1 - 1e-12 {
                return Err(Error::invalid("piecewise path must be nondecreasing"));
            }
        }
        for &(t, v) in &points {
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::invalid("breakpoints must be finite"));
            }
        }
        Ok(PiecewisePath { points, tail_slope })
    }

    pub fn constant(v: f64, horizon: f64) -> Result<Self> {
        if horizon > 0.0 {
            Self::new(vec![(0.0, v), (horizon, v)], 0.0)
        } else {
            Self::new(vec![(0.0, v)], 0.0)
        }
    }

    pub fn linear(initial: f64, slope: f64, horizon: f64) -> Result<Self> {
        if horizon > 0.0 {
            Self::new(
                vec![(0.0, initial), (horizon, initial + slope * horizon)],
                slope,
            )
        } else {
            Self::new(vec![(0.0, initial)], slope)
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Removes interior breakpoints that are collinear with their neighbors
    /// (within slope tolerance 1e-12 scaled).
    pub fn simplify(&self) -> PiecewisePath {
        if self.points.len() <= 2 {
            return self.clone();
        }
        let mut out: Vec<(f64, f64)> = vec![self.points[0]];
        for i in 1..self.points.len() {
            while out.len() >= 2 {
                let a = out[out.len() - 2];
                let b = out[out.len() - 1];
                let c = self.points[i];
                let s1 = (b.1 - a.1) / (b.0 - a.0);
                let s2 = (c.1 - b.1) / (c.0 - b.0);
                let scale = 1.0 + s1.abs().max(s2.abs());
                if (s1 - s2).abs() <= 1e-12 * scale {
                    out.pop();
                } else {
                    break;
                }
            }
            out.push(self.points[i]);
        }
        PiecewisePath {
            points: out,
            tail_slope: self.tail_slope,
        }
    }

    /// Slope of the segment starting at or covering t (the right derivative;
    /// at a breakpoint this is the slope of the segment that begins there).
    pub fn right_slope(&self, t: f64) -> f64 {
        let pts = &self.points;
        let n = pts.len();
        if t >= pts[n - 1].0 {
            return self.tail_slope;
        }
        let idx = pts.partition_point(|&(u, _)| u <= t);
        // idx >= 1 since points start at 0 and t >= 0
        let lo = idx.max(1) - 1;
        let (t0, v0) = pts[lo];
        let (t1, v1) = pts[lo + 1];
        (v1 - v0) / (t1 - t0)
    }

    /// Smallest breakpoint time strictly greater than t, ignoring the tail.
    pub fn next_knot_after(&self, t: f64) -> Option<f64> {
        let idx = self.points.partition_point(|&(u, _)| u <= t);
        self.points.get(idx).map(|&(u, _)| u)
    }

    /// Extends the horizon to at least T using the tail slope.
    pub fn extend_to(&self, t: f64) -> PiecewisePath {
        let last = *self.points.last().unwrap();
        if t <= last.0 {
            return self.clone();
        }
        let mut points = self.points.clone();
        points.push((t, last.1 + self.tail_slope * (t - last.0)));
        PiecewisePath {
            points,
            tail_slope: self.tail_slope,
        }
    }
}

impl Curve for PiecewisePath {
    fn eval(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "path evaluated at negative time");
        let pts = &self.points;
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1 + self.tail_slope * (t - last.0);
        }
        // binary search for the segment containing t
        let mut lo = 0usize;
        let mut hi = pts.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if pts[mid].0 <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, v0) = pts[lo];
        let (t1, v1) = pts[hi];
        v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
    }

    fn eval_left(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    fn knots(&self) -> Vec<f64> {
        self.points.iter().map(|&(t, _)| t).collect()
    }

    fn tail_slope(&self) -> f64 {
        self.tail_slope
    }
}

/// JSON wire form shared by both path kinds.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PathJson {
    Step {
        #[serde(default)]
        initial_value: f64,
        jumps: Vec<(f64, f64)>,
        horizon: f64,
        #[serde(default)]
        tail_slope: f64,
    },
    Piecewise {
        breakpoints: Vec<(f64, f64)>,
        horizon: f64,
        #[serde(default)]
        tail_slope: f64,
    },
}

impl TryFrom<PathJson> for StepPath {
    type Error = Error;
    fn try_from(p: PathJson) -> Result<Self> {
        match p {
            PathJson::Step {
                initial_value,
                jumps,
                horizon,
                tail_slope,
            } => {
                if tail_slope != 0.0 {
                    return Err(Error::invalid("step paths must declare tail_slope 0"));
                }
                StepPath::new(initial_value, jumps, horizon)
            }
            PathJson::Piecewise { .. } => Err(Error::invalid("expected kind \"step\"")),
        }
    }
}

impl From<StepPath> for PathJson {
    fn from(p: StepPath) -> Self {
        PathJson::Step {
            initial_value: p.initial_value,
            jumps: p.jumps,
            horizon: p.horizon,
            tail_slope: 0.0,
        }
    }
}

impl TryFrom<PathJson> for PiecewisePath {
    type Error = Error;
    fn try_from(p: PathJson) -> Result<Self> {
        match p {
            PathJson::Piecewise {
                breakpoints,
                horizon,
                tail_slope,
            } => {
                let path = PiecewisePath::new(breakpoints, tail_slope)?;
                Ok(path.extend_to(horizon))
            }
            PathJson::Step { .. } => Err(Error::invalid("expected kind \"piecewise\"")),
        }
    }
}

impl From<PiecewisePath> for PathJson {
    fn from(p: PiecewisePath) -> Self {
        PathJson::Piecewise {
            horizon: p.horizon(),
            breakpoints: p.points,
            tail_slope: p.tail_slope,
        }
    }
}

/// Continuous piecewise-linear path with no monotonicity requirement,
/// constant beyond its last breakpoint. Queue trajectories live here; the
/// counting paths above stay nondecreasing by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignedJson", into = "SignedJson")]
pub struct SignedPath {
    points: Vec<(f64, f64)>,
}

impl SignedPath {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("signed path needs at least one breakpoint"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::invalid("signed path must start at t = 0"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("breakpoint times must be strictly increasing"));
            }
        }
        for &(t, v) in &points {
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::invalid("breakpoints must be finite"));
            }
        }
        Ok(SignedPath { points })
    }

    pub fn constant(v: f64, horizon: f64) -> Result<Self> {
        if horizon > 0.0 {
            Self::new(vec![(0.0, v), (horizon, v)])
        } else {
            Self::new(vec![(0.0, v)])
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

impl Curve for SignedPath {
    fn eval(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "path evaluated at negative time");
        let pts = &self.points;
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let mut lo = 0usize;
        let mut hi = pts.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if pts[mid].0 <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, v0) = pts[lo];
        let (t1, v1) = pts[hi];
        v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
    }

    fn eval_left(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    fn knots(&self) -> Vec<f64> {
        self.points.iter().map(|&(t, _)| t).collect()
    }

    fn tail_slope(&self) -> f64 {
        0.0
    }
}

#[derive(Serialize, Deserialize)]
struct SignedJson {
    breakpoints: Vec<(f64, f64)>,
}

impl TryFrom<SignedJson> for SignedPath {
    type Error = Error;
    fn try_from(p: SignedJson) -> Result<Self> {
        SignedPath::new(p.breakpoints)
    }
}

impl From<SignedPath> for SignedJson {
    fn from(p: SignedPath) -> Self {
        SignedJson {
            breakpoints: p.points,
        }
    }
}

/// Homogeneous vector of K paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorPath<P> {
    pub components: Vec<P>,
}

pub type StepVector = VectorPath<StepPath>;
pub type PiecewiseVector = VectorPath<PiecewisePath>;
pub type QueueVector = VectorPath<SignedPath>;

impl<P: Curve> VectorPath<P> {
    pub fn new(components: Vec<P>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("vector path needs K >= 1 components"));
        }
        Ok(VectorPath { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.horizon())
            .fold(0.0, f64::max)
    }
}

impl PiecewiseVector {
    pub fn simplified(&self) -> PiecewiseVector {
        VectorPath {
            components: self.components.iter().map(|c| c.simplify()).collect(),
        }
    }
}

/// K×K matrix of paths, row-indexed by origin station; rows are functions of
/// the origin's cumulative departure count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingPath<P> {
    k: usize,
    entries: Vec<P>, // row-major
}

impl<P: Curve> RoutingPath<P> {
    pub fn new(k: usize, entries: Vec<P>) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return Err(Error::invalid("routing path must be K x K with K >= 1"));
        }
        for e in &entries {
            if e.eval(0.0).abs() > 1e-12 {
                return Err(Error::invalid("routing path entries must start at 0"));
            }
        }
        let rp = RoutingPath { k, entries };
        rp.check_row_increments()?;
        Ok(rp)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> &P {
        &self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[P] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    /// Verifies Σ_j [P^(i,j)(u) − P^(i,j)(v)] ≤ u − v for v ≤ u on each row,
    /// via merged knots (row sums are piecewise linear in u).
    fn check_row_increments(&self) -> Result<()> {
        for i in 0..self.k {
            let mut grid: Vec<f64> = Vec::new();
            for j in 0..self.k {
                grid.extend(self.entry(i, j).knots());
            }
            dedup_sorted(&mut grid);
            for w in grid.windows(2) {
                let (u, v) = (w[0], w[1]);
                let s: f64 = (0..self.k)
                    .map(|j| self.entry(i, j).eval(v) - self.entry(i, j).eval(u))
                    .sum();
                if s > (v - u) + 1e-9 * (1.0 + v) {
                    return Err(Error::validation(format!(
                        "routing row {i} gains more than its departures on ({u}, {v})"
                    )));
                }
                let each_nonneg = (0..self.k)
                    .all(|j| self.entry(i, j).eval(v) >= self.entry(i, j).eval(u) - 1e-12);
                if !each_nonneg {
                    return Err(Error::validation(format!(
                        "routing row {i} has a decreasing entry on ({u}, {v})"
                    )));
                }
            }
            // tail slopes must obey the same rate bound
            let tail: f64 = (0..self.k).map(|j| self.entry(i, j).tail_slope()).sum();
            if tail > 1.0 + 1e-9 {
                return Err(Error::validation(format!(
                    "routing row {i} tail slope sum exceeds 1"
                )));
            }
        }
        Ok(())
    }
}

fn dedup_sorted(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
}

/// Piecewise-linear interpolation of f on the grid {k/n}, matching f exactly
/// at grid points. The grid covers [0, horizon] (last point rounded up to a
/// multiple of 1/n).
pub fn polygonal<C: Curve>(f: &C, n: u64) -> Result<PiecewisePath> {
    if n == 0 {
        return Err(Error::invalid("polygonal step must have n >= 1"));
    }
    let t_end = f.horizon();
    let steps = (t_end * n as f64).ceil() as u64;
    let steps = steps.max(1);
    let mut points = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let t = k as f64 / n as f64;
        points.push((t, f.eval(t)));
    }
    PiecewisePath::new(points, f.tail_slope())
}

pub fn polygonal_vec<C: Curve>(x: &VectorPath<C>, n: u64) -> Result<PiecewiseVector> {
    Ok(VectorPath {
        components: x
            .components
            .iter()
            .map(|c| polygonal(c, n))
            .collect::<Result<_>>()?,
    })
}

/// Candidate times at which a piecewise-linear-between-knots functional can
/// attain its supremum on [0, T]: all knots, all knots shifted left by
/// `shift`, and the interval ends.
fn candidate_times(knot_sets: &[Vec<f64>], shift: f64, t_end: f64) -> Vec<f64> {
    let mut c = vec![0.0, t_end];
    for ks in knot_sets {
        for &t in ks {
            if t <= t_end + shift {
                c.push(t);
                if t - shift >= 0.0 {
                    c.push(t - shift);
                }
            }
        }
    }
    c.retain(|&t| (0.0..=t_end).contains(&t));
    dedup_sorted(&mut c);
    c
}

/// Modulus of continuity w_δ(X, T) = sup_{t ∈ [0,T]} max_i |X_i(t+δ) − X_i(t)|.
/// Exact for our path classes: the scan covers knots, knots − δ, interval
/// ends, and left limits at each.
pub fn modulus<C: Curve>(x: &VectorPath<C>, delta: f64, t_end: f64) -> f64 {
    assert!(delta > 0.0, "modulus requires delta > 0");
    assert!(t_end >= 0.0);
    let knots: Vec<Vec<f64>> = x.components.iter().map(|c| c.knots()).collect();
    let cands = candidate_times(&knots, delta, t_end);
    let mut best = 0.0f64;
    for &t in &cands {
        for c in &x.components {
            let right = (c.eval(t + delta) - c.eval(t)).abs();
            let left = (c.eval_left(t + delta) - c.eval_left(t)).abs();
            best = best.max(right).max(left);
        }
    }
    best
}

/// Exact sup over [0, T] of the max-coordinate distance between two vector
/// paths (possibly of different kinds).
pub fn sup_distance<A: Curve, B: Curve>(x: &VectorPath<A>, y: &VectorPath<B>, t_end: f64) -> f64 {
    assert_eq!(x.dim(), y.dim(), "dimension mismatch");
    let mut best = 0.0f64;
    for (cx, cy) in x.components.iter().zip(&y.components) {
        best = best.max(sup_distance_scalar(cx, cy, t_end));
    }
    best
}

pub fn sup_distance_scalar<A: Curve, B: Curve>(x: &A, y: &B, t_end: f64) -> f64 {
    let knots = vec![x.knots(), y.knots()];
    let cands = candidate_times(&knots, 0.0, t_end);
    let mut best = 0.0f64;
    for &t in &cands {
        best = best
            .max((x.eval(t) - y.eval(t)).abs())
            .max((x.eval_left(t) - y.eval_left(t)).abs());
    }
    best
}

/// CSV export on a caller-supplied grid: header `t,x0,...`, one row per grid
/// time, LF line endings.
pub fn to_csv<C: Curve>(labels: &[&str], paths: &[&VectorPath<C>], grid: &[f64]) -> String {
    let mut header = String::from("t");
    for (lbl, p) in labels.iter().zip(paths) {
        for i in 0..p.dim() {
            header.push_str(&format!(",{lbl}{i}"));
        }
    }
    let mut out = header;
    out.push('\n');
    for &t in grid {
        let mut row = format!("{t}");
        for p in paths {
            for v in p.eval(t) {
                row.push_str(&format!(",{v}"));
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(horizon: f64) -> PiecewisePath {
        PiecewisePath::linear(0.0, 1.0, horizon).unwrap()
    }

    #[test]
    fn eval_identity() {
        assert_eq!(identity(10.0).eval(3.5), 3.5);
    }

    #[test]
    fn eval_counting() {
        let p = StepPath::counting(vec![1.0, 2.0, 3.0], 5.0).unwrap();
        assert_eq!(p.eval(2.5), 2.0);
        assert_eq!(p.eval(2.0), 2.0);
        assert_eq!(p.eval_left(2.0), 1.0);
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(4.9), 3.0);
    }

    #[test]
    fn eval_flat_segment() {
        let p = PiecewisePath::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)], 0.0).unwrap();
        assert_eq!(p.eval(1.5), 2.0);
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(3.0), 2.0);
    }

    #[test]
    fn constructors_reject_bad_data() {
        assert!(StepPath::new(0.0, vec![(1.0, 1.0), (1.0, 1.0)], 2.0).is_err());
        assert!(StepPath::new(0.0, vec![(1.0, 0.0)], 2.0).is_err());
        assert!(StepPath::new(-1.0, vec![], 2.0).is_err());
        assert!(PiecewisePath::new(vec![(0.5, 0.0)], 0.0).is_err());
        assert!(PiecewisePath::new(vec![(0.0, 1.0), (1.0, 0.0)], 0.0).is_err());
        assert!(PiecewisePath::new(vec![], 0.0).is_err());
    }

    #[test]
    fn polygonal_identity_is_fixed_point() {
        let f = identity(1.0);
        let g = polygonal(&f, 4).unwrap();
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            assert!((g.eval(t) - t).abs() < 1e-15);
        }
    }

    #[test]
    fn polygonal_of_square() {
        // f(t) = t^2 sampled on the half-integer grid
        let f = PiecewisePath::new(
            (0..=16)
                .map(|k| {
                    let t = k as f64 / 16.0;
                    (t, t * t)
                })
                .collect(),
            2.0,
        )
        .unwrap();
        let g = polygonal(&f, 2).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[1], (0.5, 0.25));
        assert_eq!(pts[2], (1.0, 1.0));
    }

    #[test]
    fn polygonal_of_step_jump() {
        let f = StepPath::counting(vec![0.3], 1.0).unwrap();
        let g = polygonal(&f, 10).unwrap();
        assert!((g.eval(0.2) - 0.0).abs() < 1e-15);
        assert!((g.eval(0.3) - 1.0).abs() < 1e-12);
        let slope = (g.eval(0.3) - g.eval(0.2)) / 0.1;
        assert!((slope - 10.0).abs() < 1e-9);
    }

    #[test]
    fn modulus_examples() {
        let id = VectorPath::new(vec![identity(2.0)]).unwrap();
        assert!((modulus(&id, 0.1, 1.0) - 0.1).abs() < 1e-12);

        let step =
            VectorPath::new(vec![StepPath::counting(vec![0.5], 2.0).unwrap()]).unwrap();
        assert!((modulus(&step, 0.25, 1.5) - 1.0).abs() < 1e-12);

        let ramp = VectorPath::new(vec![PiecewisePath::new(
            vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)],
            0.0,
        )
        .unwrap()])
        .unwrap();
        assert!((modulus(&ramp, 0.5, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sup_distance_examples() {
        let x = VectorPath::new(vec![identity(1.0)]).unwrap();
        assert_eq!(sup_distance(&x, &x, 1.0), 0.0);

        let y = VectorPath::new(vec![PiecewisePath::linear(0.0, 2.0, 1.0).unwrap()]).unwrap();
        assert!((sup_distance(&x, &y, 1.0) - 1.0).abs() < 1e-12);

        let s = VectorPath::new(vec![StepPath::counting(vec![0.5], 1.0).unwrap()]).unwrap();
        assert!((sup_distance(&s, &x, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn routing_row_constraint() {
        // row sums with slope 1 are accepted; slope 1.2 rejected
        let ok = RoutingPath::new(
            1,
            vec![PiecewisePath::linear(0.0, 1.0, 5.0).unwrap()],
        );
        assert!(ok.is_ok());
        let bad = RoutingPath::new(
            1,
            vec![PiecewisePath::linear(0.0, 1.2, 5.0).unwrap()],
        );
        assert!(bad.is_err());
        let nonzero_start = RoutingPath::new(
            1,
            vec![PiecewisePath::linear(0.5, 0.5, 5.0).unwrap()],
        );
        assert!(nonzero_start.is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = StepPath::counting(vec![0.25, 1.5], 3.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"kind\":\"step\""));
        let q: StepPath = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);

        let p = PiecewisePath::new(vec![(0.0, 0.0), (1.0, 0.5)], 0.25).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"kind\":\"piecewise\""));
        let q: PiecewisePath = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);

        // deserializing a piecewise payload with horizon past the last
        // breakpoint extends using the tail slope
        let j = r#"{"kind":"piecewise","breakpoints":[[0.0,0.0],[1.0,1.0]],"horizon":2.0,"tail_slope":0.5}"#;
        let q: PiecewisePath = serde_json::from_str(j).unwrap();
        assert!((q.eval(2.0) - 1.5).abs() < 1e-12);

        let wrong: std::result::Result<StepPath, _> = serde_json::from_str(j);
        assert!(wrong.is_err());
    }

    #[test]
    fn csv_export_shape() {
        let x = VectorPath::new(vec![identity(1.0), identity(1.0)]).unwrap();
        let csv = to_csv(&["a"], &[&x], &[0.0, 0.5, 1.0]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,a0,a1");
        assert_eq!(lines.next().unwrap(), "0,0,0");
        assert_eq!(lines.next().unwrap(), "0.5,0.5,0.5");
    }

    mod properties {
        use super::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random_step(rng: &mut ChaCha8Rng, horizon: f64) -> StepPath {
            let n = rng.gen_range(0..12);
            let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            StepPath::from_scaled(times, rng.gen_range(0.2..2.0), horizon).unwrap()
        }

        fn random_piecewise(rng: &mut ChaCha8Rng, horizon: f64) -> PiecewisePath {
            let n = rng.gen_range(1..8);
            let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
            times.push(0.0);
            times.push(horizon);
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let mut v = 0.0;
            let pts = times
                .iter()
                .map(|&t| {
                    let p = (t, v);
                    v += rng.gen_range(0.0..1.0);
                    p
                })
                .collect();
            PiecewisePath::new(pts, rng.gen_range(0.0..1.0)).unwrap()
        }

        #[test]
        fn polygonal_matches_on_grid_and_monotone() {
            let mut rng = ChaCha8Rng::seed_from_u64(101);
            for _ in 0..50 {
                let f = random_step(&mut rng, 3.0);
                let n = rng.gen_range(1..20u64);
                let g = polygonal(&f, n).unwrap();
                let steps = (3.0 * n as f64).ceil() as u64;
                for k in 0..=steps {
                    let t = k as f64 / n as f64;
                    assert!(
                        (g.eval(t) - f.eval(t)).abs() < 1e-12,
                        "grid mismatch at {t}"
                    );
                }
                for w in g.points().windows(2) {
                    assert!(w[1].1 >= w[0].1 - 1e-12);
                }
            }
        }

        #[test]
        fn polygonal_modulus_bound() {
            let mut rng = ChaCha8Rng::seed_from_u64(202);
            for _ in 0..50 {
                let f = VectorPath::new(vec![random_piecewise(&mut rng, 2.0)]).unwrap();
                let n = rng.gen_range(1..10u64);
                let g = VectorPath::new(vec![polygonal(&f.components[0], n).unwrap()]).unwrap();
                let delta = rng.gen_range(0.05..0.5);
                let lhs = modulus(&g, delta, 1.5);
                let rhs = modulus(&f, delta + 1.0 / n as f64, 1.5);
                assert!(
                    lhs <= rhs + 1e-9,
                    "interpolation increased the modulus: {lhs} > {rhs}"
                );
            }
        }

        #[test]
        fn sup_distance_is_a_metric() {
            let mut rng = ChaCha8Rng::seed_from_u64(303);
            for _ in 0..40 {
                let x = VectorPath::new(vec![random_piecewise(&mut rng, 2.0)]).unwrap();
                let y = VectorPath::new(vec![random_piecewise(&mut rng, 2.0)]).unwrap();
                let z = VectorPath::new(vec![random_piecewise(&mut rng, 2.0)]).unwrap();
                let dxy = sup_distance(&x, &y, 2.0);
                let dyx = sup_distance(&y, &x, 2.0);
                assert!((dxy - dyx).abs() < 1e-12, "symmetry");
                let dxz = sup_distance(&x, &z, 2.0);
                let dyz = sup_distance(&y, &z, 2.0);
                assert!(dxz <= dxy + dyz + 1e-9, "triangle inequality");
                assert_eq!(sup_distance(&x, &x, 2.0), 0.0);
            }
        }

        #[test]
        fn modulus_monotone_in_delta_for_nondecreasing_paths() {
            let mut rng = ChaCha8Rng::seed_from_u64(404);
            for _ in 0..40 {
                let f = VectorPath::new(vec![
                    random_piecewise(&mut rng, 2.0),
                    random_piecewise(&mut rng, 2.0),
                ])
                .unwrap();
                let d1 = rng.gen_range(0.05..0.3);
                let d2 = d1 + rng.gen_range(0.05..0.3);
                assert!(modulus(&f, d1, 1.5) <= modulus(&f, d2, 1.5) + 1e-12);
            }
        }
    }
}
