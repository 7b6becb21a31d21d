//! The flow maps and fixed-point solvers: one-dimensional reflection, the
//! departure map Φ, the routing composition Γ, the fixed-point residual, and
//! solvers for counting, linear, and piecewise-linear networks.
//!
//! All continuous-path computations are exact on merged breakpoint grids:
//! between knots every quantity is linear, and the running minimum inserts
//! at most one crossing knot per segment.

pub mod counting;
mod glue;
mod linear;

pub use glue::{solve_glue, solve_picard, solve_piecewise_linear, PicardStart};
pub use linear::{solve_linear, LinearNet};

use crate::network::NetworkPaths;
use crate::paths::{
    sup_distance, Curve, PiecewisePath, PiecewiseVector, RoutingPath, StepPath, StepVector,
    VectorPath,
};
use crate::{Error, Result};

/// Continuous piecewise-linear function with slopes of either sign; the
/// signed workhorse behind reflection (differences of nondecreasing paths).
#[derive(Clone, Debug)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub tail_slope: f64,
}

impl Polyline {
    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1 + self.tail_slope * (t - last.0);
        }
        if t <= pts[0].0 {
            return pts[0].1;
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

    /// a − b sampled on merged knots over [0, t_end].
    pub fn from_difference(a: &PiecewisePath, b: &PiecewisePath, t_end: f64) -> Polyline {
        let a = a.extend_to(t_end);
        let b = b.extend_to(t_end);
        let knots = merge_knots(&[&a, &b], t_end);
        let points = knots
            .into_iter()
            .map(|t| (t, a.eval(t) - b.eval(t)))
            .collect();
        Polyline {
            points,
            tail_slope: a.tail_slope() - b.tail_slope(),
        }
    }
}

/// Merged, sorted, deduplicated knot times of several paths, clipped to
/// [0, t_end] with both endpoints included.
fn merge_knots<C: Curve>(paths: &[&C], t_end: f64) -> Vec<f64> {
    let mut ks = vec![0.0, t_end];
    for p in paths {
        for t in p.knots() {
            if t > 0.0 && t < t_end {
                ks.push(t);
            }
        }
    }
    ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ks.dedup();
    ks
}

/// Running minimum m(t) = min_{0<=s<=t} x(s), exact: on a segment that dips
/// below the running minimum the crossing point becomes a new knot.
fn running_min(x: &Polyline) -> Polyline {
    let pts = &x.points;
    let mut out: Vec<(f64, f64)> = vec![pts[0]];
    let mut cur = pts[0].1;
    for w in pts.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if v1 >= cur {
            out.push((t1, cur));
        } else {
            if v0 > cur {
                // downward segment crosses the running min strictly inside
                let tc = t0 + (cur - v0) * (t1 - t0) / (v1 - v0);
                if tc > t0 && tc < t1 {
                    out.push((tc, cur));
                }
            }
            out.push((t1, v1));
            cur = v1;
        }
    }
    out.dedup_by(|a, b| a.0 == b.0);
    Polyline {
        points: out,
        tail_slope: x.tail_slope.min(0.0),
    }
}

/// One-dimensional reflection R(x)(t) = x(t) − min(0, min_{s<=t} x(s)).
pub fn reflect1d(x: &Polyline) -> Polyline {
    let m = running_min(x);
    let mut knots: Vec<f64> = x.points.iter().map(|p| p.0).collect();
    knots.extend(m.points.iter().map(|p| p.0));
    // crossing of m through zero adds a kink to min(0, m)
    for w in m.points.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if (v0 > 0.0 && v1 < 0.0) || (v0 < 0.0 && v1 > 0.0) {
            knots.push(t0 + (0.0 - v0) * (t1 - t0) / (v1 - v0));
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let points = knots
        .into_iter()
        .map(|t| (t, x.eval(t) - m.eval(t).min(0.0)))
        .collect();
    Polyline {
        points,
        tail_slope: x.tail_slope - m.tail_slope.min(0.0),
    }
}

fn monotone_snap(points: &mut [(f64, f64)]) {
    for i in 1..points.len() {
        if points[i].1 < points[i - 1].1 {
            points[i].1 = points[i - 1].1;
        }
    }
}

/// Departure map on continuous paths:
/// D_i(t) = S_i(t) + min(0, min_{s<=t} (A_i − S_i)(s)), the exact streaming
/// form of D_i(t) = min(S_i(t), inf_{s<=t} { S_i(t) − S_i(s) + A_i(s) }).
/// Requires S(0) = 0. In debug builds the direct-definition infimum is
/// re-evaluated at sampled knots as a cross-check.
pub fn phi(a: &PiecewiseVector, s: &PiecewiseVector, t_end: f64) -> Result<PiecewiseVector> {
    if a.dim() != s.dim() {
        return Err(Error::invalid("phi: dimension mismatch"));
    }
    let mut comps = Vec::with_capacity(a.dim());
    for (ai, si) in a.components.iter().zip(&s.components) {
        if si.eval(0.0).abs() > 1e-12 {
            return Err(Error::invalid("phi: service path must start at 0"));
        }
        comps.push(phi_scalar(ai, si, t_end)?);
    }
    Ok(VectorPath { components: comps })
}

fn phi_scalar(a: &PiecewisePath, s: &PiecewisePath, t_end: f64) -> Result<PiecewisePath> {
    let a = a.extend_to(t_end);
    let s = s.extend_to(t_end);
    let z = Polyline::from_difference(&a, &s, t_end);
    let m = running_min(&z);
    let mut knots: Vec<f64> = merge_knots(&[&s], t_end);
    knots.extend(m.points.iter().map(|p| p.0));
    for w in m.points.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if v0 > 0.0 && v1 < 0.0 {
            knots.push(t0 + (0.0 - v0) * (t1 - t0) / (v1 - v0));
        }
    }
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();
    let mut points: Vec<(f64, f64)> = knots
        .into_iter()
        .map(|t| (t, s.eval(t) + m.eval(t).min(0.0)))
        .collect();
    monotone_snap(&mut points);
    let d = PiecewisePath::new(points, 0.0)?.simplify();
    #[cfg(debug_assertions)]
    {
        let kn = d.knots();
        let stride = (kn.len() / 16).max(1);
        for t in kn.iter().step_by(stride) {
            let want = crate::testkit::phi_value_bruteforce(&a, &s, *t);
            let got = d.eval(*t);
            debug_assert!(
                (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                "phi mismatch at t={t}: streaming {got} vs definition {want}"
            );
        }
    }
    Ok(d)
}

/// Routing composition on continuous paths:
/// A_i(t) = N_i(t) + Σ_j P^(j,i)(D_j(t)). Exact: composition knots are the
/// D-knots plus preimages of routing u-knots under each D_j.
pub fn gamma(
    d: &PiecewiseVector,
    p: &RoutingPath<PiecewisePath>,
    n: &PiecewiseVector,
    t_end: f64,
) -> Result<PiecewiseVector> {
    let k = d.dim();
    if p.dim() != k || n.dim() != k {
        return Err(Error::invalid("gamma: dimension mismatch"));
    }
    for j in 0..k {
        let reach = d.components[j].eval(t_end);
        let avail = p.row(j).iter().map(|e| e.horizon()).fold(f64::INFINITY, f64::min);
        if reach > avail + 1e-9 {
            return Err(Error::invalid(format!(
                "gamma: routing path row {j} defined up to u={avail} but departures reach {reach}"
            )));
        }
    }
    let mut comps = Vec::with_capacity(k);
    for i in 0..k {
        let mut terms: Vec<PiecewisePath> = vec![n.components[i].extend_to(t_end)];
        for j in 0..k {
            terms.push(compose(p.entry(j, i), &d.components[j], t_end));
        }
        comps.push(sum_piecewise(&terms, t_end)?);
    }
    Ok(VectorPath { components: comps })
}

/// P(D(t)) for nondecreasing piecewise-linear P (in u) and D (in t).
fn compose(pe: &PiecewisePath, d: &PiecewisePath, t_end: f64) -> PiecewisePath {
    let d = d.extend_to(t_end);
    let mut knots = merge_knots(&[&d], t_end);
    let u_knots = pe.knots();
    for w in d.points().windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if v1 > v0 {
            for &u in &u_knots {
                if u > v0 && u < v1 {
                    knots.push(t0 + (u - v0) * (t1 - t0) / (v1 - v0));
                }
            }
        }
    }
    // tail segment of d beyond its last breakpoint
    let last = *d.points().last().unwrap();
    if t_end > last.0 && d.tail_slope() > 0.0 {
        for &u in &u_knots {
            if u > last.1 {
                let t = last.0 + (u - last.1) / d.tail_slope();
                if t < t_end {
                    knots.push(t);
                }
            }
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let mut points: Vec<(f64, f64)> = knots.into_iter().map(|t| (t, pe.eval(d.eval(t)))).collect();
    monotone_snap(&mut points);
    PiecewisePath::new(points, pe.tail_slope() * d.tail_slope())
        .expect("composition of nondecreasing paths is nondecreasing")
}

fn sum_piecewise(terms: &[PiecewisePath], t_end: f64) -> Result<PiecewisePath> {
    let refs: Vec<&PiecewisePath> = terms.iter().collect();
    let knots = merge_knots(&refs, t_end);
    let points = knots
        .into_iter()
        .map(|t| (t, terms.iter().map(|p| p.eval(t)).sum()))
        .collect();
    let tail = terms.iter().map(|p| p.tail_slope()).sum();
    Ok(PiecewisePath::new(points, tail)?.simplify())
}

/// Departure map on step paths, exact on the merged event grid.
pub fn phi_step(a: &StepVector, s: &StepVector, t_end: f64) -> Result<StepVector> {
    if a.dim() != s.dim() {
        return Err(Error::invalid("phi: dimension mismatch"));
    }
    let mut comps = Vec::with_capacity(a.dim());
    for (ai, si) in a.components.iter().zip(&s.components) {
        if si.eval(0.0).abs() > 1e-12 {
            return Err(Error::invalid("phi: service path must start at 0"));
        }
        let mut events: Vec<f64> = ai
            .jumps()
            .iter()
            .chain(si.jumps())
            .map(|&(t, _)| t)
            .filter(|&t| t <= t_end)
            .collect();
        events.sort_by(|x, y| x.partial_cmp(y).unwrap());
        events.dedup();
        let mut cur_min = ai.eval(0.0) - si.eval(0.0);
        let mut prev_d = si.eval(0.0) + cur_min.min(0.0);
        let d0 = prev_d;
        let mut jumps = Vec::new();
        for &t in &events {
            let z = ai.eval(t) - si.eval(t);
            cur_min = cur_min.min(z);
            let dv = si.eval(t) + cur_min.min(0.0);
            if dv > prev_d {
                jumps.push((t, dv - prev_d));
                prev_d = dv;
            }
        }
        comps.push(StepPath::new(d0.max(0.0), jumps, t_end.max(ai.horizon()))?);
    }
    Ok(VectorPath { components: comps })
}

/// Routing composition on step paths: exact evaluation at departure jump
/// times.
pub fn gamma_step(
    d: &StepVector,
    p: &RoutingPath<StepPath>,
    n: &StepVector,
    t_end: f64,
) -> Result<StepVector> {
    let k = d.dim();
    if p.dim() != k || n.dim() != k {
        return Err(Error::invalid("gamma: dimension mismatch"));
    }
    for j in 0..k {
        let reach = d.components[j].eval(t_end);
        let avail = p.row(j).iter().map(|e| e.horizon()).fold(f64::INFINITY, f64::min);
        if reach > avail + 1e-9 {
            return Err(Error::invalid(format!(
                "gamma: routing path row {j} defined up to u={avail} but departures reach {reach}"
            )));
        }
    }
    let mut comps = Vec::with_capacity(k);
    for i in 0..k {
        let mut events: Vec<f64> = n.components[i]
            .jumps()
            .iter()
            .map(|&(t, _)| t)
            .filter(|&t| t <= t_end)
            .collect();
        for j in 0..k {
            events.extend(
                d.components[j]
                    .jumps()
                    .iter()
                    .map(|&(t, _)| t)
                    .filter(|&t| t <= t_end),
            );
        }
        events.sort_by(|x, y| x.partial_cmp(y).unwrap());
        events.dedup();
        let value_at = |t: f64| -> f64 {
            let mut v = n.components[i].eval(t);
            for j in 0..k {
                // counting-path compositions hit routing jumps exactly at
                // u = count; a hair of slack keeps a jump included when the
                // composed value sits an ulp below it (jump spacing in
                // counting nets is many orders larger than the slack)
                let dv = d.components[j].eval(t);
                v += p.entry(j, i).eval(dv + 1e-12 * (1.0 + dv.abs()));
            }
            v
        };
        let mut prev = value_at(0.0);
        let init = prev;
        let mut jumps = Vec::new();
        for &t in &events {
            if t == 0.0 {
                continue;
            }
            let v = value_at(t);
            if v > prev {
                jumps.push((t, v - prev));
                prev = v;
            }
        }
        comps.push(StepPath::new(init, jumps, t_end)?);
    }
    Ok(VectorPath { components: comps })
}

/// Fixed-point residual ‖(A − Γ(D, Net), D − Φ(A, S))‖ over [0, T].
pub fn residual_g(
    net: &NetworkPaths<PiecewisePath>,
    a: &PiecewiseVector,
    d: &PiecewiseVector,
    t_end: f64,
) -> Result<f64> {
    let ga = gamma(d, &net.p, &net.n, t_end)?;
    let ph = phi(a, &net.s, t_end)?;
    Ok(sup_distance(a, &ga, t_end).max(sup_distance(d, &ph, t_end)))
}

/// Fixed-point residual for counting (step) networks in scaled units.
pub fn residual_g_step(
    net: &NetworkPaths<StepPath>,
    a: &StepVector,
    d: &StepVector,
    t_end: f64,
) -> Result<f64> {
    let ga = gamma_step(d, &net.p, &net.n, t_end)?;
    let ph = phi_step(a, &net.s, t_end)?;
    Ok(sup_distance(a, &ga, t_end).max(sup_distance(d, &ph, t_end)))
}

/// Arrivals and departures solving (or approximating) the network fixed
/// point; queues are derived as Q = A − D.
#[derive(Clone, Debug)]
pub struct FlowSolution<C: Curve> {
    pub arrivals: VectorPath<C>,
    pub departures: VectorPath<C>,
}

impl<C: Curve> FlowSolution<C> {
    pub fn dim(&self) -> usize {
        self.arrivals.dim()
    }

    pub fn queue_at(&self, t: f64) -> Vec<f64> {
        self.arrivals
            .eval(t)
            .into_iter()
            .zip(self.departures.eval(t))
            .map(|(a, d)| (a - d).max(0.0))
            .collect()
    }

    /// Checks D(0) = 0, D <= A, D <= S, Q >= 0 on the merged knot grid.
    pub fn check_invariants(&self, s: &VectorPath<C>, t_end: f64) -> Result<()> {
        for (i, (di, ai)) in self
            .departures
            .components
            .iter()
            .zip(&self.arrivals.components)
            .enumerate()
        {
            if di.eval(0.0).abs() > 1e-9 {
                return Err(Error::validation(format!("D[{i}](0) != 0")));
            }
            let si = &s.components[i];
            let mut ks = di.knots();
            ks.extend(ai.knots());
            ks.extend(si.knots());
            ks.push(t_end);
            for &t in &ks {
                if t > t_end {
                    continue;
                }
                let (dv, av, sv) = (di.eval(t), ai.eval(t), si.eval(t));
                let scale = 1.0 + av.abs().max(sv.abs());
                if dv > av + 1e-9 * scale {
                    return Err(Error::validation(format!("D[{i}]({t}) > A[{i}]({t})")));
                }
                if dv > sv + 1e-9 * scale {
                    return Err(Error::validation(format!("D[{i}]({t}) > S[{i}]({t})")));
                }
            }
        }
        Ok(())
    }
}

/// Time-shift restart: given D = Φ(A, S) and a shift u, returns
/// Ã(t) = A(t+u) − D(u) and S̃(t) = S(t+u) − S(u). The defining identity
/// Φ(Ã, S̃)(t) = D(t+u) − D(u) is asserted before returning.
pub fn shift_restart(
    a: &PiecewisePath,
    s: &PiecewisePath,
    d: &PiecewisePath,
    u: f64,
) -> Result<(PiecewisePath, PiecewisePath)> {
    if u < 0.0 {
        return Err(Error::invalid("shift_restart: u must be >= 0"));
    }
    let t_end = a.horizon().max(s.horizon()).max(u);
    let rebase = |p: &PiecewisePath, offset: f64| -> Result<PiecewisePath> {
        let p = p.extend_to(t_end);
        let mut pts = vec![(0.0, p.eval(u) - offset)];
        for &(t, v) in p.points() {
            if t > u {
                pts.push((t - u, v - offset));
            }
        }
        PiecewisePath::new(pts, p.tail_slope())
    };
    let a_shift = rebase(a, d.eval(u))?;
    let s_shift = rebase(s, s.eval(u))?;
    // assert the restart identity against the shifted departures
    let horizon = t_end - u;
    let d_shift = rebase(d, d.eval(u))?;
    let got = phi_scalar(&a_shift, &s_shift, horizon)?;
    let gap = crate::paths::sup_distance_scalar(&got, &d_shift, horizon);
    if gap > 1e-9 * (1.0 + d.eval(t_end).abs()) {
        return Err(Error::validation(format!(
            "shift_restart: departures inconsistent with (A, S): identity gap {gap}"
        )));
    }
    Ok((a_shift, s_shift))
}
