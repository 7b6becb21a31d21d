//! Rate-function machinery: scalar Legendre transforms for renewal inputs,
//! the exit-extended routing divergence, exact path-level rates for
//! piecewise-linear inputs, and the variational local rates solved over the
//! flow polytope.
//!
//! Everything here is [0, ∞]-valued; `f64::INFINITY` is a legitimate result
//! and short-circuits sums. All minimizations are convex once the empty-
//! station service indicator is split into regimes, so solver answers are
//! cross-checkable against grid search.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::network::{NetworkPaths, RateModel, RateSpec};
use crate::opt::{self, AffineSet, Lp, LpOutcome, PgOpts, Polyhedron};
use crate::paths::{Curve, PiecewisePath, PiecewiseVector, QueueVector, SignedPath};
use crate::{Error, Result};

/// Objective values above this are treated as an infinite supremum.
const SUP_HUGE: f64 = 1e12;
/// Agreement required between the two equivalent renewal-rate formulas.
const G_CROSS_TOL: f64 = 1e-8;
/// Exact-zero tolerance for empty-station membership.
const EMPTY_TOL: f64 = 1e-12;
/// Slack for constraint noise left by projections.
const FEAS_TOL: f64 = 1e-9;

fn exp2i(k: i32) -> f64 {
    2f64.powi(k)
}

/// Maximizes a concave objective over θ < theta_star (unbounded below).
///
/// The domain is probed geometrically toward both ends; an unbounded
/// supremum is detected either by the objective exceeding `SUP_HUGE` or by
/// the objective still climbing at the outermost probe. Otherwise the
/// bracketed maximum is refined by derivative bisection when a derivative is
/// supplied and by golden section when not. The objective must return +∞ or
/// NaN outside its domain; both are treated as "not attained here".
fn sup_concave(
    f: &dyn Fn(f64) -> f64,
    df: Option<&dyn Fn(f64) -> f64>,
    theta_star: f64,
) -> f64 {
    let eval = |t: f64| -> f64 {
        let v = f(t);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut probes: Vec<f64> = Vec::with_capacity(140);
    for k in (0..=60).rev() {
        probes.push(-exp2i(k));
    }
    probes.push(-0.5);
    probes.push(0.0);
    if theta_star.is_finite() {
        probes.retain(|&t| t < theta_star);
        let scale = theta_star.abs().max(1.0);
        for k in 0..=60 {
            let t = theta_star - scale * exp2i(-k);
            if probes.last().map_or(true, |&last| t > last) {
                probes.push(t);
            }
        }
    } else {
        probes.push(0.5);
        for k in 0..=60 {
            probes.push(exp2i(k));
        }
    }
    let vals: Vec<(f64, f64)> = probes.iter().map(|&t| (t, eval(t))).collect();
    let mut bi = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.1 > vals[bi].1 {
            bi = i;
        }
    }
    let best = vals[bi].1;
    if best > SUP_HUGE {
        return f64::INFINITY;
    }
    let climbing = |a: f64, b: f64| a > b + 1e-9 * (1.0 + b.abs());
    if bi == 0 && vals.len() > 1 && climbing(best, vals[1].1) {
        return f64::INFINITY;
    }
    if bi + 1 == vals.len()
        && theta_star.is_infinite()
        && vals.len() > 1
        && climbing(best, vals[bi - 1].1)
    {
        return f64::INFINITY;
    }
    let lo = if bi == 0 { vals[0].0 } else { vals[bi - 1].0 };
    let hi = if bi + 1 == vals.len() {
        vals[bi].0
    } else {
        vals[bi + 1].0
    };
    let mut refined = best;
    let mut done = false;
    if let Some(df) = df {
        let (da, db) = (df(lo), df(hi));
        if da.is_finite() && db.is_finite() && da >= 0.0 && db <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let dm = df(m);
                if !dm.is_finite() {
                    break;
                }
                if dm > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            refined = refined.max(eval(0.5 * (a + b)));
            done = true;
        }
    }
    if !done && hi > lo {
        let tol = (hi - lo) * 1e-12 + 1e-13;
        let (_, neg) = opt::golden_min(|t| -eval(t), lo, hi, tol);
        refined = refined.max(-neg);
    }
    if refined > SUP_HUGE {
        return f64::INFINITY;
    }
    refined
}

/// Log moment generating function α of a renewal increment, supplied as a
/// callable together with θ* = sup{θ : α(θ) < ∞}, with the derived convex
/// conjugate α* and path-rate density g(x) = x·α*(1/x).
///
/// Requirements on α: convex, α(0) = 0, and +∞ (or NaN) beyond θ*.
/// Conjugate values are cached; the cache is synchronized so machines can be
/// shared across threads.
pub struct LegendreMachine {
    alpha: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    slope: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    theta_star: f64,
    cache: Mutex<HashMap<u64, f64>>,
}

impl LegendreMachine {
    pub fn new(theta_star: f64, alpha: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let m = LegendreMachine {
            alpha: Arc::new(alpha),
            slope: None,
            theta_star,
            cache: Mutex::new(HashMap::new()),
        };
        debug_assert!((m.alpha)(0.0).abs() <= 1e-12, "alpha(0) must vanish");
        m
    }

    /// Same as `new` but with the derivative α′, which sharpens the inner
    /// maximizations from golden section to derivative bisection.
    pub fn with_slope(
        theta_star: f64,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let mut m = LegendreMachine::new(theta_star, alpha);
        m.slope = Some(Arc::new(slope));
        m
    }

    /// Machine for exponential increments with the given rate:
    /// α(θ) = −log(1 − θ/rate), θ* = rate.
    pub fn exponential(rate: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite());
        LegendreMachine::with_slope(
            rate,
            move |t| {
                if t < rate {
                    -(1.0 - t / rate).ln()
                } else {
                    f64::INFINITY
                }
            },
            move |t| 1.0 / (rate - t),
        )
    }

    /// Machine for a point mass at `interval`: α(θ) = θ·interval, θ* = ∞.
    pub fn deterministic(interval: f64) -> Self {
        assert!(interval > 0.0 && interval.is_finite());
        LegendreMachine::with_slope(f64::INFINITY, move |t| t * interval, move |_| interval)
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    /// Convex conjugate α*(x) = sup_{θ<θ*} {θx − α(θ)}.
    ///
    /// Nonnegative (θ = 0 is always a candidate) and zero at the mean
    /// increment. Returns +∞ when the supremum is unbounded.
    pub fn conjugate(&self, x: f64) -> f64 {
        let key = x.to_bits();
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return v;
        }
        let alpha = &self.alpha;
        let obj = move |t: f64| t * x - alpha(t);
        let v = match &self.slope {
            Some(sl) => {
                let d = move |t: f64| x - sl(t);
                sup_concave(&obj, Some(&d), self.theta_star)
            }
            None => sup_concave(&obj, None, self.theta_star),
        };
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    /// Renewal path-rate density g(x) = x·α*(1/x): the exponential cost per
    /// unit time of running the renewal process at rate x.
    ///
    /// Evaluated both as x·α*(1/x) and as sup_{θ<θ*} {θ − x·α(θ)}; the two
    /// must agree within `G_CROSS_TOL` (they are algebraically identical but
    /// follow different numeric paths). g(0) is the limit sup_{θ<θ*} θ = θ*.
    pub fn g(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::INFINITY;
        }
        if x == 0.0 {
            return self.theta_star;
        }
        let conj = self.conjugate(1.0 / x);
        let v1 = if conj.is_finite() {
            x * conj
        } else {
            f64::INFINITY
        };
        let alpha = &self.alpha;
        let obj = move |t: f64| t - x * alpha(t);
        let v2 = match &self.slope {
            Some(sl) => {
                let d = move |t: f64| 1.0 - x * sl(t);
                sup_concave(&obj, Some(&d), self.theta_star)
            }
            None => sup_concave(&obj, None, self.theta_star),
        };
        if v1.is_finite() != v2.is_finite() {
            let fin = if v1.is_finite() { v1 } else { v2 };
            assert!(
                fin > 1e8,
                "renewal rate formulas disagree at x={x}: {v1} vs {v2}"
            );
            return f64::INFINITY;
        }
        if v1.is_finite() {
            assert!(
                (v1 - v2).abs() <= G_CROSS_TOL * (1.0 + v1.abs()),
                "renewal rate formulas disagree at x={x}: {v1} vs {v2}"
            );
        }
        v1
    }
}

/// Kullback-Leibler divergence between two substochastic routing rows after
/// appending the exit mass that makes each row stochastic.
///
/// Conventions: 0·log 0 = 0 and p·log(p/0) = ∞ for p > 0. Entries below
/// −1e−12 or row sums beyond 1 + 1e−9 are not derivatives of admissible
/// routing paths and price to ∞.
pub fn kl_tilde(p_row: &[f64], r_row: &[f64]) -> f64 {
    assert_eq!(p_row.len(), r_row.len(), "row length mismatch");
    let clean = |row: &[f64]| -> Option<(Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(row.len() + 1);
        let mut sum = 0.0;
        for &v in row {
            if v < -1e-12 {
                return None;
            }
            let v = v.max(0.0);
            out.push(v);
            sum += v;
        }
        let exit = 1.0 - sum;
        if exit < -1e-9 {
            return None;
        }
        out.push(exit.max(0.0));
        Some((out, sum))
    };
    let Some((p, _)) = clean(p_row) else {
        return f64::INFINITY;
    };
    let Some((r, _)) = clean(r_row) else {
        return f64::INFINITY;
    };
    let mut total = 0.0;
    for (&pi, &ri) in p.iter().zip(&r) {
        if pi <= 0.0 {
            continue;
        }
        if ri <= 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / ri).ln();
    }
    total.max(0.0)
}

/// Perspective form d·kl_tilde(row/d, r_row), extended by continuity to
/// d = 0 (zero when the flow row vanishes, ∞ otherwise). Jointly convex in
/// (row, d).
pub fn perspective_kl(flow_row: &[f64], d: f64, r_row: &[f64]) -> f64 {
    if d <= 1e-15 {
        return if flow_row.iter().all(|&f| f.abs() <= 1e-11) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let scaled: Vec<f64> = flow_row.iter().map(|&f| f / d).collect();
    d * kl_tilde(&scaled, r_row)
}

/// Effective domain of a rate family, as closed bounds (upper may be +∞).
fn rate_domain(spec: &RateSpec) -> (f64, f64) {
    match spec {
        RateSpec::Poisson { .. } => (0.0, f64::INFINITY),
        RateSpec::Deterministic { interval } => {
            let m = 1.0 / interval;
            (m, m)
        }
        RateSpec::Tabulated { points } => (points[0].0, points[points.len() - 1].0),
    }
}

/// Subgradient of a rate family at x (right slope for the table family).
fn rate_slope(spec: &RateSpec, x: f64) -> f64 {
    match spec {
        RateSpec::Poisson { rate } => (x.max(1e-300) / rate).ln(),
        RateSpec::Deterministic { .. } => 0.0,
        RateSpec::Tabulated { points } => {
            let x = x.clamp(points[0].0, points[points.len() - 1].0);
            let mut lo = 0;
            while lo + 2 < points.len() && points[lo + 1].0 <= x {
                lo += 1;
            }
            (points[lo + 1].1 - points[lo].1) / (points[lo + 1].0 - points[lo].0)
        }
    }
}

/// A local-rate evaluation point: either arrival/departure states with their
/// velocities, or a queue state with its velocity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LocalRateProblem {
    Flows {
        a: Vec<f64>,
        d: Vec<f64>,
        da: Vec<f64>,
        dd: Vec<f64>,
    },
    Queue {
        q: Vec<f64>,
        dq: Vec<f64>,
    },
}

/// Minimizer report from a local-rate evaluation. `value` is the extended
/// real rate; `departures`, `routing`, and `exogenous` are the minimizing
/// velocities (inputs echo back where the problem pins them). `note`
/// explains an infinite value.
#[derive(Clone, Debug, Serialize)]
pub struct LocalRateSolution {
    pub value: f64,
    pub departures: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
    pub exogenous: Vec<f64>,
    pub note: Option<String>,
}

pub fn local_rate(problem: &LocalRateProblem, model: &RateModel) -> Result<LocalRateSolution> {
    match problem {
        LocalRateProblem::Flows { a, d, da, dd } => local_rate_h(model, a, d, da, dd),
        LocalRateProblem::Queue { q, dq } => local_rate_hq(model, q, dq),
    }
}

/// Minimizes a convex objective over the polytope described twice: once as a
/// `Polyhedron` for projected gradient, once as an `Lp` (feasibility and the
/// linear oracle). Returns None when the polytope is empty.
///
/// Projected gradient runs from every supplied start plus a feasibility
/// vertex. The perspective terms have direction-dependent one-sided
/// derivatives on the faces where a departure velocity vanishes, so a single
/// run can stall on a spurious corner; the extra starts (callers pass the
/// analytic candidates) and a convex line search between every pair of
/// candidates afterwards recover the basin. Frank-Wolfe takes over when the
/// projection path ends non-finite or visibly infeasible.
fn solve_polytope(
    poly: &Polyhedron,
    lp: &Lp,
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    starts: &[Vec<f64>],
) -> Result<Option<(Vec<f64>, f64)>> {
    let feasible = match opt::solve_lp(lp)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Unbounded => {
            return Err(Error::numeric("feasibility program reported unbounded"))
        }
    };
    let opts = PgOpts {
        max_iters: 8000,
        f_tol: 1e-12,
    };
    let mut seen: Vec<(Vec<f64>, f64)> = Vec::new();
    let push = |x: Vec<f64>, v: f64, seen: &mut Vec<(Vec<f64>, f64)>| {
        seen.push((x, v));
    };
    for s in starts {
        let x0 = poly.project(s);
        let v0 = f(&x0);
        let (x, v) = opt::minimize_pg(poly, f, grad, x0.clone(), &opts);
        push(x0, v0, &mut seen);
        push(x, v, &mut seen);
    }
    push(feasible.clone(), f(&feasible), &mut seen);
    let mut bi = 0;
    for (i, c) in seen.iter().enumerate() {
        if c.1 < seen[bi].1 {
            bi = i;
        }
    }
    let (mut bx, mut bf) = seen[bi].clone();
    // objective is convex along any segment inside the polytope, so a 1-d
    // search between candidates cannot leave the feasible set and always
    // dominates both endpoints
    for (c, _) in &seen {
        let seg = |t: f64| -> f64 {
            let p: Vec<f64> = bx
                .iter()
                .zip(c)
                .map(|(&a, &b)| a + t * (b - a))
                .collect();
            f(&p)
        };
        let (t, v) = opt::golden_min(&seg, 0.0, 1.0, 1e-12);
        if v < bf {
            bx = bx
                .iter()
                .zip(c)
                .map(|(&a, &b)| a + t * (b - a))
                .collect();
            bf = v;
        }
    }
    // one more projected-gradient descent from the polished point sharpens
    // the line-search answer back to solver accuracy
    let (px, pv) = opt::minimize_pg(poly, f, grad, bx.clone(), &opts);
    if pv < bf {
        bx = px;
        bf = pv;
    }
    if !bf.is_finite() || poly.violation(&bx) > 1e-7 {
        let (fx, ff) = opt::minimize_fw(lp, f, grad, feasible, 20_000)?;
        if ff < bf || !bf.is_finite() {
            bx = fx;
            bf = ff;
        }
    }
    Ok(Some((bx, bf)))
}

fn check_lengths(model: &RateModel, slices: &[&[f64]]) -> Result<()> {
    for s in slices {
        if s.len() != model.dim() {
            return Err(Error::invalid("vector length must equal station count"));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("values must be finite"));
        }
    }
    Ok(())
}

fn clamp_velocity(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|&x| x < -FEAS_TOL) {
        return Err(Error::validation("velocities must be nonnegative"));
    }
    Ok(v.iter().map(|&x| x.max(0.0)).collect())
}

/// Instantaneous rate of an (arrival, departure) pair: the cheapest routing
/// and exogenous velocities producing arrival velocity `da` from departure
/// velocity `dd`, plus the service cost of `dd` itself. Stations with equal
/// arrival and departure states (within `EMPTY_TOL`) only pay for departure
/// velocities above the service minimizer.
pub fn local_rate_h(
    model: &RateModel,
    a: &[f64],
    d: &[f64],
    da: &[f64],
    dd: &[f64],
) -> Result<LocalRateSolution> {
    let k = model.dim();
    check_lengths(model, &[a, d, da, dd])?;
    let da = clamp_velocity(da)?;
    let dd = clamp_velocity(dd)?;
    for i in 0..k {
        if d[i] > a[i] + FEAS_TOL * (1.0 + a[i].abs()) {
            return Err(Error::validation(
                "departures may not exceed arrivals at any station",
            ));
        }
    }
    let empty: Vec<bool> = (0..k)
        .map(|i| (a[i] - d[i]).abs() <= EMPTY_TOL * (1.0 + a[i].abs()))
        .collect();

    // Service cost is fixed by dd; only routing and exogenous split is free.
    let mut service = 0.0;
    for i in 0..k {
        let spec = &model.service[i];
        let c = if empty[i] && dd[i] <= spec.minimizer() {
            0.0
        } else {
            spec.evaluate(dd[i])
        };
        service += c;
    }
    let fallback_routing = || (0..k).map(|i| model.routing.row(i).to_vec()).collect();
    if !service.is_finite() {
        return Ok(LocalRateSolution {
            value: f64::INFINITY,
            departures: dd.clone(),
            routing: fallback_routing(),
            exogenous: vec![0.0; k],
            note: Some(
                "service velocity outside the admissible range at a busy station".into(),
            ),
        });
    }

    // Flow variables x[i*k + j] = dd_i * P_ij.
    let n = k * k;
    let idx = |i: usize, j: usize| i * k + j;
    let mut a_eq: Vec<Vec<f64>> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    let mut a_ub: Vec<Vec<f64>> = Vec::new();
    let mut b_ub: Vec<f64> = Vec::new();
    let mut hi = vec![f64::INFINITY; n];
    for i in 0..k {
        for j in 0..k {
            if model.routing.entry(i, j) <= 0.0 || dd[i] <= 1e-15 {
                hi[idx(i, j)] = 0.0;
            } else {
                hi[idx(i, j)] = dd[i];
            }
        }
        if dd[i] <= 1e-15 {
            continue;
        }
        let mut row = vec![0.0; n];
        for j in 0..k {
            row[idx(i, j)] = 1.0;
        }
        if model.routing.exit_probability(i) <= 1e-14 {
            a_eq.push(row);
            b_eq.push(dd[i]);
        } else {
            a_ub.push(row);
            b_ub.push(dd[i]);
        }
    }
    for j in 0..k {
        let mut col = vec![0.0; n];
        for i in 0..k {
            col[idx(i, j)] = 1.0;
        }
        match &model.exogenous[j] {
            None => {
                a_eq.push(col);
                b_eq.push(da[j]);
            }
            Some(spec) => {
                let (lo_n, hi_n) = rate_domain(spec);
                if lo_n == hi_n {
                    a_eq.push(col);
                    b_eq.push(da[j] - lo_n);
                } else {
                    a_ub.push(col.clone());
                    b_ub.push(da[j] - lo_n);
                    if hi_n.is_finite() {
                        a_ub.push(col.iter().map(|v| -v).collect());
                        b_ub.push(hi_n - da[j]);
                    }
                }
            }
        }
    }

    let mut lp = Lp {
        n,
        c: vec![0.0; n],
        a_eq: a_eq.clone(),
        b_eq: b_eq.clone(),
        a_ub: a_ub.clone(),
        b_ub: b_ub.clone(),
    };
    for (v, &h) in hi.iter().enumerate() {
        if h.is_finite() {
            let mut e = vec![0.0; n];
            e[v] = 1.0;
            lp.a_ub.push(e);
            lp.b_ub.push(h);
        }
    }
    let poly = Polyhedron {
        affine: AffineSet::new(&a_eq, &b_eq, n)?,
        lo: vec![0.0; n],
        hi,
        halfspaces: a_ub.into_iter().zip(b_ub).collect(),
    };

    let exo_specs = model.exogenous.clone();
    let routing = model.routing.clone();
    let dd_f = dd.clone();
    let da_f = da.clone();
    let f = move |x: &[f64]| -> f64 {
        let mut val = 0.0;
        for i in 0..k {
            val += perspective_kl(&x[i * k..(i + 1) * k], dd_f[i], routing.row(i));
            if !val.is_finite() {
                return f64::INFINITY;
            }
        }
        for j in 0..k {
            let inflow: f64 = (0..k).map(|i| x[i * k + j]).sum();
            let nj = da_f[j] - inflow;
            if nj < -FEAS_TOL {
                return f64::INFINITY;
            }
            let nj = nj.max(0.0);
            match &exo_specs[j] {
                Some(spec) => val += spec.evaluate(nj),
                None => {
                    if nj > FEAS_TOL {
                        return f64::INFINITY;
                    }
                }
            }
            if !val.is_finite() {
                return f64::INFINITY;
            }
        }
        val
    };
    let exo_specs = model.exogenous.clone();
    let routing = model.routing.clone();
    let dd_g = dd.clone();
    let da_g = da.clone();
    let grad = move |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        for i in 0..k {
            if dd_g[i] <= 1e-15 {
                continue;
            }
            let row_sum: f64 = x[i * k..(i + 1) * k].iter().sum();
            let exit = (dd_g[i] - row_sum).max(1e-300);
            let re = model_exit(&routing, i).max(1e-300);
            let log_exit = (exit / (dd_g[i] * re)).ln();
            for j in 0..k {
                let r = routing.entry(i, j);
                if r > 0.0 {
                    g[i * k + j] =
                        (x[i * k + j].max(1e-300) / (dd_g[i] * r)).ln() - log_exit;
                }
            }
        }
        for j in 0..k {
            if let Some(spec) = &exo_specs[j] {
                let inflow: f64 = (0..k).map(|i| x[i * k + j]).sum();
                let slope = rate_slope(spec, (da_g[j] - inflow).max(0.0));
                for i in 0..k {
                    g[i * k + j] -= slope;
                }
            }
        }
        g
    };

    let start: Vec<f64> = (0..n)
        .map(|v| {
            let (i, j) = (v / k, v % k);
            dd[v / k] * model.routing.entry(i, j)
        })
        .collect();
    let Some((x, flow_val)) = solve_polytope(&poly, &lp, &f, &grad, &[start])? else {
        return Ok(LocalRateSolution {
            value: f64::INFINITY,
            departures: dd.clone(),
            routing: fallback_routing(),
            exogenous: vec![0.0; k],
            note: Some(format!(
                "no admissible routing/exogenous split reaches arrival velocity {:?} from departure velocity {:?}",
                da, dd
            )),
        });
    };

    let mut routing_rows = Vec::with_capacity(k);
    for i in 0..k {
        if dd[i] > 1e-12 {
            routing_rows.push(
                (0..k)
                    .map(|j| (x[idx(i, j)] / dd[i]).clamp(0.0, 1.0))
                    .collect(),
            );
        } else {
            // Any row is optimal when nothing departs; echo the nominal one.
            routing_rows.push(model.routing.row(i).to_vec());
        }
    }
    let mut exo = vec![0.0; k];
    for j in 0..k {
        if model.exogenous[j].is_some() {
            let inflow: f64 = (0..k).map(|i| x[idx(i, j)]).sum();
            exo[j] = (da[j] - inflow).max(0.0);
        }
    }
    Ok(LocalRateSolution {
        value: (service + flow_val).max(0.0),
        departures: dd,
        routing: routing_rows,
        exogenous: exo,
        note: None,
    })
}

fn model_exit(routing: &crate::network::RoutingMatrix, i: usize) -> f64 {
    routing.exit_probability(i)
}

/// Instantaneous rate of a queue state and velocity: minimizes jointly over
/// departure, routing, and exogenous velocities subject to
/// dq = N + (Pᵀ − Id)·D. Stations with zero queue may run the server below
/// its minimizer for free; that indicator is handled exactly by enumerating
/// the 2^|empty| cost regimes, each of which is convex.
pub fn local_rate_hq(model: &RateModel, q: &[f64], dq: &[f64]) -> Result<LocalRateSolution> {
    let k = model.dim();
    check_lengths(model, &[q, dq])?;
    let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if q.iter().any(|&v| v < -FEAS_TOL * scale) {
        return Err(Error::validation("queue lengths must be nonnegative"));
    }
    let q: Vec<f64> = q
        .iter()
        .map(|&v| if v.abs() <= EMPTY_TOL * scale { 0.0 } else { v })
        .collect();
    let empty: Vec<usize> = (0..k).filter(|&i| q[i] == 0.0).collect();
    if empty.len() > 20 {
        return Err(Error::validation(
            "more than 20 empty stations; cost-regime enumeration refused",
        ));
    }

    // Generous solver box; any minimizer this large signals a modeling error.
    let cap = 20.0
        + 4.0
            * (0..k)
                .map(|i| {
                    model.service[i].minimizer()
                        + model.exogenous[i].as_ref().map_or(0.0, |e| e.minimizer())
                        + dq[i].abs()
                })
                .sum::<f64>();

    let mut best: Option<(f64, Vec<f64>, Vec<bool>)> = None;
    for mask in 0u32..(1u32 << empty.len()) {
        let mut costly = vec![true; k];
        for (b, &i) in empty.iter().enumerate() {
            costly[i] = mask & (1 << b) != 0;
        }
        match hq_regime(model, &q, dq, &costly, cap)? {
            None => continue,
            Some((val, z)) => {
                if best.as_ref().map_or(true, |(bv, _, _)| val < *bv) {
                    best = Some((val, z, costly));
                }
            }
        }
    }

    let Some((val, z, _)) = best else {
        return Ok(LocalRateSolution {
            value: f64::INFINITY,
            departures: vec![0.0; k],
            routing: (0..k).map(|i| model.routing.row(i).to_vec()).collect(),
            exogenous: vec![0.0; k],
            note: Some(format!(
                "no admissible (departure, routing, exogenous) velocities yield queue velocity {:?}",
                dq
            )),
        });
    };
    let d: Vec<f64> = z[..k].to_vec();
    if d.iter().any(|&v| v >= 0.95 * cap) {
        return Err(Error::numeric(
            "departure velocity minimizer reached the solver box",
        ));
    }
    let mut routing_rows = Vec::with_capacity(k);
    for i in 0..k {
        if d[i] > 1e-12 {
            routing_rows.push(
                (0..k)
                    .map(|j| (z[k + i * k + j] / d[i]).clamp(0.0, 1.0))
                    .collect(),
            );
        } else {
            routing_rows.push(model.routing.row(i).to_vec());
        }
    }
    let mut exo = vec![0.0; k];
    for j in 0..k {
        if model.exogenous[j].is_some() {
            let inflow: f64 = (0..k).map(|i| z[k + i * k + j]).sum();
            exo[j] = (dq[j] + d[j] - inflow).max(0.0);
        }
    }
    Ok(LocalRateSolution {
        value: val.max(0.0),
        departures: d,
        routing: routing_rows,
        exogenous: exo,
        note: None,
    })
}

/// One convex cost regime of the queue-velocity rate: `costly[i] = false`
/// (only possible at empty stations) bounds D_i ≤ μ_i and drops its service
/// cost; `costly[i] = true` prices I_S(D_i) and, at empty stations, bounds
/// D_i ≥ μ_i. Variables z = [D | F] with F the routing flows.
fn hq_regime(
    model: &RateModel,
    q: &[f64],
    dq: &[f64],
    costly: &[bool],
    cap: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    let k = model.dim();
    let n = k + k * k;
    let fidx = |i: usize, j: usize| k + i * k + j;

    let mut lo = vec![0.0; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut a_eq: Vec<Vec<f64>> = Vec::new();
    let mut b_eq: Vec<f64> = Vec::new();
    let mut a_ub: Vec<Vec<f64>> = Vec::new();
    let mut b_ub: Vec<f64> = Vec::new();

    for i in 0..k {
        let mu = model.service[i].minimizer();
        let (dom_lo, dom_hi) = rate_domain(&model.service[i]);
        let is_empty = q[i] == 0.0;
        if is_empty && !costly[i] {
            hi[i] = mu;
        } else if is_empty {
            lo[i] = mu;
            hi[i] = dom_hi.min(cap);
        } else {
            lo[i] = dom_lo.max(0.0);
            hi[i] = dom_hi.min(cap);
        }
        if hi[i] < lo[i] {
            return Ok(None);
        }
        for j in 0..k {
            if model.routing.entry(i, j) <= 0.0 {
                hi[fidx(i, j)] = 0.0;
            }
        }
        // row sum versus departures
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        for j in 0..k {
            row[fidx(i, j)] = 1.0;
        }
        if model.routing.exit_probability(i) <= 1e-14 {
            a_eq.push(row);
            b_eq.push(0.0);
        } else {
            a_ub.push(row);
            b_ub.push(0.0);
        }
    }
    for j in 0..k {
        // N_j = dq_j + D_j − inflow_j
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        for i in 0..k {
            row[fidx(i, j)] = -1.0;
        }
        match &model.exogenous[j] {
            None => {
                a_eq.push(row);
                b_eq.push(-dq[j]);
            }
            Some(spec) => {
                let (lo_n, hi_n) = rate_domain(spec);
                if lo_n == hi_n {
                    a_eq.push(row);
                    b_eq.push(lo_n - dq[j]);
                } else {
                    // N_j ≥ lo_n and, when bounded, N_j ≤ hi_n
                    a_ub.push(row.iter().map(|v| -v).collect());
                    b_ub.push(dq[j] - lo_n);
                    if hi_n.is_finite() {
                        a_ub.push(row);
                        b_ub.push(hi_n - dq[j]);
                    }
                }
            }
        }
    }

    let mut lp = Lp {
        n,
        c: vec![0.0; n],
        a_eq: a_eq.clone(),
        b_eq: b_eq.clone(),
        a_ub: a_ub.clone(),
        b_ub: b_ub.clone(),
    };
    for v in 0..n {
        if hi[v].is_finite() {
            let mut e = vec![0.0; n];
            e[v] = 1.0;
            lp.a_ub.push(e);
            lp.b_ub.push(hi[v]);
        }
        if lo[v] > 0.0 {
            let mut e = vec![0.0; n];
            e[v] = -1.0;
            lp.a_ub.push(e);
            lp.b_ub.push(-lo[v]);
        }
    }
    let poly = Polyhedron {
        affine: AffineSet::new(&a_eq, &b_eq, n)?,
        lo: lo.clone(),
        hi: hi.clone(),
        halfspaces: a_ub.into_iter().zip(b_ub).collect(),
    };

    let service = model.service.clone();
    let exo_specs = model.exogenous.clone();
    let routing = model.routing.clone();
    let costly_f = costly.to_vec();
    let q_f = q.to_vec();
    let dq_f = dq.to_vec();
    let f = move |z: &[f64]| -> f64 {
        let mut val = 0.0;
        for i in 0..k {
            let di = z[i];
            let is_empty = q_f[i] == 0.0;
            if !is_empty {
                val += service[i].evaluate(di);
            } else if costly_f[i] && di > service[i].minimizer() {
                val += service[i].evaluate(di);
            }
            val += perspective_kl(&z[k + i * k..k + (i + 1) * k], di, routing.row(i));
            if !val.is_finite() {
                return f64::INFINITY;
            }
        }
        for j in 0..k {
            let inflow: f64 = (0..k).map(|i| z[k + i * k + j]).sum();
            let nj = dq_f[j] + z[j] - inflow;
            if nj < -FEAS_TOL {
                return f64::INFINITY;
            }
            let nj = nj.max(0.0);
            match &exo_specs[j] {
                Some(spec) => val += spec.evaluate(nj),
                None => {
                    if nj > FEAS_TOL {
                        return f64::INFINITY;
                    }
                }
            }
            if !val.is_finite() {
                return f64::INFINITY;
            }
        }
        val
    };
    let service = model.service.clone();
    let exo_specs = model.exogenous.clone();
    let routing = model.routing.clone();
    let costly_g = costly.to_vec();
    let q_g = q.to_vec();
    let dq_g = dq.to_vec();
    let grad = move |z: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        let mut n_slopes = vec![0.0; k];
        for j in 0..k {
            if let Some(spec) = &exo_specs[j] {
                let inflow: f64 = (0..k).map(|i| z[k + i * k + j]).sum();
                n_slopes[j] = rate_slope(spec, (dq_g[j] + z[j] - inflow).max(0.0));
            }
        }
        for i in 0..k {
            let di = z[i];
            let is_empty = q_g[i] == 0.0;
            if !is_empty || (costly_g[i] && di > service[i].minimizer()) {
                g[i] += rate_slope(&service[i], di);
            }
            let row_sum: f64 = z[k + i * k..k + (i + 1) * k].iter().sum();
            let exit = (di - row_sum).max(1e-300);
            let re = routing.exit_probability(i).max(1e-300);
            let log_exit = (exit / (di.max(1e-300) * re)).ln();
            g[i] += log_exit;
            g[i] += n_slopes[i];
            for j in 0..k {
                let r = routing.entry(i, j);
                if r > 0.0 {
                    g[k + i * k + j] = (z[k + i * k + j].max(1e-300)
                        / (di.max(1e-300) * r))
                        .ln()
                        - log_exit
                        - n_slopes[j];
                }
            }
        }
        g
    };

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(2);
    let fill_flows = |z: &mut Vec<f64>| {
        for i in 0..k {
            for j in 0..k {
                z[k + i * k + j] = z[i] * model.routing.entry(i, j);
            }
        }
    };
    let mut mu_start = vec![0.0; n];
    for i in 0..k {
        mu_start[i] = model.service[i].minimizer().clamp(lo[i], hi[i]);
    }
    fill_flows(&mut mu_start);
    starts.push(mu_start);
    // natural-drift candidate: the D solving dq = λ* + (Rᵀ − I)D with the
    // exogenous sources at their minimizers; exactly optimal whenever it is
    // interior, and an excellent basin point otherwise
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            m[i * k + j] =
                (if i == j { 1.0 } else { 0.0 }) - model.routing.entry(j, i);
        }
    }
    let rhs: Vec<f64> = (0..k)
        .map(|j| model.exogenous[j].as_ref().map_or(0.0, |e| e.minimizer()) - dq[j])
        .collect();
    if let Ok(dnat) = crate::linalg::solve_dense(m, rhs) {
        let mut z = vec![0.0; n];
        for i in 0..k {
            z[i] = dnat[i].clamp(lo[i], hi[i]);
        }
        fill_flows(&mut z);
        starts.push(z);
    }
    Ok(solve_polytope(&poly, &lp, &f, &grad, &starts)?.map(|(z, v)| (v, z)))
}

/// Merged strictly increasing knot grid of several paths on [0, t_end].
fn merged_knots<C: Curve>(paths: &[&C], t_end: f64) -> Vec<f64> {
    let mut ts = vec![0.0, t_end];
    for p in paths {
        for t in p.knots() {
            if t > 0.0 && t < t_end {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(ts.len());
    for t in ts {
        if out.last().map_or(true, |&l| t - l > 1e-14 * (1.0 + t.abs())) {
            out.push(t);
        }
    }
    out
}

/// Path-level rate of a network triple over [0, t_end]: the exact segment
/// sum of the service and exogenous family costs plus the routing
/// divergence, with the zero-at-zero initial-condition rate. Routing rows
/// are integrated on their own parameter up to their last knot; a tail slope
/// that differs from the nominal matrix would price to ∞ over the unbounded
/// tail, so it does.
pub fn path_rate_net(
    net: &NetworkPaths<PiecewisePath>,
    model: &RateModel,
    t_end: f64,
) -> Result<f64> {
    let k = model.dim();
    if net.dim() != k {
        return Err(Error::invalid("network dimension mismatch"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("horizon must be positive and finite"));
    }
    for i in 0..k {
        if net.n.components[i].eval(0.0).abs() > 1e-12 {
            return Ok(f64::INFINITY);
        }
    }

    let mut total = 0.0;

    // service and exogenous terms share the time axis
    let time_paths: Vec<&PiecewisePath> = net
        .s
        .components
        .iter()
        .chain(net.n.components.iter())
        .collect();
    let grid = merged_knots(&time_paths, t_end);
    for w in grid.windows(2) {
        let (u, v) = (w[0], w[1]);
        let len = v - u;
        for i in 0..k {
            let sdot = (net.s.components[i].eval(v) - net.s.components[i].eval(u)) / len;
            if sdot < -FEAS_TOL {
                return Ok(f64::INFINITY);
            }
            total += len * model.service[i].evaluate(sdot.max(0.0));
            let ndot = (net.n.components[i].eval(v) - net.n.components[i].eval(u)) / len;
            match &model.exogenous[i] {
                Some(spec) => {
                    if ndot < -FEAS_TOL {
                        return Ok(f64::INFINITY);
                    }
                    total += len * spec.evaluate(ndot.max(0.0));
                }
                None => {
                    if ndot.abs() > FEAS_TOL {
                        return Ok(f64::INFINITY);
                    }
                }
            }
            if !total.is_finite() {
                return Ok(f64::INFINITY);
            }
        }
    }

    // routing terms live on each row's own parameter
    for j in 0..k {
        let row: Vec<&PiecewisePath> = net.p.row(j).iter().collect();
        let tail: Vec<f64> = row.iter().map(|p| p.tail_slope()).collect();
        if kl_tilde(&tail, model.routing.row(j)) > 1e-10 {
            return Ok(f64::INFINITY);
        }
        let uj = row
            .iter()
            .map(|p| p.points().last().unwrap().0)
            .fold(0.0f64, f64::max);
        if uj <= 0.0 {
            continue;
        }
        let grid = merged_knots(&row, uj);
        for w in grid.windows(2) {
            let (u, v) = (w[0], w[1]);
            let len = v - u;
            let slopes: Vec<f64> = row.iter().map(|p| (p.eval(v) - p.eval(u)) / len).collect();
            total += len * kl_tilde(&slopes, model.routing.row(j));
            if !total.is_finite() {
                return Ok(f64::INFINITY);
            }
        }
    }
    Ok(total)
}

/// Integral of the local flow rate along a piecewise-linear (A, D) pair:
/// the segment sum of `local_rate_h` at each cell's interior state and
/// slopes. Requires A(0) = D(0) = 0.
pub fn path_rate_flows(
    a: &PiecewiseVector,
    d: &PiecewiseVector,
    model: &RateModel,
    t_end: f64,
) -> Result<f64> {
    let k = model.dim();
    if a.dim() != k || d.dim() != k {
        return Err(Error::invalid("path dimension mismatch"));
    }
    if a.eval(0.0).iter().any(|v| v.abs() > 1e-12)
        || d.eval(0.0).iter().any(|v| v.abs() > 1e-12)
    {
        return Ok(f64::INFINITY);
    }
    let paths: Vec<&PiecewisePath> = a.components.iter().chain(d.components.iter()).collect();
    let grid = merged_knots(&paths, t_end);
    let mut total = 0.0;
    for w in grid.windows(2) {
        let (u, v) = (w[0], w[1]);
        let len = v - u;
        let m = 0.5 * (u + v);
        let av = a.eval(m);
        let mut dv = d.eval(m);
        for i in 0..k {
            // solver outputs carry fixed-point residual noise; snap states
            // that agree to within it so emptiness is detected
            if (av[i] - dv[i]).abs() <= 1e-9 * (1.0 + av[i].abs()) {
                dv[i] = av[i];
            }
        }
        let das: Vec<f64> = (0..k)
            .map(|i| (a.components[i].eval(v) - a.components[i].eval(u)) / len)
            .collect();
        let dds: Vec<f64> = (0..k)
            .map(|i| (d.components[i].eval(v) - d.components[i].eval(u)) / len)
            .collect();
        let sol = local_rate_h(model, &av, &dv, &das, &dds)?;
        if !sol.value.is_finite() {
            return Ok(f64::INFINITY);
        }
        total += len * sol.value;
    }
    Ok(total)
}

/// One evaluated cell of a queue-path rate: constant state and velocity on
/// (t0, t1) with the local rate and its minimizing velocities.
#[derive(Clone, Debug, Serialize)]
pub struct QueueRateSegment {
    pub t0: f64,
    pub t1: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub value: f64,
    pub departures: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
    pub exogenous: Vec<f64>,
}

/// Segment breakdown of a queue-path rate. `total` is the extended-real
/// integral; `note` explains an infinite total.
#[derive(Clone, Debug, Serialize)]
pub struct QueueRateBreakdown {
    pub total: f64,
    pub segments: Vec<QueueRateSegment>,
    pub note: Option<String>,
}

/// Rate of a nonnegative piecewise-linear queue path over [0, t_end]: the
/// segment sum of `local_rate_hq`, with cells cut at every knot (the empty
/// set can only change there for admissible nonnegative inputs). The default
/// initial-condition cost forces Q(0) = 0.
pub fn path_rate_q(
    qpath: &QueueVector,
    model: &RateModel,
    t_end: f64,
) -> Result<QueueRateBreakdown> {
    let k = model.dim();
    if qpath.dim() != k {
        return Err(Error::invalid("path dimension mismatch"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("horizon must be positive and finite"));
    }
    let comps: Vec<&SignedPath> = qpath.components.iter().collect();
    let grid = merged_knots(&comps, t_end);
    for c in &comps {
        for &t in &grid {
            if c.eval(t) < -FEAS_TOL {
                return Err(Error::validation("queue path must stay nonnegative"));
            }
        }
    }
    if qpath.eval(0.0).iter().any(|v| v.abs() > 1e-12) {
        return Ok(QueueRateBreakdown {
            total: f64::INFINITY,
            segments: vec![],
            note: Some(
                "initial queue must be zero under the default initial-condition cost".into(),
            ),
        });
    }
    let scale = grid
        .iter()
        .flat_map(|&t| qpath.eval(t))
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let mut total = 0.0;
    let mut note = None;
    let mut segments = Vec::with_capacity(grid.len());
    for w in grid.windows(2) {
        let (u, v) = (w[0], w[1]);
        let len = v - u;
        let m = 0.5 * (u + v);
        let qm: Vec<f64> = qpath
            .eval(m)
            .into_iter()
            .map(|x| if x.abs() <= EMPTY_TOL * scale { 0.0 } else { x.max(0.0) })
            .collect();
        let dq: Vec<f64> = (0..k)
            .map(|i| (qpath.components[i].eval(v) - qpath.components[i].eval(u)) / len)
            .collect();
        let sol = local_rate_hq(model, &qm, &dq)?;
        if !sol.value.is_finite() {
            total = f64::INFINITY;
            if note.is_none() {
                note = Some(format!(
                    "infinite local rate on ({u}, {v}): {}",
                    sol.note.as_deref().unwrap_or("no admissible velocities")
                ));
            }
        } else if total.is_finite() {
            total += len * sol.value;
        }
        segments.push(QueueRateSegment {
            t0: u,
            t1: v,
            q: qm,
            dq,
            value: sol.value,
            departures: sol.departures,
            routing: sol.routing,
            exogenous: sol.exogenous,
        });
    }
    Ok(QueueRateBreakdown {
        total,
        segments,
        note,
    })
}
