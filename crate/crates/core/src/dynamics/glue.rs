//! Piecewise-linear network solver.
//!
//! `solve_glue` advances an exact event-driven recursion: between events all
//! primitives are linear, the departure derivative solves a small monotone
//! fixed point, and the next event is the first breakpoint of any primitive,
//! the first routing u-knot reached by a departure component, or the first
//! queue to drain. `solve_picard` iterates the two flow maps from below or
//! from above and is used as an independent cross-check.

use super::{gamma, phi, FlowSolution};
use crate::linalg;
use crate::network::NetworkPaths;
use crate::paths::{sup_distance, Curve, PiecewisePath, PiecewiseVector, VectorPath};
use crate::{Error, Result};

const STEP_CAP: usize = 200_000;
const SLOPE_TOL: f64 = 1e-14;
const EMPTY_TOL: f64 = 1e-12;
const PICARD_PATH_TOL: f64 = 1e-9;
const PICARD_PATH_CAP: usize = 100_000;
const CROSS_CHECK_TOL: f64 = 1e-6;

/// Solves the flow fixed point for piecewise-linear primitives by exact
/// segment gluing. Output breakpoints are event times; values at them are
/// exact up to accumulated rounding.
pub fn solve_glue(
    net: &NetworkPaths<PiecewisePath>,
    horizon: f64,
) -> Result<FlowSolution<PiecewisePath>> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::invalid("solve_glue: horizon must be finite and positive"));
    }
    let k = net.dim();
    for (i, si) in net.s.components.iter().enumerate() {
        if si.eval(0.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("service path {i} must start at 0")));
        }
    }

    let mut t = 0.0;
    let mut a_val: Vec<f64> = net.n.components.iter().map(|c| c.eval(0.0)).collect();
    let mut d_val = vec![0.0; k];
    let mut a_pts: Vec<Vec<(f64, f64)>> = (0..k).map(|i| vec![(0.0, a_val[i])]).collect();
    let mut d_pts: Vec<Vec<(f64, f64)>> = (0..k).map(|_| vec![(0.0, 0.0)]).collect();
    let mut da = vec![0.0; k];
    let mut dd = vec![0.0; k];
    let mut ptil = vec![0.0; k * k];

    let mut steps = 0usize;
    while t < horizon {
        steps += 1;
        if steps > STEP_CAP {
            return Err(Error::numeric(format!(
                "solve_glue: exceeded {STEP_CAP} events at t={t}"
            )));
        }

        let lam: Vec<f64> = net.n.components.iter().map(|c| c.right_slope(t)).collect();
        let mu: Vec<f64> = net.s.components.iter().map(|c| c.right_slope(t)).collect();
        for j in 0..k {
            for i in 0..k {
                ptil[j * k + i] = net.p.entry(j, i).right_slope(d_val[j]);
            }
        }
        let rho = linalg::spectral_radius(&ptil, k);
        if rho >= 1.0 - 1e-9 {
            return Err(Error::validation(format!(
                "routing derivative spectral radius {rho:.12} >= 1 - 1e-9 on the segment starting at t={t}"
            )));
        }

        let busy: Vec<bool> = (0..k)
            .map(|i| a_val[i] - d_val[i] > EMPTY_TOL * (1.0 + a_val[i].abs()))
            .collect();

        // departure slopes: busy stations drain at the service rate, empty
        // ones pass through the smaller of service rate and total inflow
        let scale = 1.0
            + lam.iter().chain(mu.iter()).fold(0.0f64, |m, v| m.max(*v));
        dd.iter_mut().for_each(|v| *v = 0.0);
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > 100_000 {
                return Err(Error::numeric(format!(
                    "solve_glue: departure-slope iteration stalled at t={t}"
                )));
            }
            let mut change: f64 = 0.0;
            for i in 0..k {
                let v = if busy[i] {
                    mu[i]
                } else {
                    let mut inflow = lam[i];
                    for j in 0..k {
                        inflow += ptil[j * k + i] * dd[j];
                    }
                    mu[i].min(inflow)
                };
                change = change.max(v - dd[i]);
                dd[i] = v;
            }
            if change <= SLOPE_TOL * scale {
                break;
            }
        }
        for i in 0..k {
            let mut inflow = lam[i];
            for j in 0..k {
                inflow += ptil[j * k + i] * dd[j];
            }
            da[i] = inflow;
        }

        // next event
        let mut t_next = horizon;
        for c in net.n.components.iter().chain(net.s.components.iter()) {
            if let Some(kn) = c.next_knot_after(t) {
                if kn < t_next {
                    t_next = kn;
                }
            }
        }
        for j in 0..k {
            if dd[j] > SLOPE_TOL {
                for i in 0..k {
                    if let Some(u) = net.p.entry(j, i).next_knot_after(d_val[j]) {
                        let cand = t + (u - d_val[j]) / dd[j];
                        if cand < t_next {
                            t_next = cand;
                        }
                    }
                }
            }
        }
        for i in 0..k {
            let gap = dd[i] - da[i];
            if busy[i] && gap > SLOPE_TOL * scale {
                let cand = t + (a_val[i] - d_val[i]) / gap;
                if cand < t_next {
                    t_next = cand;
                }
            }
        }

        if t_next <= t {
            return Err(Error::numeric(format!(
                "solve_glue: no forward progress at t={t}"
            )));
        }
        let dt = t_next - t;
        for i in 0..k {
            a_val[i] += da[i] * dt;
            d_val[i] += dd[i] * dt;
            // drains land on the queue-empty manifold up to rounding
            if (a_val[i] - d_val[i]).abs() <= EMPTY_TOL * (1.0 + a_val[i].abs()) || d_val[i] > a_val[i]
            {
                d_val[i] = a_val[i];
            }
        }
        // snap departures that land on a routing u-knot
        for j in 0..k {
            for i in 0..k {
                if let Some(u) = net.p.entry(j, i).next_knot_after(d_pts[j].last().unwrap().1) {
                    if (d_val[j] - u).abs() <= 1e-12 * (1.0 + u) {
                        d_val[j] = u;
                    }
                }
            }
        }
        t = t_next;
        for i in 0..k {
            a_pts[i].push((t, a_val[i]));
            d_pts[i].push((t, d_val[i]));
        }
    }

    let build = |pts: Vec<Vec<(f64, f64)>>, slopes: &[f64]| -> Result<PiecewiseVector> {
        VectorPath::new(
            pts.into_iter()
                .zip(slopes)
                .map(|(p, &s)| Ok(PiecewisePath::new(p, s.max(0.0))?.simplify()))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    Ok(FlowSolution {
        arrivals: build(a_pts, &da)?,
        departures: build(d_pts, &dd)?,
    })
}

/// Starting point for the fixed-point iteration: from the zero path (below)
/// or from the service path (above).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PicardStart {
    Zero,
    Service,
}

/// Iterates A ← Γ(D), D ← Φ(A) until the sup-norm change falls below 1e-9.
/// From `Zero` the iterates increase, from `Service` they decrease; both
/// limits agree when the fixed point is unique. Service starts require
/// routing rows defined up to S_j(horizon).
pub fn solve_picard(
    net: &NetworkPaths<PiecewisePath>,
    horizon: f64,
    start: PicardStart,
) -> Result<FlowSolution<PiecewisePath>> {
    let k = net.dim();
    let mut d: PiecewiseVector = match start {
        PicardStart::Zero => VectorPath::new(
            (0..k)
                .map(|_| PiecewisePath::constant(0.0, horizon))
                .collect::<Result<Vec<_>>>()?,
        )?,
        PicardStart::Service => VectorPath::new(
            net.s
                .components
                .iter()
                .map(|c| c.extend_to(horizon))
                .collect(),
        )?,
    };
    let mut a: Option<PiecewiseVector> = None;
    let mut gap = f64::INFINITY;
    for _ in 0..PICARD_PATH_CAP {
        let a_new = gamma(&d, &net.p, &net.n, horizon)?.simplified();
        let d_new = phi(&a_new, &net.s, horizon)?.simplified();
        #[cfg(debug_assertions)]
        monotone_between(&d, &d_new, start, horizon);
        gap = sup_distance(&d_new, &d, horizon);
        if let Some(prev) = &a {
            gap = gap.max(sup_distance(&a_new, prev, horizon));
        }
        a = Some(a_new);
        d = d_new;
        if gap <= PICARD_PATH_TOL {
            return Ok(FlowSolution {
                arrivals: a.unwrap(),
                departures: d,
            });
        }
    }
    Err(Error::numeric(format!(
        "fixed-point iteration did not reach {PICARD_PATH_TOL} within {PICARD_PATH_CAP} rounds; last change {gap}"
    )))
}

#[cfg(debug_assertions)]
fn monotone_between(
    prev: &PiecewiseVector,
    next: &PiecewiseVector,
    start: PicardStart,
    horizon: f64,
) {
    for (p, n) in prev.components.iter().zip(&next.components) {
        let mut ks = p.knots();
        ks.extend(n.knots());
        ks.push(horizon);
        for &t in &ks {
            if t > horizon {
                continue;
            }
            let (pv, nv) = (p.eval(t), n.eval(t));
            let ok = match start {
                PicardStart::Zero => nv >= pv - 1e-9 * (1.0 + pv.abs()),
                PicardStart::Service => nv <= pv + 1e-9 * (1.0 + pv.abs()),
            };
            debug_assert!(ok, "fixed-point iterates not monotone at t={t}: {pv} -> {nv}");
        }
    }
}

/// Main solver for piecewise-linear networks: exact gluing, cross-checked
/// against the fixed-point iteration started from zero, with flow invariants
/// verified before returning.
pub fn solve_piecewise_linear(
    net: &NetworkPaths<PiecewisePath>,
    horizon: f64,
) -> Result<FlowSolution<PiecewisePath>> {
    let glue = solve_glue(net, horizon)?;
    let picard = solve_picard(net, horizon, PicardStart::Zero)?;
    let gap = sup_distance(&glue.arrivals, &picard.arrivals, horizon)
        .max(sup_distance(&glue.departures, &picard.departures, horizon));
    if gap > CROSS_CHECK_TOL {
        return Err(Error::numeric(format!(
            "segment solver and fixed-point iteration disagree by {gap:.3e} (tolerance {CROSS_CHECK_TOL:.0e})"
        )));
    }
    glue.check_invariants(&net.s, horizon)?;
    Ok(glue)
}
