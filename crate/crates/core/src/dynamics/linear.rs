//! Solver for networks whose primitives are all linear: exogenous arrivals
//! N0 + λt, service μt, and routing u ↦ u·P for a fixed substochastic matrix.
//!
//! At each fixed time the arrival vector solves x = N0 + λt + Pᵀ(x ∧ μt),
//! a monotone contraction (spectral radius of P below one), so pointwise
//! values are exact up to the Picard stopping tolerance. Breakpoints are
//! recovered by midpoint-linearity bisection; values stored at breakpoints
//! are re-solved exactly, so interpolation error is confined to segments
//! that pass the linearity test.

use super::FlowSolution;
use crate::network::RoutingMatrix;
use crate::paths::{PiecewisePath, VectorPath};
use crate::{Error, Result};

const PICARD_TOL: f64 = 1e-13;
const PICARD_CAP: usize = 200_000;
const TIME_TOL: f64 = 1e-10;
const LINEARITY_TOL: f64 = 1e-11;

/// Linear-primitive network instance.
#[derive(Clone, Debug)]
pub struct LinearNet {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub routing: RoutingMatrix,
    pub initial: Vec<f64>,
}

impl LinearNet {
    pub fn new(
        lambda: Vec<f64>,
        mu: Vec<f64>,
        routing: RoutingMatrix,
        initial: Vec<f64>,
    ) -> Result<LinearNet> {
        let k = routing.dim();
        if lambda.len() != k || mu.len() != k || initial.len() != k {
            return Err(Error::invalid("linear net: dimension mismatch"));
        }
        for v in lambda.iter().chain(&mu).chain(&initial) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::invalid("linear net: rates and initial counts must be finite and >= 0"));
            }
        }
        Ok(LinearNet {
            lambda,
            mu,
            routing,
            initial,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Exact arrival and departure vectors at one time.
    fn solve_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.dim();
        let alpha: Vec<f64> = (0..k).map(|i| self.initial[i] + self.lambda[i] * t).collect();
        let y: Vec<f64> = (0..k).map(|i| self.mu[i] * t).collect();
        let mut x: Vec<f64> = vec![0.0; k];
        let mut next: Vec<f64> = vec![0.0; k];
        let scale = 1.0 + alpha.iter().chain(&y).fold(0.0f64, |m, v| m.max(*v));
        for _ in 0..PICARD_CAP {
            let mut change: f64 = 0.0;
            for i in 0..k {
                let mut v = alpha[i];
                for j in 0..k {
                    v += self.routing.entry(j, i) * x[j].min(y[j]);
                }
                change = change.max((v - x[i]).abs());
                next[i] = v;
            }
            std::mem::swap(&mut x, &mut next);
            if change <= PICARD_TOL * scale {
                break;
            }
        }
        let d: Vec<f64> = (0..k).map(|i| x[i].min(y[i])).collect();
        (x, d)
    }
}

/// Solves a linear-primitive network over [0, horizon], returning exact
/// piecewise-linear arrival and departure paths.
pub fn solve_linear(net: &LinearNet, horizon: f64) -> Result<FlowSolution<PiecewisePath>> {
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::invalid("solve_linear: horizon must be finite and positive"));
    }
    let k = net.dim();
    let mut knots = vec![0.0, horizon];
    let (v0a, v0d) = net.solve_at(0.0);
    let (v1a, v1d) = net.solve_at(horizon);
    let stacked = |a: &[f64], d: &[f64]| -> Vec<f64> {
        a.iter().chain(d).copied().collect()
    };
    refine(
        net,
        0.0,
        &stacked(&v0a, &v0d),
        horizon,
        &stacked(&v1a, &v1d),
        &mut knots,
        0,
    )?;
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL * 0.5);
    if knots[0] != 0.0 {
        knots[0] = 0.0;
    }

    let mut a_comps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    let mut d_comps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for &t in &knots {
        let (a, d) = net.solve_at(t);
        for i in 0..k {
            a_comps[i].push((t, a[i]));
            d_comps[i].push((t, d[i]));
        }
    }
    let finish = |mut pts: Vec<(f64, f64)>| -> Result<PiecewisePath> {
        // pointwise solves are monotone in t up to the Picard tolerance
        for w in 1..pts.len() {
            if pts[w].1 < pts[w - 1].1 {
                pts[w].1 = pts[w - 1].1;
            }
        }
        let last = pts[pts.len() - 1];
        let prev = pts[pts.len() - 2];
        let tail = ((last.1 - prev.1) / (last.0 - prev.0)).max(0.0);
        Ok(PiecewisePath::new(pts, tail)?.simplify())
    };
    let arrivals = VectorPath::new(
        a_comps.into_iter().map(finish).collect::<Result<Vec<_>>>()?,
    )?;
    let departures = VectorPath::new(
        d_comps.into_iter().map(finish).collect::<Result<Vec<_>>>()?,
    )?;
    Ok(FlowSolution {
        arrivals,
        departures,
    })
}

fn refine(
    net: &LinearNet,
    t0: f64,
    v0: &[f64],
    t1: f64,
    v1: &[f64],
    knots: &mut Vec<f64>,
    depth: usize,
) -> Result<()> {
    if t1 - t0 <= TIME_TOL {
        knots.push(t0);
        knots.push(t1);
        return Ok(());
    }
    if depth > 70 {
        return Err(Error::numeric("solve_linear: breakpoint bisection failed to converge"));
    }
    let tm = 0.5 * (t0 + t1);
    let (ma, md) = net.solve_at(tm);
    let vm: Vec<f64> = ma.iter().chain(&md).copied().collect();
    let mut linear = true;
    for i in 0..vm.len() {
        let interp = 0.5 * (v0[i] + v1[i]);
        if (vm[i] - interp).abs() > LINEARITY_TOL * (1.0 + interp.abs()) {
            linear = false;
            break;
        }
    }
    if linear {
        return Ok(());
    }
    knots.push(tm);
    refine(net, t0, v0, tm, &vm, knots, depth + 1)?;
    refine(net, tm, &vm, t1, v1, knots, depth + 1)
}
