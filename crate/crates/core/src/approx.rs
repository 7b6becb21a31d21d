//! Polygonal tilted approximations of fluid network triples. Given flows
//! (A, D) that solve a triple exactly, these builders produce nearby grid
//! networks whose own flows are known in closed form, together with
//! diagnostics for how far they sit from the original and at what rate cost.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, residual_g, solve_piecewise_linear, FlowSolution};
use crate::linalg;
use crate::network::{eta_of_delta, NetworkPaths, RateModel, RateSpec, RoutingMatrix};
use crate::paths::{
    sup_distance, sup_distance_scalar, Curve, PiecewisePath, PiecewiseVector, RoutingPath,
    VectorPath,
};
use crate::ratefn::{kl_tilde, path_rate_net};
use crate::{Error, Result};

/// Largest fixed-point residual an input triple may carry into a build.
const INPUT_RESIDUAL_TOL: f64 = 1e-8;
/// Reflection preconditions are checked to this tolerance.
const PRE_TOL: f64 = 1e-7;
/// Identities the construction guarantees must hold to this tolerance.
const POST_TOL: f64 = 1e-6;
/// Relative tolerance deciding whether a station is idle at a grid time.
const IDLE_TOL: f64 = 1e-9;
/// Slack for the per-cell convexity comparisons.
const CONVEX_TOL: f64 = 1e-9;

/// Grid size and exogenous drift of one member of an approximating family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub n: u64,
    pub delta: Vec<f64>,
}

/// Number of 1/n cells needed to cover [0, t_end].
fn cell_count(n: u64, t_end: f64) -> u64 {
    ((t_end * n as f64).ceil() as u64).max(1)
}

/// Piecewise-linear interpolation on the fixed grid {m/n : m <= m_end},
/// keeping the tail slope.
fn grid_poly<C: Curve>(f: &C, n: u64, m_end: u64) -> Result<PiecewisePath> {
    let mut points = Vec::with_capacity(m_end as usize + 1);
    for m in 0..=m_end {
        let t = m as f64 / n as f64;
        points.push((t, f.eval(t)));
    }
    PiecewisePath::new(points, f.tail_slope())
}

fn grid_poly_vec(x: &PiecewiseVector, n: u64, m_end: u64) -> Result<PiecewiseVector> {
    Ok(VectorPath {
        components: x
            .components
            .iter()
            .map(|c| grid_poly(c, n, m_end))
            .collect::<Result<_>>()?,
    })
}

/// f + slope * t, rebuilt on f's own knots.
fn tilt<C: Curve>(f: &C, slope: f64) -> Result<PiecewisePath> {
    let mut points: Vec<(f64, f64)> = f
        .knots()
        .into_iter()
        .map(|t| (t, f.eval(t) + slope * t))
        .collect();
    if points.is_empty() {
        points.push((0.0, f.eval(0.0)));
    }
    PiecewisePath::new(points, f.tail_slope() + slope)
}

fn tilt_vec(x: &PiecewiseVector, slopes: &[f64]) -> Result<PiecewiseVector> {
    Ok(VectorPath {
        components: x
            .components
            .iter()
            .zip(slopes)
            .map(|(c, &s)| tilt(c, s))
            .collect::<Result<_>>()?,
    })
}

fn empty_at<C: Curve>(a: &C, d: &C, t: f64) -> bool {
    let av = a.eval(t);
    (av - d.eval(t)).abs() <= IDLE_TOL * (1.0 + av.abs())
}

/// Mixing weight of the grid tilt: eta / (n * inc + eta) for a cell whose
/// departures increase by `inc`. Flat cells mix all the way to the nominal
/// matrix (weight 1); busy cells barely move once n is large.
pub fn epsilon_n(eta: &[f64], inc: &[f64], n: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("epsilon_n: n must be >= 1"));
    }
    if eta.len() != inc.len() {
        return Err(Error::invalid(
            "epsilon_n: eta and increments must share length",
        ));
    }
    let mut out = Vec::with_capacity(eta.len());
    for (i, (&e, &dd)) in eta.iter().zip(inc).enumerate() {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::invalid(format!(
                "epsilon_n: eta[{i}] must be positive and finite"
            )));
        }
        if !(dd >= -1e-12) || !dd.is_finite() {
            return Err(Error::invalid(format!(
                "epsilon_n: increment[{i}] must be nonnegative"
            )));
        }
        let dd = dd.max(0.0);
        out.push(if dd == 0.0 {
            1.0
        } else {
            e / (n as f64 * dd + e)
        });
    }
    Ok(out)
}

/// Tilted routing path. Each row's argument gains slope eta_j, and over each
/// 1/n cell an entry gains its original increment plus R eta_j / n, so the
/// cell slope is the original slope mixed toward the nominal matrix at the
/// `epsilon_n` weight and every cell has positive length. Past the covered
/// range the path continues at the nominal slopes.
pub fn tilted_routing(
    p: &RoutingPath<PiecewisePath>,
    d: &PiecewiseVector,
    r: &RoutingMatrix,
    eta: &[f64],
    n: u64,
    t_end: f64,
) -> Result<RoutingPath<PiecewisePath>> {
    let k = r.dim();
    if p.dim() != k || d.dim() != k || eta.len() != k {
        return Err(Error::invalid("tilted_routing: dimension mismatch"));
    }
    if n == 0 {
        return Err(Error::invalid("tilted_routing: n must be >= 1"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(
            "tilted_routing: horizon must be positive and finite",
        ));
    }
    for (i, &e) in eta.iter().enumerate() {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::invalid(format!(
                "tilted_routing: eta[{i}] must be positive and finite"
            )));
        }
    }
    let m_end = cell_count(n, t_end) as usize;
    let h = 1.0 / n as f64;
    let mut entries: Vec<PiecewisePath> = Vec::with_capacity(k * k);
    for j in 0..k {
        let dj = &d.components[j];
        let mut rows: Vec<Vec<(f64, f64)>> = (0..k).map(|_| vec![(0.0, 0.0)]).collect();
        for m in 0..m_end {
            let (t0, t1) = (m as f64 * h, (m + 1) as f64 * h);
            let (u0, u1) = (dj.eval(t0), dj.eval(t1));
            let u_next = u1 + t1 * eta[j];
            for (i, row) in rows.iter_mut().enumerate() {
                let rji = r.entry(j, i);
                let dp = p.entry(j, i).eval(u1) - p.entry(j, i).eval(u0);
                if rji == 0.0 && dp > 1e-9 * (1.0 + u1) {
                    return Err(Error::validation(format!(
                        "tilted_routing: observed routing from {j} to {i} where the nominal matrix sends nothing"
                    )));
                }
                let inc = if rji == 0.0 {
                    0.0
                } else {
                    dp.max(0.0) + rji * eta[j] * h
                };
                let last = row.last().unwrap().1;
                row.push((u_next, last + inc));
            }
        }
        let u_last = dj.eval(m_end as f64 * h) + m_end as f64 * h * eta[j];
        for (i, row) in rows.iter_mut().enumerate() {
            let last = row.last().unwrap().1;
            row.push((u_last + 1.0, last + r.entry(j, i)));
            entries.push(PiecewisePath::new(std::mem::take(row), r.entry(j, i))?);
        }
    }
    RoutingPath::new(k, entries)
}

/// Grid service paths matching given reflected flows: over each 1/n cell the
/// service gains the departure increment, except on cells idle at both ends
/// where it gains the service increment itself. The result reproduces the
/// polygonal departures exactly under reflection, which is verified before
/// returning.
pub fn upsilon(
    a: &PiecewiseVector,
    d: &PiecewiseVector,
    s: &PiecewiseVector,
    n: u64,
    t_end: f64,
) -> Result<PiecewiseVector> {
    let k = a.dim();
    if d.dim() != k || s.dim() != k {
        return Err(Error::invalid("upsilon: dimension mismatch"));
    }
    if n == 0 {
        return Err(Error::invalid("upsilon: n must be >= 1"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(
            "upsilon: horizon must be positive and finite",
        ));
    }
    let refl = dynamics::phi(a, s, t_end)?;
    let gap = sup_distance(&refl, d, t_end);
    if gap > PRE_TOL {
        return Err(Error::validation(format!(
            "upsilon: departures differ from the reflection of (arrivals, service) by {gap:.3e}"
        )));
    }
    let m_end = cell_count(n, t_end);
    let t_check = m_end as f64 / n as f64;
    let mut comps = Vec::with_capacity(k);
    for i in 0..k {
        let (ai, di, si) = (&a.components[i], &d.components[i], &s.components[i]);
        let mut v = si.eval(0.0);
        let mut points = vec![(0.0, v)];
        for m in 0..m_end {
            let t0 = m as f64 / n as f64;
            let t1 = (m + 1) as f64 / n as f64;
            let idle = empty_at(ai, di, t0) && empty_at(ai, di, t1);
            v += if idle {
                si.eval(t1) - si.eval(t0)
            } else {
                di.eval(t1) - di.eval(t0)
            };
            points.push((t1, v));
        }
        comps.push(PiecewisePath::new(points, si.tail_slope())?);
    }
    let s_n = VectorPath { components: comps };
    let a_n = grid_poly_vec(a, n, m_end)?;
    let d_n = grid_poly_vec(d, n, m_end)?;
    let refl_n = dynamics::phi(&a_n, &s_n, t_check)?;
    let drift = sup_distance(&refl_n, &d_n, t_check);
    if drift > POST_TOL {
        return Err(Error::numeric(format!(
            "upsilon: grid reflection misses the polygonal departures by {drift:.3e}"
        )));
    }
    Ok(s_n)
}

/// A grid network tilted off a fluid triple, its exact flows, and the
/// residuals of the identities the construction promises.
#[derive(Clone, Debug)]
pub struct ApproxBuild {
    pub net: NetworkPaths<PiecewisePath>,
    pub flows: FlowSolution<PiecewisePath>,
    pub eta: Vec<f64>,
    pub grid_residual: f64,
    pub reflection_residual: f64,
    pub psi_residual: f64,
}

struct TiltedPaths {
    a: PiecewiseVector,
    d: PiecewiseVector,
    s: PiecewiseVector,
    n: PiecewiseVector,
}

/// Builds the grid network tilted off (net, a, d) by `params.delta`: counts
/// gain the drift, service paths are rebuilt from the tilted flows on the
/// 1/n grid, and routing mixes toward the nominal matrix. The returned
/// network's own flows are exactly the polygonal tilted (a, d); the grid
/// balance identity, the reflection identity, the re-solved flows, and the
/// per-cell convexity relations are all verified before returning.
pub fn build_approx(
    net: &NetworkPaths<PiecewisePath>,
    a: &PiecewiseVector,
    d: &PiecewiseVector,
    model: &RateModel,
    params: &ApproxParams,
    t_end: f64,
) -> Result<ApproxBuild> {
    let k = model.dim();
    if net.dim() != k || a.dim() != k || d.dim() != k || params.delta.len() != k {
        return Err(Error::invalid("build_approx: dimension mismatch"));
    }
    if params.n == 0 {
        return Err(Error::invalid("build_approx: n must be >= 1"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(
            "build_approx: horizon must be positive and finite",
        ));
    }
    if model.has_deterministic_service() {
        return Err(Error::validation(
            "build_approx: deterministic service admits a single slope and the tilt always moves off it",
        ));
    }
    let exo = model.exogenous_set();
    if exo != net.exogenous {
        return Err(Error::validation(
            "build_approx: exogenous sets of model and network disagree",
        ));
    }
    for i in 0..k {
        let di = params.delta[i];
        if !di.is_finite() || di < 0.0 {
            return Err(Error::invalid(format!(
                "build_approx: delta[{i}] must be finite and nonnegative"
            )));
        }
        if exo[i] && di == 0.0 {
            return Err(Error::validation(format!(
                "build_approx: delta[{i}] must be positive on an exogenous station"
            )));
        }
        if !exo[i] && di != 0.0 {
            return Err(Error::validation(format!(
                "build_approx: delta[{i}] must vanish off the exogenous set"
            )));
        }
    }
    let res = residual_g(net, a, d, t_end)?;
    if res > INPUT_RESIDUAL_TOL {
        return Err(Error::validation(format!(
            "build_approx: (a, d) solve the network only to residual {res:.3e}"
        )));
    }
    let rate = path_rate_net(net, model, t_end)?;
    if !rate.is_finite() {
        return Err(Error::validation(
            "build_approx: the network prices to an infinite rate and tilting cannot repair that",
        ));
    }
    let eta = eta_of_delta(&model.routing, &params.delta)?;
    let n = params.n;
    let m_end = cell_count(n, t_end);
    let t_grid = m_end as f64 / n as f64;

    let tilted = TiltedPaths {
        a: tilt_vec(a, &eta)?,
        d: tilt_vec(d, &eta)?,
        s: tilt_vec(&net.s, &eta)?,
        n: tilt_vec(&net.n, &params.delta)?,
    };

    let n_n = grid_poly_vec(&tilted.n, n, m_end)?;
    let s_n = upsilon(&tilted.a, &tilted.d, &tilted.s, n, t_end)?;
    let p_n = tilted_routing(&net.p, d, &model.routing, &eta, n, t_end)?;
    let net_n = NetworkPaths::new(n_n, s_n, p_n, net.exogenous.clone())?;

    let a_n = grid_poly_vec(&tilted.a, n, m_end)?;
    let d_n = grid_poly_vec(&tilted.d, n, m_end)?;

    // grid balance: tilted arrivals equal tilted counts plus tilted routed
    // departures at every grid time
    let mut grid_residual = 0.0f64;
    for m in 0..=m_end {
        let t = m as f64 / n as f64;
        for i in 0..k {
            let mut rhs = net_n.n.components[i].eval(t);
            for j in 0..k {
                let u = d.components[j].eval(t) + t * eta[j];
                rhs += net_n.p.entry(j, i).eval(u);
            }
            grid_residual = grid_residual.max((a_n.components[i].eval(t) - rhs).abs());
        }
    }
    if grid_residual > POST_TOL {
        return Err(Error::numeric(format!(
            "build_approx: grid balance identity off by {grid_residual:.3e}"
        )));
    }

    let refl = dynamics::phi(&a_n, &net_n.s, t_grid)?;
    let reflection_residual = sup_distance(&refl, &d_n, t_grid);

    check_tilt_convexity(net, d, model, &net_n, &tilted, &eta, n, m_end)?;

    let flows = solve_piecewise_linear(&net_n, t_grid)?;
    let psi_residual = sup_distance(&flows.arrivals, &a_n, t_grid)
        .max(sup_distance(&flows.departures, &d_n, t_grid));
    if psi_residual > POST_TOL {
        return Err(Error::numeric(format!(
            "build_approx: solved flows miss the tilted polygonal flows by {psi_residual:.3e}"
        )));
    }

    Ok(ApproxBuild {
        net: net_n,
        flows,
        eta,
        grid_residual,
        reflection_residual,
        psi_residual,
    })
}

/// Per-cell relations the tilt guarantees. The grid service slope averages
/// the tilted service over cells idle at both ends, and the tilted
/// departures over cells busy throughout, so its family cost is bounded by
/// the exact segment cost (Jensen); cells straddling a busy/idle boundary
/// are excluded because there the bound only holds in the grid limit. The
/// gridded count obeys the same bound on every cell, and each routing cell's
/// divergence from the nominal matrix never exceeds the untilted cell's.
fn check_tilt_convexity(
    net: &NetworkPaths<PiecewisePath>,
    d: &PiecewiseVector,
    model: &RateModel,
    net_n: &NetworkPaths<PiecewisePath>,
    tilted: &TiltedPaths,
    eta: &[f64],
    n: u64,
    m_end: u64,
) -> Result<()> {
    let k = model.dim();
    let h = 1.0 / n as f64;
    for m in 0..m_end as usize {
        let t0 = m as f64 * h;
        let t1 = (m + 1) as f64 * h;
        for i in 0..k {
            let (ai, di, si) = (
                &tilted.a.components[i],
                &tilted.d.components[i],
                &tilted.s.components[i],
            );
            let idle0 = empty_at(ai, di, t0);
            let idle1 = empty_at(ai, di, t1);
            let clean = (idle0 && idle1) || (!idle0 && !idle1 && busy_inside(ai, di, t0, t1));
            if clean {
                let spec = &model.service[i];
                let grid_slope =
                    (net_n.s.components[i].eval(t1) - net_n.s.components[i].eval(t0)) / h;
                let lhs = h * spec.evaluate(grid_slope.max(0.0));
                let rhs = segment_cost(spec, si, t0, t1);
                if rhs.is_finite() && lhs > rhs + CONVEX_TOL * (1.0 + rhs.abs()) {
                    return Err(Error::numeric(format!(
                        "tilt convexity failed for service {i} on [{t0:.6}, {t1:.6}]: {lhs:.6e} > {rhs:.6e}"
                    )));
                }
            }
            if let Some(spec) = &model.exogenous[i] {
                let grid_slope =
                    (net_n.n.components[i].eval(t1) - net_n.n.components[i].eval(t0)) / h;
                let lhs = h * spec.evaluate(grid_slope.max(0.0));
                let rhs = segment_cost(spec, &tilted.n.components[i], t0, t1);
                if rhs.is_finite() && lhs > rhs + CONVEX_TOL * (1.0 + rhs.abs()) {
                    return Err(Error::numeric(format!(
                        "tilt convexity failed for count {i} on [{t0:.6}, {t1:.6}]: {lhs:.6e} > {rhs:.6e}"
                    )));
                }
            }
        }
        for j in 0..k {
            let dj = &d.components[j];
            let (u0, u1) = (dj.eval(t0), dj.eval(t1));
            let dd = u1 - u0;
            let r_row = model.routing.row(j);
            let len_u = dd + eta[j] * h;
            let (ut0, ut1) = (u0 + t0 * eta[j], u1 + t1 * eta[j]);
            let mixed: Vec<f64> = (0..k)
                .map(|i| (net_n.p.entry(j, i).eval(ut1) - net_n.p.entry(j, i).eval(ut0)) / len_u)
                .collect();
            let lhs = kl_tilde(&mixed, r_row);
            let rhs = if dd > 1e-15 {
                let base: Vec<f64> = (0..k)
                    .map(|i| (net.p.entry(j, i).eval(u1) - net.p.entry(j, i).eval(u0)) / dd)
                    .collect();
                kl_tilde(&base, r_row)
            } else {
                0.0
            };
            if rhs.is_finite() && lhs > rhs + CONVEX_TOL * (1.0 + rhs.abs()) {
                return Err(Error::numeric(format!(
                    "tilt divergence grew for row {j} on [{t0:.6}, {t1:.6}]: {lhs:.6e} > {rhs:.6e}"
                )));
            }
        }
    }
    Ok(())
}

/// True when the queue stays positive at every path knot strictly inside
/// (t0, t1); with positive endpoints this pins the whole cell busy.
fn busy_inside<C: Curve>(a: &C, d: &C, t0: f64, t1: f64) -> bool {
    a.knots()
        .into_iter()
        .chain(d.knots())
        .all(|t| t <= t0 || t >= t1 || !empty_at(a, d, t))
}

/// Exact integral of a family cost along a piecewise-linear path segment.
fn segment_cost<C: Curve>(spec: &RateSpec, x: &C, t0: f64, t1: f64) -> f64 {
    let mut ts = vec![t0, t1];
    for t in x.knots() {
        if t > t0 && t < t1 {
            ts.push(t);
        }
    }
    ts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut total = 0.0;
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let slope = (x.eval(w[1]) - x.eval(w[0])) / len;
        total += len * spec.evaluate(slope.max(0.0));
    }
    total
}

/// One row of an approximation report: closeness of the tilted grid network
/// at a given (n, delta).
#[derive(Clone, Debug, Serialize)]
pub struct ApproxReportEntry {
    pub n: u64,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub member: bool,
    pub net_distance: f64,
    pub flow_distance: f64,
    pub rate_n: f64,
    pub rate_gap: f64,
    pub grid_residual: f64,
}

/// Verification of an approximating family against the triple it tilts off.
#[derive(Clone, Debug, Serialize)]
pub struct ApproxReport {
    pub rate: f64,
    pub entries: Vec<ApproxReportEntry>,
    pub warnings: Vec<String>,
}

/// Checks the four closeness conditions for each schedule entry: class
/// membership of the tilted network, sup-distance of its paths to the
/// original's, sup-distance of its solved flows to (a, d), and its rate gap.
/// Warnings record any of the three distances failing to shrink along the
/// schedule.
pub fn verify_s_conditions(
    net: &NetworkPaths<PiecewisePath>,
    a: &PiecewiseVector,
    d: &PiecewiseVector,
    model: &RateModel,
    schedule: &[ApproxParams],
    t_end: f64,
) -> Result<ApproxReport> {
    if schedule.is_empty() {
        return Err(Error::invalid("verify_s_conditions: empty schedule"));
    }
    let rate = path_rate_net(net, model, t_end)?;
    let k = model.dim();
    let mut entries = Vec::with_capacity(schedule.len());
    for params in schedule {
        let build = build_approx(net, a, d, model, params, t_end)?;
        let member = routing_radius_below_one(&build.net.p, &model.routing);
        let mut net_distance = 0.0f64;
        for i in 0..k {
            net_distance = net_distance
                .max(sup_distance_scalar(
                    &net.n.components[i],
                    &build.net.n.components[i],
                    t_end,
                ))
                .max(sup_distance_scalar(
                    &net.s.components[i],
                    &build.net.s.components[i],
                    t_end,
                ));
        }
        for j in 0..k {
            let u_end = d.components[j].eval(t_end) + build.eta[j] * t_end;
            for i in 0..k {
                net_distance = net_distance.max(sup_distance_scalar(
                    net.p.entry(j, i),
                    build.net.p.entry(j, i),
                    u_end,
                ));
            }
        }
        let flow_distance = sup_distance(&build.flows.arrivals, a, t_end)
            .max(sup_distance(&build.flows.departures, d, t_end));
        let rate_n = path_rate_net(&build.net, model, t_end)?;
        entries.push(ApproxReportEntry {
            n: params.n,
            delta: params.delta.clone(),
            eta: build.eta.clone(),
            member,
            net_distance,
            flow_distance,
            rate_n,
            rate_gap: (rate_n - rate).abs(),
            grid_residual: build.grid_residual,
        });
    }
    let mut warnings = Vec::new();
    for w in 0..entries.len().saturating_sub(1) {
        let (prev, next) = (&entries[w], &entries[w + 1]);
        for (label, p, q) in [
            ("path distance", prev.net_distance, next.net_distance),
            ("flow distance", prev.flow_distance, next.flow_distance),
            ("rate gap", prev.rate_gap, next.rate_gap),
        ] {
            if q > p + 1e-12 {
                warnings.push(format!(
                    "{label} rose from {p:.6e} (n = {}) to {q:.6e} (n = {})",
                    prev.n, next.n
                ));
            }
        }
    }
    Ok(ApproxReport {
        rate,
        entries,
        warnings,
    })
}

/// True when every routing slope matrix of the path, tails included, has
/// spectral radius strictly below one.
fn routing_radius_below_one(p: &RoutingPath<PiecewisePath>, r: &RoutingMatrix) -> bool {
    let k = p.dim();
    let mut grid: Vec<f64> = Vec::new();
    for j in 0..k {
        for i in 0..k {
            grid.extend(p.entry(j, i).knots());
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    for w in grid.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-14 {
            continue;
        }
        let mut mat = vec![0.0; k * k];
        for j in 0..k {
            for i in 0..k {
                mat[j * k + i] = ((p.entry(j, i).eval(w[1]) - p.entry(j, i).eval(w[0])) / len)
                    .max(0.0);
            }
        }
        if linalg::spectral_radius(&mat, k) >= 1.0 - 1e-9 {
            return false;
        }
    }
    r.spectral_radius() < 1.0 - 1e-9
}

/// Scaled drift schedule: deltabar / sqrt(n) on the exogenous stations, zero
/// elsewhere.
pub fn default_schedule(
    exogenous: &[bool],
    deltabar: f64,
    ns: &[u64],
) -> Result<Vec<ApproxParams>> {
    if !(deltabar > 0.0) || !deltabar.is_finite() {
        return Err(Error::invalid(
            "default_schedule: deltabar must be positive and finite",
        ));
    }
    if ns.is_empty() {
        return Err(Error::invalid("default_schedule: empty grid list"));
    }
    if !exogenous.iter().any(|&e| e) {
        return Err(Error::validation(
            "default_schedule: no exogenous stations to tilt",
        ));
    }
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::invalid("default_schedule: n must be >= 1"));
            }
            let dn = deltabar / (n as f64).sqrt();
            Ok(ApproxParams {
                n,
                delta: exogenous
                    .iter()
                    .map(|&e| if e { dn } else { 0.0 })
                    .collect(),
            })
        })
        .collect()
}
