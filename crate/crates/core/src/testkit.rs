//! Shared helpers for tests and acceptance suites: seeded random path
//! generators and independent brute-force evaluators used as oracles against
//! the production solvers. Not part of the public API surface.

use crate::network::NetworkPaths;
use crate::paths::{Curve, PiecewisePath, RoutingPath, StepPath, VectorPath};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random nondecreasing piecewise-linear path on [0, horizon] starting at v0.
pub fn rand_piecewise(
    rng: &mut ChaCha8Rng,
    horizon: f64,
    v0: f64,
    max_segments: usize,
    max_slope: f64,
) -> PiecewisePath {
    let nseg = rng.gen_range(1..=max_segments);
    let mut times: Vec<f64> = (0..nseg - 1)
        .map(|_| rng.gen_range(0.0..horizon))
        .collect();
    times.push(0.0);
    times.push(horizon);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let mut v = v0;
    let mut pts = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let dt = t - times[i - 1];
            v += rng.gen_range(0.0..max_slope) * dt;
        }
        pts.push((t, v));
    }
    PiecewisePath::new(pts, rng.gen_range(0.0..max_slope)).unwrap()
}

/// Random counting-style step path: roughly `rate` jumps per unit time, each
/// of the given size.
pub fn rand_step(rng: &mut ChaCha8Rng, horizon: f64, rate: f64, size: f64) -> StepPath {
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        // exponential spacing
        let u: f64 = rng.gen_range(1e-12..1.0);
        t += -u.ln() / rate;
        if t >= horizon {
            break;
        }
        times.push(t);
    }
    StepPath::from_scaled(times, size, horizon).unwrap()
}

/// Direct-definition evaluation of the departure map at a single time:
/// D(t) = min( S(t), inf_{0<=s<=t} { S(t) - S(s) + A(s) } ),
/// with the infimum scanned over knots, their left limits, and the endpoints.
/// Exact for step and piecewise paths; O(knots) per call.
pub fn phi_value_bruteforce<A: Curve, S: Curve>(a: &A, s: &S, t: f64) -> f64 {
    let st = s.eval(t);
    let mut best = st;
    let mut cands: Vec<f64> = Vec::new();
    cands.push(0.0);
    cands.push(t);
    for k in a.knots().into_iter().chain(s.knots()) {
        if k <= t {
            cands.push(k);
        }
    }
    for &c in &cands {
        let right = st - s.eval(c) + a.eval(c);
        let left = st - s.eval_left(c) + a.eval_left(c);
        best = best.min(right).min(left);
    }
    best
}

/// Uniform grid of m+1 points on [t0, t1].
pub fn grid(t0: f64, t1: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|i| t0 + (t1 - t0) * i as f64 / m as f64)
        .collect()
}

/// Random piecewise-linear network: nondecreasing exogenous and service
/// paths, routing rows whose derivative row sums stay below 0.9 on every
/// u-segment (so every segment derivative matrix has spectral radius < 0.9),
/// and row horizons long enough for a service-started fixed-point iteration.
pub fn rand_network(
    rng: &mut ChaCha8Rng,
    k: usize,
    horizon: f64,
) -> NetworkPaths<PiecewisePath> {
    let s_comps: Vec<PiecewisePath> = (0..k)
        .map(|_| rand_piecewise(rng, horizon, 0.0, 4, 2.0))
        .collect();
    let mut exogenous: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.7)).collect();
    if !exogenous.iter().any(|&b| b) {
        exogenous[rng.gen_range(0..k)] = true;
    }
    let n_comps: Vec<PiecewisePath> = (0..k)
        .map(|i| {
            let v0 = if rng.gen_bool(0.5) {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            };
            if exogenous[i] {
                rand_piecewise(rng, horizon, v0, 4, 2.0)
            } else {
                PiecewisePath::constant(v0, horizon).unwrap()
            }
        })
        .collect();

    let mut entries: Vec<PiecewisePath> = Vec::with_capacity(k * k);
    for j in 0..k {
        let umax = s_comps[j].eval(horizon) + 1.0;
        let nseg = rng.gen_range(1..=3usize);
        let mut uknots: Vec<f64> = (0..nseg - 1).map(|_| rng.gen_range(0.0..umax)).collect();
        uknots.push(0.0);
        uknots.push(umax);
        uknots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        uknots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        // per-segment slope rows with sum <= 0.9
        let mut seg_slopes: Vec<Vec<f64>> = Vec::new();
        for _ in 0..uknots.len() {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum::<f64>().max(1e-9);
            let budget = 0.9 * rng.gen_range(0.0..1.0);
            seg_slopes.push(raw.iter().map(|r| r / total * budget).collect());
        }
        let mut row_entries: Vec<Vec<(f64, f64)>> = vec![vec![(0.0, 0.0)]; k];
        let mut vals = vec![0.0; k];
        for (w, pair) in uknots.windows(2).enumerate() {
            let du = pair[1] - pair[0];
            for i in 0..k {
                vals[i] += seg_slopes[w][i] * du;
                row_entries[i].push((pair[1], vals[i]));
            }
        }
        let tail = seg_slopes.last().unwrap().clone();
        for i in 0..k {
            entries.push(
                PiecewisePath::new(std::mem::take(&mut row_entries[i]), tail[i]).unwrap(),
            );
        }
    }
    let p = RoutingPath::new(k, entries).unwrap();
    NetworkPaths::new(
        VectorPath::new(n_comps).unwrap(),
        VectorPath::new(s_comps).unwrap(),
        p,
        exogenous,
    )
    .unwrap()
}
