//! Static network description: the routing matrix with its spectral and
//! reachability checks, the per-station rate-function families, and the
//! serializable network specification.
//!
//! Everything here is immutable after validation; solvers and samplers take
//! these types by shared reference.

use crate::linalg;
use crate::paths::{Curve, RoutingPath, VectorPath};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Substochastic routing matrix with spectral radius strictly below one.
/// Row i gives the probabilities of moving from station i to each station;
/// the row deficit 1 − Σ_j R_ij is the exit probability.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingMatrix {
    k: usize,
    entries: Vec<f64>, // row-major
    rho: f64,
}

impl RoutingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::invalid("routing matrix must have K >= 1"));
        }
        let mut entries = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid("routing matrix must be square"));
            }
            let mut sum = 0.0;
            for &v in row {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "routing entry in row {i} must be finite and >= 0"
                    )));
                }
                sum += v;
            }
            if sum > 1.0 + 1e-12 {
                return Err(Error::validation(format!(
                    "routing row {i} sums to {sum} > 1"
                )));
            }
            entries.extend_from_slice(row);
        }
        let rho = linalg::spectral_radius(&entries, k);
        if rho >= 1.0 - 1e-9 {
            return Err(Error::validation(format!(
                "routing matrix spectral radius {rho} is not strictly below 1"
            )));
        }
        Ok(RoutingMatrix { k, entries, rho })
    }

    pub fn identity_free(k: usize) -> Self {
        // zero matrix: every departure exits
        RoutingMatrix {
            k,
            entries: vec![0.0; k * k],
            rho: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn exit_probability(&self, i: usize) -> f64 {
        (1.0 - self.row(i).iter().sum::<f64>()).max(0.0)
    }

    /// Spectral radius computed at validation time (abs accuracy 1e-10).
    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }
}

/// Spectral radius of an arbitrary nonnegative square matrix (row-major).
pub fn spectral_radius(entries: &[f64], k: usize) -> Result<f64> {
    if entries.len() != k * k {
        return Err(Error::invalid("matrix must be square"));
    }
    for &v in entries {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid("matrix entries must be finite and >= 0"));
        }
    }
    Ok(linalg::spectral_radius(entries, k))
}

/// True when every station is reachable from the exogenous set: the vector
/// 1_exo · (I + R + ... + R^K) must be strictly positive everywhere.
pub fn check_reachability(r: &RoutingMatrix, exogenous: &[bool]) -> bool {
    let k = r.dim();
    assert_eq!(exogenous.len(), k, "exogenous set has wrong arity");
    let mut reach: Vec<f64> = exogenous.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut frontier = reach.clone();
    for _ in 0..k {
        let mut next = vec![0.0; k];
        for i in 0..k {
            if frontier[i] > 0.0 {
                for j in 0..k {
                    next[j] += frontier[i] * r.entry(i, j);
                }
            }
        }
        for j in 0..k {
            reach[j] += next[j];
        }
        frontier = next;
    }
    reach.iter().all(|&v| v > 0.0)
}

/// Row-wise convex mixture M_i = (1 − eps_i) P_i + eps_i R_i.
///
/// Requires support(P) ⊆ support(R), P substochastic, eps_i ∈ (0, 1]. The
/// result then inherits ρ(M) < 1 from ρ(R) < 1; this is asserted and a
/// violation reported as a numeric error.
pub fn mix_with_r(p: &[f64], r: &RoutingMatrix, eps: &[f64]) -> Result<Vec<f64>> {
    let k = r.dim();
    if p.len() != k * k {
        return Err(Error::invalid("mix: P must be K x K"));
    }
    if eps.len() != k {
        return Err(Error::invalid("mix: eps must have K entries"));
    }
    for i in 0..k {
        if !(eps[i] > 0.0 && eps[i] <= 1.0) {
            return Err(Error::validation(format!(
                "mix: eps[{i}] = {} outside (0, 1]",
                eps[i]
            )));
        }
        let mut sum = 0.0;
        for j in 0..k {
            let pij = p[i * k + j];
            if !(pij >= 0.0) || !pij.is_finite() {
                return Err(Error::invalid("mix: P entries must be finite and >= 0"));
            }
            if pij > 1e-15 && r.entry(i, j) == 0.0 {
                return Err(Error::validation(format!(
                    "mix: P has support at ({i},{j}) where R vanishes"
                )));
            }
            sum += pij;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::validation(format!("mix: P row {i} sums to {sum} > 1")));
        }
    }
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            m[i * k + j] = (1.0 - eps[i]) * p[i * k + j] + eps[i] * r.entry(i, j);
        }
    }
    let rho = linalg::spectral_radius(&m, k);
    if rho >= 1.0 - 1e-12 {
        return Err(Error::numeric(format!(
            "mixed routing matrix has spectral radius {rho} >= 1"
        )));
    }
    Ok(m)
}

/// Solves (I − Rᵀ) η = δ. For δ ≥ 0 supported on the exogenous set, strict
/// positivity of η is equivalent to reachability; a nonpositive component is
/// reported as a validation error.
pub fn eta_of_delta(r: &RoutingMatrix, delta: &[f64]) -> Result<Vec<f64>> {
    let k = r.dim();
    if delta.len() != k {
        return Err(Error::invalid("eta_of_delta: delta must have K entries"));
    }
    for &d in delta {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::invalid("eta_of_delta: delta must be finite and >= 0"));
        }
    }
    let mut a = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            // (I - R^T)_{ij} = delta_{ij} - R_{ji}
            a[i * k + j] = if i == j { 1.0 } else { 0.0 } - r.entry(j, i);
        }
    }
    let eta = linalg::solve_dense(a, delta.to_vec())?;
    for (i, &v) in eta.iter().enumerate() {
        if v <= 0.0 {
            return Err(Error::validation(format!(
                "eta[{i}] = {v} is not positive: station {i} is unreachable from the support of delta"
            )));
        }
    }
    Ok(eta)
}

/// Rate-function family attached to a station's service or exogenous input.
/// All families are convex, nonnegative, and vanish exactly at the minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum RateSpec {
    /// g(x) = x log(x/λ) − x + λ on [0, ∞), g(0) = λ.
    Poisson { rate: f64 },
    /// Point mass at rate 1/interval: g(1/c) = 0, +∞ elsewhere.
    Deterministic { interval: f64 },
    /// Convex piecewise-linear table on [x_first, x_last]; +∞ outside.
    Tabulated { points: Vec<(f64, f64)> },
}

impl RateSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateSpec::Poisson { rate } => {
                if !(rate > &0.0) || !rate.is_finite() {
                    return Err(Error::validation("poisson rate must be finite and > 0"));
                }
            }
            RateSpec::Deterministic { interval } => {
                if !(interval > &0.0) || !interval.is_finite() {
                    return Err(Error::validation(
                        "deterministic interval must be finite and > 0",
                    ));
                }
            }
            RateSpec::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::validation("tabulated rate needs >= 2 points"));
                }
                let mut min_v = f64::INFINITY;
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::validation(
                            "tabulated x-values must be strictly increasing",
                        ));
                    }
                }
                for &(x, v) in points {
                    if !x.is_finite() || !v.is_finite() || v < 0.0 || x < 0.0 {
                        return Err(Error::validation(
                            "tabulated points must be finite with x, v >= 0",
                        ));
                    }
                    min_v = min_v.min(v);
                }
                if min_v > 1e-12 {
                    return Err(Error::validation(
                        "tabulated rate must vanish at its minimizer",
                    ));
                }
                // convexity via slopes
                let mut prev_slope = f64::NEG_INFINITY;
                for w in points.windows(2) {
                    let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                    if s < prev_slope - 1e-9 {
                        return Err(Error::validation("tabulated rate must be convex"));
                    }
                    prev_slope = prev_slope.max(s);
                }
            }
        }
        Ok(())
    }

    /// Evaluates the rate function; +∞ outside the domain.
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            RateSpec::Poisson { rate } => {
                if x < 0.0 {
                    f64::INFINITY
                } else if x == 0.0 {
                    *rate
                } else {
                    x * (x / rate).ln() - x + rate
                }
            }
            RateSpec::Deterministic { interval } => {
                let mu = 1.0 / interval;
                if (x - mu).abs() <= 1e-12 * (1.0 + mu) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            RateSpec::Tabulated { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if x < first.0 - 1e-15 || x > last.0 + 1e-15 {
                    return f64::INFINITY;
                }
                let x = x.clamp(first.0, last.0);
                let mut lo = 0;
                let mut hi = points.len() - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if points[mid].0 <= x {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (x0, v0) = points[lo];
                let (x1, v1) = points[hi];
                v0 + (v1 - v0) * ((x - x0) / (x1 - x0))
            }
        }
    }

    /// The unique argmin (rate functions vanish exactly there).
    pub fn minimizer(&self) -> f64 {
        match self {
            RateSpec::Poisson { rate } => *rate,
            RateSpec::Deterministic { interval } => 1.0 / interval,
            RateSpec::Tabulated { points } => {
                points
                    .iter()
                    .cloned()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap()
                    .0
            }
        }
    }

    /// True when the effective domain extends to +∞ (no right endpoint).
    pub fn domain_right_open(&self) -> bool {
        matches!(self, RateSpec::Poisson { .. })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, RateSpec::Deterministic { .. })
    }
}

/// Per-station description used by the JSON network specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub service: RateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exogenous: Option<RateSpec>,
}

/// Serializable network description: stations (0-based indices) plus the
/// routing matrix. Validation checks families, substochasticity, spectral
/// radius, and reachability from the exogenous set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub stations: Vec<StationSpec>,
    pub routing: Vec<Vec<f64>>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<RateModel> {
        if self.stations.len() != self.k {
            return Err(Error::validation(format!(
                "expected {} stations, found {}",
                self.k,
                self.stations.len()
            )));
        }
        let routing = RoutingMatrix::new(self.routing.clone())?;
        if routing.dim() != self.k {
            return Err(Error::validation("routing matrix dimension mismatch"));
        }
        for (i, st) in self.stations.iter().enumerate() {
            st.service
                .validate()
                .map_err(|e| Error::validation(format!("station {i} service: {e}")))?;
            if let Some(exo) = &st.exogenous {
                exo.validate()
                    .map_err(|e| Error::validation(format!("station {i} exogenous: {e}")))?;
            }
        }
        let exo: Vec<bool> = self.stations.iter().map(|s| s.exogenous.is_some()).collect();
        if !exo.iter().any(|&b| b) {
            return Err(Error::validation("at least one station must have exogenous input"));
        }
        if !check_reachability(&routing, &exo) {
            return Err(Error::validation(
                "some station is unreachable from the exogenous set",
            ));
        }
        Ok(RateModel {
            routing,
            service: self.stations.iter().map(|s| s.service.clone()).collect(),
            exogenous: self.stations.iter().map(|s| s.exogenous.clone()).collect(),
        })
    }
}

/// Validated rate model: per-station service and exogenous rate functions
/// plus the routing matrix.
#[derive(Clone, Debug)]
pub struct RateModel {
    pub routing: RoutingMatrix,
    pub service: Vec<RateSpec>,
    pub exogenous: Vec<Option<RateSpec>>,
}

impl RateModel {
    pub fn dim(&self) -> usize {
        self.routing.dim()
    }

    pub fn exogenous_set(&self) -> Vec<bool> {
        self.exogenous.iter().map(|e| e.is_some()).collect()
    }

    /// True when any station uses a deterministic service family; callers
    /// constructing tilted approximating sequences must reject such models
    /// because the family's effective domain is a single point.
    pub fn has_deterministic_service(&self) -> bool {
        self.service.iter().any(|s| s.is_deterministic())
    }
}

/// A network path triple (N, S, P) with its exogenous set, either counting
/// (step) or fluid (piecewise) flavored.
#[derive(Clone, Debug)]
pub struct NetworkPaths<C: Curve> {
    pub n: VectorPath<C>,
    pub s: VectorPath<C>,
    pub p: RoutingPath<C>,
    pub exogenous: Vec<bool>,
}

impl<C: Curve> NetworkPaths<C> {
    pub fn new(
        n: VectorPath<C>,
        s: VectorPath<C>,
        p: RoutingPath<C>,
        exogenous: Vec<bool>,
    ) -> Result<Self> {
        let k = s.dim();
        if n.dim() != k || p.dim() != k || exogenous.len() != k {
            return Err(Error::invalid("network paths must share dimension K"));
        }
        // N must be constant off the exogenous set
        for (i, c) in n.components.iter().enumerate() {
            if exogenous[i] {
                continue;
            }
            let v0 = c.eval(0.0);
            for t in c.knots() {
                if (c.eval(t) - v0).abs() > 1e-12 {
                    return Err(Error::validation(format!(
                        "N[{i}] varies but station {i} is not exogenous"
                    )));
                }
            }
            if c.tail_slope() != 0.0 {
                return Err(Error::validation(format!(
                    "N[{i}] has nonzero tail slope but station {i} is not exogenous"
                )));
            }
        }
        Ok(NetworkPaths { n, s, p, exogenous })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn routing_matrix_accepts_and_reports_radius() {
        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert!((r.spectral_radius() - 0.5).abs() < 1e-10);
        let r = RoutingMatrix::new(vec![vec![0.9]]).unwrap();
        assert!((r.spectral_radius() - 0.9).abs() < 1e-10);
        let r = RoutingMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(r.spectral_radius(), 0.0);
    }

    #[test]
    fn routing_matrix_rejections() {
        assert!(RoutingMatrix::new(vec![vec![-0.1]]).is_err());
        assert!(RoutingMatrix::new(vec![vec![0.6, 0.6], vec![0.0, 0.0]]).is_err());
        // permutation: substochastic but spectral radius 1
        assert!(RoutingMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(RoutingMatrix::new(vec![vec![0.5, 0.5], vec![0.5]]).is_err());
    }

    #[test]
    fn reachability_examples() {
        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.25, 0.0]]).unwrap();
        assert!(check_reachability(&r, &[true, true]));

        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        assert!(check_reachability(&r, &[true, false]));
        assert!(!check_reachability(&r, &[false, true]));

        let r = RoutingMatrix::identity_free(2);
        assert!(!check_reachability(&r, &[true, false]));
    }

    #[test]
    fn eta_examples() {
        let r = RoutingMatrix::identity_free(3);
        let eta = eta_of_delta(&r, &[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(eta, vec![1.0, 2.0, 0.5]);

        let r = RoutingMatrix::new(vec![vec![0.5]]).unwrap();
        let eta = eta_of_delta(&r, &[1.0]).unwrap();
        assert!((eta[0] - 2.0).abs() < 1e-12);

        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let eta = eta_of_delta(&r, &[1.0, 0.0]).unwrap();
        assert!((eta[0] - 1.0).abs() < 1e-12);
        assert!((eta[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eta_positivity_failure_is_reachability_failure() {
        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        // delta supported only at station 1, which cannot feed station 0
        let res = eta_of_delta(&r, &[0.0, 1.0]);
        assert!(matches!(res, Err(Error::Validation(_))));
        assert!(!check_reachability(&r, &[false, true]));
    }

    #[test]
    fn eta_defining_equation_and_neumann() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let k = rng.gen_range(1..=5);
            // row sums <= 0.8 so the Neumann series converges fast
            let mut rows = vec![vec![0.0; k]; k];
            for row in rows.iter_mut() {
                let mut budget: f64 = 0.8;
                for v in row.iter_mut() {
                    if rng.gen_bool(0.7) {
                        *v = rng.gen_range(0.0..budget.max(1e-9));
                        budget -= *v;
                    }
                }
            }
            let r = RoutingMatrix::new(rows).unwrap();
            let delta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
            let eta = eta_of_delta(&r, &delta).unwrap();

            // defining equation residual
            for i in 0..k {
                let mut v = eta[i];
                for j in 0..k {
                    v -= r.entry(j, i) * eta[j];
                }
                assert!((v - delta[i]).abs() < 1e-10, "defining equation residual");
            }

            // Neumann series sum_m (R^T)^m delta, run until terms vanish
            let mut acc = delta.clone();
            let mut term = delta.clone();
            for _ in 0..2000 {
                let mut next = vec![0.0; k];
                for i in 0..k {
                    for j in 0..k {
                        next[i] += r.entry(j, i) * term[j];
                    }
                }
                for i in 0..k {
                    acc[i] += next[i];
                }
                let m = next.iter().fold(0.0f64, |a, v| a.max(*v));
                term = next;
                if m < 1e-13 {
                    break;
                }
            }
            for i in 0..k {
                assert!(
                    (acc[i] - eta[i]).abs() < 1e-8,
                    "Neumann mismatch: {} vs {}",
                    acc[i],
                    eta[i]
                );
            }
        }
    }

    #[test]
    fn mix_example() {
        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let p = vec![0.0, 1.0, 1.0, 0.0];
        let m = mix_with_r(&p, &r, &[0.5, 0.5]).unwrap();
        assert_eq!(m, vec![0.0, 0.75, 0.75, 0.0]);
        assert!((linalg::spectral_radius(&m, 2) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn mix_rejects_support_violation_and_bad_eps() {
        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        // P routes 1 -> 0 where R vanishes
        let p = vec![0.0, 1.0, 1.0, 0.0];
        assert!(mix_with_r(&p, &r, &[0.5, 0.5]).is_err());

        let r = RoutingMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let p = vec![0.0, 1.0, 1.0, 0.0];
        assert!(mix_with_r(&p, &r, &[0.0, 0.5]).is_err());
        assert!(mix_with_r(&p, &r, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn mix_keeps_radius_below_one_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let k = rng.gen_range(1..=4);
            // R with full support and radius < 1
            let mut rows = vec![vec![0.0; k]; k];
            for row in rows.iter_mut() {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let scale = rng.gen_range(0.3..0.98) / s;
                for (v, r) in row.iter_mut().zip(raw) {
                    *v = r * scale;
                }
            }
            let r = RoutingMatrix::new(rows).unwrap();
            // P substochastic with arbitrary support (R has full support)
            let mut p = vec![0.0; k * k];
            for i in 0..k {
                let raw: Vec<f64> = (0..k)
                    .map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.0..1.0) } else { 0.0 })
                    .collect();
                let s: f64 = raw.iter().sum();
                let scale = if s > 0.0 { rng.gen_range(0.0..1.0) / s } else { 0.0 };
                for j in 0..k {
                    p[i * k + j] = raw[j] * scale;
                }
            }
            let eps: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-4..1.0f64)).collect();
            let m = mix_with_r(&p, &r, &eps).unwrap();
            let rho = linalg::spectral_radius(&m, k);
            assert!(rho < 1.0, "mixed radius {rho} >= 1");
        }
    }

    #[test]
    fn rate_families_shape() {
        let pois = RateSpec::Poisson { rate: 1.0 };
        pois.validate().unwrap();
        assert_eq!(pois.evaluate(1.0), 0.0);
        assert_eq!(pois.minimizer(), 1.0);
        assert!((pois.evaluate(2.0) - (2.0 * 2.0f64.ln() - 1.0)).abs() < 1e-12);
        assert_eq!(pois.evaluate(0.0), 1.0);
        assert!(pois.evaluate(-0.5).is_infinite());
        assert!(pois.domain_right_open());

        let det = RateSpec::Deterministic { interval: 0.5 };
        det.validate().unwrap();
        assert_eq!(det.evaluate(2.0), 0.0);
        assert!(det.evaluate(1.9).is_infinite());
        assert_eq!(det.minimizer(), 2.0);

        let tab = RateSpec::Tabulated {
            points: vec![(0.0, 1.0), (1.0, 0.0), (3.0, 4.0)],
        };
        tab.validate().unwrap();
        assert_eq!(tab.evaluate(1.0), 0.0);
        assert!((tab.evaluate(2.0) - 2.0).abs() < 1e-12);
        assert!(tab.evaluate(3.5).is_infinite());
        assert_eq!(tab.minimizer(), 1.0);
    }

    #[test]
    fn rate_families_reject_bad_shapes() {
        assert!(RateSpec::Poisson { rate: 0.0 }.validate().is_err());
        assert!(RateSpec::Deterministic { interval: -1.0 }.validate().is_err());
        // non-convex table
        assert!(RateSpec::Tabulated {
            points: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.5)]
        }
        .validate()
        .is_err());
        // minimum not zero
        assert!(RateSpec::Tabulated {
            points: vec![(0.0, 1.0), (1.0, 0.5)]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rate_families_convex_nonneg_zero_at_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let fams = vec![
            RateSpec::Poisson { rate: 0.7 },
            RateSpec::Poisson { rate: 2.5 },
            RateSpec::Tabulated {
                points: vec![(0.1, 2.0), (0.5, 0.0), (1.0, 0.5), (2.0, 3.0)],
            },
        ];
        for f in &fams {
            f.validate().unwrap();
            assert_eq!(f.evaluate(f.minimizer()), 0.0);
            for _ in 0..400 {
                let x = rng.gen_range(0.0..3.0);
                let y = rng.gen_range(0.0..3.0);
                let fx = f.evaluate(x);
                let fy = f.evaluate(y);
                assert!(fx >= 0.0);
                if fx.is_finite() && fy.is_finite() {
                    let mid = f.evaluate(0.5 * (x + y));
                    assert!(
                        mid <= 0.5 * (fx + fy) + 1e-9,
                        "convexity violated at {x}, {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn network_spec_json_round_trip_and_validation() {
        let json = r#"{
            "K": 2,
            "stations": [
                {"service": {"family": "poisson", "rate": 2.0},
                 "exogenous": {"family": "poisson", "rate": 1.0}},
                {"service": {"family": "poisson", "rate": 3.0}}
            ],
            "routing": [[0.0, 0.5], [0.25, 0.0]]
        }"#;
        let spec: NetworkSpec = serde_json::from_str(json).unwrap();
        let model = spec.validate().unwrap();
        assert_eq!(model.dim(), 2);
        assert_eq!(model.exogenous_set(), vec![true, false]);
        assert!(!model.has_deterministic_service());
        let back = serde_json::to_string(&spec).unwrap();
        let again: NetworkSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn network_spec_rejects_unreachable_station() {
        let json = r#"{
            "K": 2,
            "stations": [
                {"service": {"family": "poisson", "rate": 2.0},
                 "exogenous": {"family": "poisson", "rate": 1.0}},
                {"service": {"family": "poisson", "rate": 3.0}}
            ],
            "routing": [[0.0, 0.0], [0.25, 0.0]]
        }"#;
        let spec: NetworkSpec = serde_json::from_str(json).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn network_paths_constant_off_exogenous() {
        use crate::paths::PiecewisePath;
        let k = 2;
        let n = VectorPath::new(vec![
            PiecewisePath::linear(0.0, 1.0, 2.0).unwrap(),
            PiecewisePath::constant(0.0, 2.0).unwrap(),
        ])
        .unwrap();
        let s = VectorPath::new(vec![
            PiecewisePath::linear(0.0, 2.0, 2.0).unwrap(),
            PiecewisePath::linear(0.0, 2.0, 2.0).unwrap(),
        ])
        .unwrap();
        let p = RoutingPath::new(
            k,
            vec![
                PiecewisePath::constant(0.0, 4.0).unwrap(),
                PiecewisePath::linear(0.0, 0.5, 4.0).unwrap(),
                PiecewisePath::constant(0.0, 4.0).unwrap(),
                PiecewisePath::constant(0.0, 4.0).unwrap(),
            ],
        )
        .unwrap();
        assert!(NetworkPaths::new(n.clone(), s.clone(), p.clone(), vec![true, false]).is_ok());
        // station 0 varying while marked non-exogenous must be rejected
        assert!(NetworkPaths::new(n, s, p, vec![false, false]).is_err());
    }
}
