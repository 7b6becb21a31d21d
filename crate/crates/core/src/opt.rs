//! Small-scale convex optimization used by the local rate solvers: golden
//! section line search, a dense two-phase simplex for feasibility checks and
//! linear oracles, Dykstra projection onto polyhedra, projected gradient with
//! Barzilai-Borwein steps, and a Frank-Wolfe fallback.
//!
//! All variables are implicitly nonnegative in the LP interface; the
//! polyhedron type carries explicit boxes instead.

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Golden-section minimizer of a unimodal function on [a, b].
/// Returns (argmin, min value).
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Linear program over nonnegative variables:
/// minimize c·x subject to a_eq x = b_eq, a_ub x ≤ b_ub, x ≥ 0.
#[derive(Clone, Debug, Default)]
pub struct Lp {
    pub n: usize,
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m rows, each of length ncols+1 (rhs last)
    obj: Vec<f64>,       // reduced-cost row, length ncols+1 (negated objective at rhs)
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let d = self.rows[row][col];
        for v in &mut self.rows[row] {
            *v /= d;
        }
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let f = self.rows[r][col];
            if f != 0.0 {
                for j in 0..=self.ncols {
                    self.rows[r][j] -= f * self.rows[row][j];
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for j in 0..=self.ncols {
                self.obj[j] -= f * self.rows[row][j];
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule simplex on the current tableau. Returns false on
    /// unboundedness.
    fn run(&mut self, active_cols: usize) -> Result<bool> {
        for _ in 0..200_000 {
            let mut enter = None;
            for j in 0..active_cols {
                if self.obj[j] < -1e-11 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return Ok(true) };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > 1e-12 {
                    let ratio = self.rows[r][self.ncols] / a;
                    if ratio < best - 1e-12
                        || (ratio < best + 1e-12
                            && leave.map_or(true, |l| self.basis[r] < self.basis[l]))
                    {
                        best = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(row) = leave else { return Ok(false) };
            self.pivot(row, col);
        }
        Err(Error::numeric("simplex failed to terminate"))
    }
}

/// Two-phase dense simplex. Suited to the small problems produced by the
/// rate-function solvers (tens of variables).
pub fn solve_lp(lp: &Lp) -> Result<LpOutcome> {
    let n = lp.n;
    let m_ub = lp.a_ub.len();
    let m = lp.a_eq.len() + m_ub;
    let nslack = m_ub;
    let nart = m;
    let ncols = n + nslack + nart;

    let mut rows = Vec::with_capacity(m);
    let mut slack_idx = 0usize;
    for (k, (a, &b)) in lp
        .a_eq
        .iter()
        .zip(&lp.b_eq)
        .map(|(a, b)| (a, b, false))
        .chain(lp.a_ub.iter().zip(&lp.b_ub).map(|(a, b)| (a, b, true)))
        .map(|(a, b, s)| ((a, s), b))
        .enumerate()
    {
        let (coef, is_ub) = a;
        assert_eq!(coef.len(), n, "LP row has wrong arity");
        let mut row = vec![0.0; ncols + 1];
        row[..n].copy_from_slice(coef);
        if is_ub {
            row[n + slack_idx] = 1.0;
            slack_idx += 1;
        }
        row[ncols] = b;
        if row[ncols] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n + nslack + k] = 1.0;
        rows.push(row);
    }

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; ncols + 1];
    for row in &rows {
        for j in 0..=ncols {
            obj[j] -= row[j];
        }
    }
    for j in n + nslack..ncols {
        obj[j] += 1.0;
    }
    let basis: Vec<usize> = (0..m).map(|k| n + nslack + k).collect();
    let mut t = Tableau {
        rows,
        obj,
        basis,
        ncols,
    };
    t.run(ncols)?;
    let phase1 = -t.obj[ncols];
    if phase1 > 1e-8 {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive leftover artificials out of the basis; rows that cannot pivot are
    // redundant and harmless at zero level.
    for r in 0..t.rows.len() {
        if t.basis[r] >= n + nslack {
            if let Some(col) = (0..n + nslack).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, col);
            }
        }
    }

    // Phase 2 objective, eliminated over the current basis.
    let mut obj = vec![0.0; ncols + 1];
    obj[..n].copy_from_slice(&lp.c);
    for j in n + nslack..ncols {
        obj[j] = f64::INFINITY; // block re-entry of artificials
    }
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n && obj[b] != 0.0 {
            let f = obj[b];
            for j in 0..=ncols {
                if obj[j].is_finite() {
                    obj[j] -= f * t.rows[r][j];
                }
            }
        }
    }
    t.obj = obj;
    if !t.run(n + nslack)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[r][ncols];
        }
    }
    let value = dot(&lp.c, &x);
    Ok(LpOutcome::Optimal { x, value })
}

/// Affine subspace {x : A x = b} stored with orthonormalized rows so that
/// projection is a single sweep.
#[derive(Clone, Debug)]
pub struct AffineSet {
    q: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

impl AffineSet {
    pub fn new(a: &[Vec<f64>], b: &[f64], n: usize) -> Result<Self> {
        let mut q: Vec<Vec<f64>> = Vec::new();
        let mut beta = Vec::new();
        for (row, &rhs) in a.iter().zip(b) {
            assert_eq!(row.len(), n, "affine row has wrong arity");
            let mut v = row.clone();
            let mut r = rhs;
            for _ in 0..2 {
                for (qi, &bi) in q.iter().zip(&beta) {
                    let c = dot(qi, &v);
                    for (vj, qj) in v.iter_mut().zip(qi) {
                        *vj -= c * qj;
                    }
                    r -= c * bi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm <= 1e-12 {
                if r.abs() > 1e-9 {
                    return Err(Error::validation("inconsistent equality constraints"));
                }
                continue; // redundant row
            }
            for vj in v.iter_mut() {
                *vj /= norm;
            }
            beta.push(r / norm);
            q.push(v);
        }
        Ok(AffineSet { q, beta })
    }

    pub fn project(&self, x: &mut [f64]) {
        for (qi, &bi) in self.q.iter().zip(&self.beta) {
            let c = dot(qi, x) - bi;
            for (xj, qj) in x.iter_mut().zip(qi) {
                *xj -= c * qj;
            }
        }
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.q
            .iter()
            .zip(&self.beta)
            .map(|(qi, bi)| (dot(qi, x) - bi).abs())
            .fold(0.0, f64::max)
    }
}

/// Intersection of an affine subspace, a coordinate box, and halfspaces
/// a·x ≤ b. Projection uses Dykstra's algorithm, so the result converges to
/// the true Euclidean projection onto the intersection.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    pub affine: AffineSet,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub halfspaces: Vec<(Vec<f64>, f64)>,
}

impl Polyhedron {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let nsets = 2 + self.halfspaces.len();
        let mut cur = x.to_vec();
        let mut corr = vec![vec![0.0; n]; nsets];
        for _ in 0..2000 {
            let mut moved = 0.0f64;
            for (s, c) in corr.iter_mut().enumerate() {
                let mut y: Vec<f64> = cur.iter().zip(c.iter()).map(|(a, b)| a + b).collect();
                let before = y.clone();
                match s {
                    0 => self.affine.project(&mut y),
                    1 => {
                        for i in 0..n {
                            y[i] = y[i].clamp(self.lo[i], self.hi[i]);
                        }
                    }
                    _ => {
                        let (a, b) = &self.halfspaces[s - 2];
                        let v = dot(a, &y) - b;
                        if v > 0.0 {
                            let nn = dot(a, a);
                            for (yj, aj) in y.iter_mut().zip(a) {
                                *yj -= v * aj / nn;
                            }
                        }
                    }
                }
                for i in 0..n {
                    c[i] = before[i] - y[i];
                    moved = moved.max((y[i] - cur[i]).abs());
                }
                cur = y;
            }
            if moved <= 1e-13 {
                break;
            }
        }
        cur
    }

    /// Worst constraint violation at x.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v = self.affine.residual(x);
        for i in 0..x.len() {
            v = v.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
        }
        for (a, b) in &self.halfspaces {
            v = v.max(dot(a, x) - b);
        }
        v
    }
}

pub struct PgOpts {
    pub max_iters: usize,
    pub f_tol: f64,
}

impl Default for PgOpts {
    fn default() -> Self {
        PgOpts {
            max_iters: 20_000,
            f_tol: 1e-12,
        }
    }
}

/// Projected gradient with BB step seeding and Armijo backtracking.
/// `f` may return +inf outside its domain; backtracking then shrinks the step.
/// Returns the best point seen and its value.
pub fn minimize_pg(
    poly: &Polyhedron,
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: Vec<f64>,
    opts: &PgOpts,
) -> (Vec<f64>, f64) {
    let mut x = poly.project(&x0);
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut step = 1.0f64;
    let (mut best_x, mut best_f) = (x.clone(), fx);
    let mut stall = 0usize;
    for _ in 0..opts.max_iters {
        let mut t = step;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            let xp = poly.project(&trial);
            let d: Vec<f64> = xp.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dn = dot(&d, &d);
            if dn <= 1e-26 {
                accepted = false;
                break;
            }
            let fp = f(&xp);
            if fp <= fx - 1e-4 / t * dn {
                let gp = grad(&xp);
                let dg: Vec<f64> = gp.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sg = dot(&d, &dg);
                step = if sg > 1e-18 {
                    (dn / sg).clamp(1e-12, 1e8)
                } else {
                    (t * 2.0).min(1e8)
                };
                let drop = fx - fp;
                x = xp;
                fx = fp;
                g = gp;
                if fx < best_f {
                    best_f = fx;
                    best_x = x.clone();
                }
                stall = if drop <= opts.f_tol * (1.0 + fx.abs()) {
                    stall + 1
                } else {
                    0
                };
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || stall >= 30 {
            break;
        }
    }
    (best_x, best_f)
}

/// Frank-Wolfe over an LP-described polytope (the cost vector in `lp` is
/// ignored; gradients supply it). Pure cross-check path: slower than
/// projected gradient but needs only a linear oracle.
pub fn minimize_fw(
    lp: &Lp,
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: Vec<f64>,
    max_iters: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..max_iters {
        let g = grad(&x);
        let mut oracle = lp.clone();
        oracle.c = g.clone();
        let s = match solve_lp(&oracle)? {
            LpOutcome::Optimal { x, .. } => x,
            LpOutcome::Infeasible => {
                return Err(Error::validation("Frank-Wolfe oracle infeasible"))
            }
            LpOutcome::Unbounded => return Err(Error::numeric("Frank-Wolfe oracle unbounded")),
        };
        let d: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gap = -dot(&g, &d);
        if gap <= 1e-10 {
            break;
        }
        let (gamma, _) = golden_min(
            |t| {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                f(&y)
            },
            0.0,
            1.0,
            1e-12,
        );
        let mut moved = 0.0f64;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += gamma * di;
            moved = moved.max((gamma * di).abs());
        }
        let fnew = f(&x);
        if fx - fnew <= 1e-14 * (1.0 + fx.abs()) && moved <= 1e-12 {
            fx = fnew.min(fx);
            break;
        }
        fx = fnew;
    }
    Ok((x.clone(), fx))
}
