//! Minimal dense linear algebra for small (K ≤ ~16) nonnegative matrices:
//! LU solves and a certified spectral-radius routine. Matrices are row-major
//! `Vec<f64>` slices with explicit dimension.

use crate::{Error, Result};

/// Solves `A x = b` by LU decomposition with partial pivoting. `a` is square
/// row-major and consumed as scratch.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix/vector dimension mismatch");
    let scale: f64 = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() <= scale * 1e-14 {
            return Err(Error::numeric("singular linear system"));
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for j in col + 1..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in col + 1..n {
            s -= a[col * n + j] * b[j];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(b)
}

/// Strongly connected components of the directed graph with an edge i→j when
/// `m[i*n+j] > 0`. Iterative Tarjan; returns components as index lists.
fn strongly_connected(m: &[f64], n: usize) -> Vec<Vec<usize>> {
    #[derive(Clone)]
    struct Node {
        index: usize,
        lowlink: usize,
        on_stack: bool,
        visited: bool,
    }
    let mut nodes = vec![
        Node {
            index: 0,
            lowlink: 0,
            on_stack: false,
            visited: false
        };
        n
    ];
    let mut counter = 0usize;
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    for start in 0..n {
        if nodes[start].visited {
            continue;
        }
        // explicit DFS stack of (vertex, next-successor)
        let mut dfs = vec![(start, 0usize)];
        nodes[start].visited = true;
        nodes[start].index = counter;
        nodes[start].lowlink = counter;
        counter += 1;
        nodes[start].on_stack = true;
        stack.push(start);
        while let Some(&mut (v, ref mut next)) = dfs.last_mut() {
            if *next < n {
                let w = *next;
                *next += 1;
                if m[v * n + w] <= 0.0 {
                    continue;
                }
                if !nodes[w].visited {
                    nodes[w].visited = true;
                    nodes[w].index = counter;
                    nodes[w].lowlink = counter;
                    counter += 1;
                    nodes[w].on_stack = true;
                    stack.push(w);
                    dfs.push((w, 0));
                } else if nodes[w].on_stack {
                    nodes[v].lowlink = nodes[v].lowlink.min(nodes[w].index);
                }
            } else {
                dfs.pop();
                if let Some(&(parent, _)) = dfs.last() {
                    nodes[parent].lowlink = nodes[parent].lowlink.min(nodes[v].lowlink);
                }
                if nodes[v].lowlink == nodes[v].index {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        nodes[w].on_stack = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Spectral radius of a nonnegative square matrix to absolute accuracy 1e−10.
///
/// Power iteration with a unit diagonal shift (which makes each irreducible
/// block primitive and shifts the Perron root by exactly 1) and
/// Collatz–Wielandt two-sided bounds as the stopping criterion. Reducible
/// matrices are handled by taking the maximum over strongly connected
/// components, where the restriction is irreducible.
pub fn spectral_radius(m: &[f64], n: usize) -> f64 {
    assert_eq!(m.len(), n * n, "matrix must be square");
    if n == 0 {
        return 0.0;
    }
    // Gershgorin-style early exit: row sums bound ρ from both sides for
    // nonnegative matrices, so equal row sums pin it exactly.
    let mut rmax = f64::NEG_INFINITY;
    let mut rmin = f64::INFINITY;
    for i in 0..n {
        let s: f64 = m[i * n..(i + 1) * n].iter().sum();
        rmax = rmax.max(s);
        rmin = rmin.min(s);
    }
    if rmax <= 0.0 {
        return 0.0;
    }
    if rmax - rmin <= 1e-12 {
        return 0.5 * (rmax + rmin);
    }
    let mut best = 0.0f64;
    for comp in strongly_connected(m, n) {
        let k = comp.len();
        if k == 1 {
            best = best.max(m[comp[0] * n + comp[0]]);
            continue;
        }
        // shifted submatrix B = M[comp] + I
        let mut b = vec![0.0; k * k];
        for (bi, &i) in comp.iter().enumerate() {
            for (bj, &j) in comp.iter().enumerate() {
                b[bi * k + bj] = m[i * n + j];
            }
            b[bi * k + bi] += 1.0;
        }
        let mut x = vec![1.0f64; k];
        let mut rho = 1.0;
        for _ in 0..10_000 {
            let mut y = vec![0.0f64; k];
            for i in 0..k {
                let mut s = 0.0;
                for j in 0..k {
                    s += b[i * k + j] * x[j];
                }
                y[i] = s;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..k {
                let r = y[i] / x[i];
                lo = lo.min(r);
                hi = hi.max(r);
            }
            rho = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 {
                break;
            }
            let norm = y.iter().cloned().fold(0.0f64, f64::max);
            for v in &mut y {
                *v /= norm;
            }
            x = y;
        }
        best = best.max(rho - 1.0);
    }
    best.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = vec![2.0, 1.0, 1.0, 3.0];
        let x = solve_dense(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn singular_rejected() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(solve_dense(a, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn radius_zero_matrix() {
        assert_eq!(spectral_radius(&[0.0, 0.0, 0.0, 0.0], 2), 0.0);
    }

    #[test]
    fn radius_symmetric_pair() {
        let r = spectral_radius(&[0.0, 0.5, 0.5, 0.0], 2);
        assert!((r - 0.5).abs() < 1e-10);
    }

    #[test]
    fn radius_one_by_one() {
        assert!((spectral_radius(&[0.9], 1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn radius_nilpotent_reducible() {
        // strictly upper triangular: ρ = 0, power iteration alone would crawl
        let r = spectral_radius(&[0.0, 1.0, 0.0, 0.0], 2);
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn radius_block_triangular() {
        // blocks with radii 0.3 and 0.8 coupled one-way
        #[rustfmt::skip]
        let m = vec![
            0.3, 0.9, 0.0,
            0.0, 0.0, 0.8,
            0.0, 0.8, 0.0,
        ];
        let r = spectral_radius(&m, 3);
        assert!((r - 0.8).abs() < 1e-10);
    }

    #[test]
    fn radius_random_vs_row_sum_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let mut m = vec![0.0; n * n];
            for v in &mut m {
                if rng.gen_bool(0.6) {
                    *v = rng.gen_range(0.0..0.4);
                }
            }
            let rho = spectral_radius(&m, n);
            let rmax: f64 = (0..n)
                .map(|i| m[i * n..(i + 1) * n].iter().sum())
                .fold(0.0f64, f64::max);
            assert!(rho <= rmax + 1e-9, "Collatz upper bound violated");
            assert!(rho >= -1e-12);
        }
    }
}
