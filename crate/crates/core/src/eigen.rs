//! Largest eigenpairs of real symmetric operators.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Top eigenpairs, values descending, vectors Euclidean-orthonormal.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Dense symmetric eigensolve of `a` (row-major, `n x n`), keeping the `m` largest.
pub fn dense_top(a: &[f64], n: usize, m: usize) -> Result<SymEigen> {
    let mat = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let e = mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Eigen { worst: f64::NAN, restarts: 0 })?;
    let s = e.S().column_vector();
    let u = e.U();
    let m = m.min(n);
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for k in 0..m {
        let c = n - 1 - k;
        values.push(s[c]);
        vectors.push((0..n).map(|i| u[(i, c)]).collect());
    }
    Ok(SymEigen { values, vectors })
}

/// Settings for [`lanczos_top`].
#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Residual target `||A u - theta u|| <= tol * max(1, |theta|)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov basis size; `0` picks `max(2m + 20, m + 40)`.
    pub ncv: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-12, max_restarts: 2000, ncv: 0, seed: 0x5eed }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components of `w` along `basis` (two passes); returns the
/// accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coef = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coef.iter_mut().zip(basis) {
            let h = dot(v, w);
            *c += h;
            w.iter_mut().zip(v).for_each(|(x, y)| *x -= h * y);
        }
    }
    coef
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.r#gen::<f64>() - 0.5).collect();
        orthogonalize(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Thick-restart Lanczos with full reorthogonalization for the `m` largest
/// (algebraic) eigenpairs of the symmetric operator `apply`.
pub fn lanczos_top(
    n: usize,
    m: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    opts: LanczosOptions,
) -> Result<SymEigen> {
    let m = m.min(n);
    let ncv = if opts.ncv == 0 { (2 * m + 20).max(m + 40) } else { opts.ncv }.min(n);
    if ncv <= m {
        return Err(Error::Config(format!("Krylov size {ncv} must exceed the number of wanted pairs {m}")));
    }
    let keep_target = (m + (ncv - m) / 2).min(ncv - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ncv);
    // Projected matrix, kept dense: small and rebuilt on restart.
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(ncv);
    let mut next = random_unit(n, &mut rng, &[]);
    let mut w = vec![0.0; n];
    let mut worst = f64::INFINITY;

    for restart in 0..=opts.max_restarts {
        let mut beta = 0.0;
        while basis.len() < ncv {
            let j = basis.len();
            basis.push(next.clone());
            apply(&basis[j], &mut w);
            let coef = orthogonalize(&basis, &mut w);
            for (i, &c) in coef.iter().enumerate().take(j) {
                h[i].push(c);
            }
            h.push(coef);
            beta = norm(&w);
            if beta <= 1e-13 * h[j][j].abs().max(1.0) {
                // Invariant subspace reached; continue with a fresh direction.
                beta = 0.0;
                next = random_unit(n, &mut rng, &basis);
            } else {
                next = w.iter().map(|x| x / beta).collect();
            }
        }

        let k = basis.len();
        let flat: Vec<f64> = (0..k * k).map(|idx| 0.5 * (h[idx / k][idx % k] + h[idx % k][idx / k])).collect();
        let ritz = dense_top(&flat, k, k)?;
        let resid: Vec<f64> = ritz.vectors.iter().map(|y| beta * y[k - 1].abs()).collect();
        worst = (0..m).map(|i| resid[i] / ritz.values[i].abs().max(1.0)).fold(0.0, f64::max);

        let keep = if worst <= opts.tol { m } else { keep_target };
        let new_basis: Vec<Vec<f64>> = (0..keep)
            .map(|i| {
                let y = &ritz.vectors[i];
                let mut u = vec![0.0; n];
                for (c, v) in y.iter().zip(&basis) {
                    u.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
                }
                u
            })
            .collect();
        if worst <= opts.tol {
            let vectors = new_basis
                .into_iter()
                .map(|mut u| {
                    let nu = norm(&u);
                    u.iter_mut().for_each(|x| *x /= nu);
                    u
                })
                .collect();
            return Ok(SymEigen { values: ritz.values[..m].to_vec(), vectors });
        }
        if restart == opts.max_restarts {
            break;
        }
        // Restart: kept Ritz vectors diagonalize the projection, coupled to
        // the residual direction through the last components of their Ritz vectors.
        basis = new_basis;
        h = (0..keep)
            .map(|i| {
                let mut row = vec![0.0; keep];
                row[i] = ritz.values[i];
                row
            })
            .collect();
        if beta == 0.0 {
            next = random_unit(n, &mut rng, &basis);
        } else {
            orthogonalize(&basis, &mut next);
            let nn = norm(&next);
            next.iter_mut().for_each(|x| *x /= nn);
        }
    }
    Err(Error::Eigen { worst, restarts: opts.max_restarts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_path(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0;
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
        }
        a
    }

    #[test]
    fn dense_matches_closed_form() {
        let n = 20;
        let e = dense_top(&laplacian_path(n), n, 3).unwrap();
        for (k, v) in e.values.iter().enumerate() {
            let j = (n - k) as f64;
            let exact = 2.0 - 2.0 * (j * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let n = 300;
        let a = laplacian_path(n);
        let dense = dense_top(&a, n, 6).unwrap();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = 2.0 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        };
        let it = lanczos_top(n, 6, apply, LanczosOptions::default()).unwrap();
        for (a, b) in dense.values.iter().zip(&it.values) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
