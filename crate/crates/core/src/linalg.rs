//! Dense Hermitian helpers and a restarted Lanczos eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{KqdError, Result};
use crate::rng::task_rng;

const KRYLOV_BLOCK: usize = 64;
const KEPT_RITZ: usize = 16;
const MAX_RESTARTS: usize = 500;

/// Extreme eigenvalue of a real symmetric operator given by `matvec(x, y)`,
/// `y = A x`. Returns the smallest eigenvalue, or the largest if `largest`.
///
/// Thick-restart Lanczos with full reorthogonalization.
pub fn lanczos_extreme<F>(dim: usize, largest: bool, matvec: F) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(KqdError::Validation("empty operator".into()));
    }
    let sign = if largest { -1.0 } else { 1.0 };
    let mut rng = task_rng(0x1a2c_5e, dim as u64);
    let mut v0: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v0);

    let m_max = dim.min(KRYLOV_BLOCK);
    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut t = DMatrix::<f64>::zeros(m_max, m_max);
    let mut w = vec![0.0; dim];
    let mut estimate = f64::NAN;
    for _ in 0..MAX_RESTARTS {
        let mut b_last;
        loop {
            let j = basis.len() - 1;
            matvec(&basis[j], &mut w);
            if largest {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            t[(j, j)] = dot(&w, &basis[j]);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    axpy(-c, v, &mut w);
                }
            }
            b_last = norm(&w);
            if basis.len() == m_max || b_last < 1e-12 {
                break;
            }
            t[(j, j + 1)] = b_last;
            t[(j + 1, j)] = b_last;
            basis.push(w.iter().map(|x| x / b_last).collect());
        }
        let m = basis.len();
        let (theta, y) = sorted_symmetric_eigen(t.view((0, 0), (m, m)).into_owned());
        estimate = theta[0];
        let residual = (b_last * y[(m - 1, 0)]).abs();
        if b_last < 1e-12 || m == dim || residual < 1e-10 * theta[0].abs().max(1.0) {
            return Ok(sign * estimate);
        }
        let keep = KEPT_RITZ.min(m - 1);
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        for i in 0..keep {
            let mut ritz = vec![0.0; dim];
            for (r, v) in basis.iter().enumerate() {
                axpy(y[(r, i)], v, &mut ritz);
            }
            next.push(ritz);
        }
        next.push(w.iter().map(|x| x / b_last).collect());
        t.fill(0.0);
        for i in 0..keep {
            t[(i, i)] = theta[i];
            let s = b_last * y[(m - 1, i)];
            t[(i, keep)] = s;
            t[(keep, i)] = s;
        }
        basis = next;
    }
    Err(KqdError::Numerical(format!(
        "Lanczos did not converge after {MAX_RESTARTS} restarts (last estimate {})",
        sign * estimate
    )))
}

fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    a.iter_mut().for_each(|x| *x /= n);
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (DVector<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn unitary_evolution(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    let (values, vectors) = hermitian_eigen(h);
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| Complex64::from_polar(1.0, -t * l)),
    ));
    &vectors * phases * vectors.adjoint()
}

/// `(M + M^dagger) / 2`.
pub fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
