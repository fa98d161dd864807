//! Small dense helpers for the GP module: Cholesky factorization with
//! escalating diagonal jitter, and the reverse-mode derivative of the
//! factorization used by the ELBO gradient.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Factor `k + jitter*I`, escalating the jitter by x10 up to `max_jitter`
/// when the matrix is not numerically positive definite. Returns the lower
/// factor and the jitter that succeeded.
pub fn cholesky_with_jitter(
    k: &DMatrix<f64>,
    jitter: f64,
    max_jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(kj) {
            return Ok((chol, j));
        }
        j *= 10.0;
        if j > max_jitter {
            return Err(Error::Numerical(format!(
                "covariance matrix is not positive definite even with jitter {max_jitter} \
                 (badly conditioned kernel or duplicate inducing points)"
            )));
        }
    }
}

/// Lower-triangular mask in place (zero the strict upper part).
pub fn tril_mask(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            m[(r, c)] = 0.0;
        }
    }
}

/// Reverse-mode derivative of the Cholesky factorization.
///
/// Given lower `l` with `l*l^T = K` and the gradient `lbar = dLoss/dL`
/// (lower triangular), returns the symmetric gradient with respect to `K`:
/// `Kbar = 0.5 * L^-T (Phi(L^T Lbar) + Phi(L^T Lbar)^T) L^-1`, where `Phi`
/// keeps the lower triangle and halves the diagonal. The chain rule to
/// parameters then sums `Kbar[p][q] * dK[p][q]/dtheta` over all ordered
/// pairs.
pub fn cholesky_backward(l: &DMatrix<f64>, lbar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut p = l.transpose() * lbar;
    // Phi: lower triangle with halved diagonal
    for r in 0..n {
        p[(r, r)] *= 0.5;
        for c in (r + 1)..n {
            p[(r, c)] = 0.0;
        }
    }
    let sym = &p + p.transpose();
    let lt = l.transpose();
    // X = L^-T * sym
    let x = lt
        .solve_upper_triangular(&sym)
        .expect("cholesky factor has positive diagonal");
    // Kbar = 0.5 * X * L^-1  via  Kbar^T = L^-T X^T
    let kbar_t = lt
        .solve_upper_triangular(&x.transpose())
        .expect("cholesky factor has positive diagonal");
    0.5 * kbar_t.transpose()
}
