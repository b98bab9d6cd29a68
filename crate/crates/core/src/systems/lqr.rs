//! Continuous-time LQR gains for deriving default backup-policy feedback.

use crate::{Error, Matrix, Result};

/// Stabilizing solution of `A'P + PA - P B R^-1 B' P + Q = 0`.
///
/// Integrates the Riccati differential equation from `P = 0` until it is
/// stationary, which converges to the stabilizing solution whenever `(A, B)`
/// is stabilizable and `(A, Q^1/2)` detectable.
pub fn care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.nrows() != b.ncols() {
        return Err(Error::InvalidParameter("inconsistent LQR matrix shapes".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("LQR input weight is singular".into()))?;
    let s = b * &r_inv * b.transpose();
    let rhs = |p: &Matrix| a.transpose() * p + p * a - p * &s * p + q;

    let mut p = Matrix::zeros(n, n);
    for _ in 0..2_000_000 {
        let k1 = rhs(&p);
        if k1.amax() < 1e-13 * (1.0 + p.amax()) {
            return Ok(0.5 * (&p + p.transpose()));
        }
        let dt = 0.05 / (1.0 + a.norm() + (&s * &p).norm() + q.norm().sqrt());
        let k2 = rhs(&(&p + &k1 * (0.5 * dt)));
        let k3 = rhs(&(&p + &k2 * (0.5 * dt)));
        let k4 = rhs(&(&p + &k3 * dt));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::InvalidParameter(
        "Riccati iteration did not converge".into(),
    ))
}

/// Optimal state feedback `K` for `u = -K x`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let p = care(a, b, q, r)?;
    let r_inv = r.clone().try_inverse().expect("checked in care");
    Ok(r_inv * b.transpose() * p)
}
