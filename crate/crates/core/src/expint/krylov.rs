//! Arnoldi approximation of `exp(t M) w`.

use alloc::vec::Vec;

use super::dense::{expm, DenseMatrix};
use crate::error::{Error, Result};

/// Linear operator for the Arnoldi process.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = M x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Any upper bound on a norm of `M`; used for the breakdown test.
    fn norm_bound(&self) -> f64;
}

/// Maximum number of step halvings before giving up.
pub const MAX_HALVINGS: u32 = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `exp(t M) w`, measured in the max norm over the first `measured` entries.
///
/// The step is split into `2^k` equal substeps, `k = 0, 1, ...`, until every
/// substep passes the a posteriori error test with local tolerance
/// `tol / 2^k`; each substep restarts the Arnoldi process.
pub fn expmv<M: LinearOperator + ?Sized>(
    op: &M,
    w: &[f64],
    t: f64,
    krylov_dim: usize,
    tol: f64,
    measured: usize,
) -> Result<Vec<f64>> {
    for halvings in 0..=MAX_HALVINGS {
        let substeps = 1usize << halvings;
        let s = t / substeps as f64;
        let local_tol = tol / substeps as f64;
        let mut x = w.to_vec();
        let mut converged = true;
        for _ in 0..substeps {
            match single_step(op, &x, s, krylov_dim, local_tol, measured) {
                Some(y) => x = y,
                None => {
                    converged = false;
                    break;
                }
            }
        }
        if converged {
            return Ok(x);
        }
    }
    Err(Error::BreakdownNotConverged {
        halvings: MAX_HALVINGS,
    })
}

/// One Krylov approximation of `exp(s M) x`, or `None` when the error
/// estimate exceeds `tol` relative to the result.
fn single_step<M: LinearOperator + ?Sized>(
    op: &M,
    x: &[f64],
    s: f64,
    krylov_dim: usize,
    tol: f64,
    measured: usize,
) -> Option<Vec<f64>> {
    let n = op.dim();
    let beta = norm2(x);
    if beta == 0.0 {
        return Some(x.to_vec());
    }
    let m_max = krylov_dim.min(n).max(1);
    let breakdown_tol = 1e-13 * op.norm_bound().max(f64::MIN_POSITIVE);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max + 1);
    basis.push(x.iter().map(|v| v / beta).collect());
    // (m_max + 1) x m_max Hessenberg, row-major with stride m_max
    let mut h = alloc::vec![0.0; (m_max + 1) * m_max];
    let mut dim = m_max;
    let mut happy = false;
    let mut w = alloc::vec![0.0; n];
    for j in 0..m_max {
        op.apply(&basis[j], &mut w);
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            h[i * m_max + j] = hij;
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= hij * b);
        }
        let next = norm2(&w);
        h[(j + 1) * m_max + j] = next;
        if next <= breakdown_tol {
            dim = j + 1;
            happy = true;
            break;
        }
        basis.push(w.iter().map(|v| v / next).collect());
    }

    // exp of the (dim + 1)-square augmented Hessenberg; its last row gives the
    // error estimate β |s h_{m+1,m} e_m^T φ_1(s H_m) e_1|.
    let big = dim + 1;
    let mut hbar = DenseMatrix::zeros(big);
    for i in 0..dim {
        for j in 0..dim {
            hbar[(i, j)] = s * h[i * m_max + j];
        }
    }
    if !happy {
        hbar[(dim, dim - 1)] = s * h[dim * m_max + dim - 1];
    }
    let e = expm(&hbar, 1.0);
    let mut y = alloc::vec![0.0; n];
    let used = if happy { dim } else { dim + 1 };
    for (k, v) in basis.iter().take(used).enumerate() {
        let c = beta * e[(k, 0)];
        y.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if happy {
        return Some(y);
    }
    let err = beta * e[(dim, 0)].abs();
    let scale = y[..measured].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if err <= tol * scale || err == 0.0 {
        Some(y)
    } else {
        None
    }
}
