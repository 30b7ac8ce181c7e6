//! Exponential time integration of `f' = A f + b(τ)`.
//!
//! All steppers reduce to one matrix-function action
//!
//! ```text
//! φ_0(Δτ A) f + Σ_{l=1..p} Δτ^l φ_l(Δτ A) u_l
//! ```
//!
//! which is evaluated as the first block of `exp(Δτ Ã) [f; e_p]` for the
//! augmented matrix `Ã = [[A, W], [0, J]]`, `W = [u_p .. u_1]` and `J` the
//! `p × p` shift (Al-Mohy & Higham). The exponential action comes from a
//! Krylov subspace, or from a dense evaluation for small systems.

pub mod dense;
pub mod krylov;
mod phi;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pde::DiscreteOperator;

pub use dense::{expm, DenseMatrix};
pub use krylov::{expmv, LinearOperator, MAX_HALVINGS};
pub use phi::{inv_factorial, phi_scalar, TAYLOR_SWITCH};

/// Systems up to this size use the dense evaluation in [`phi_action`].
pub const DENSE_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpIntConfig {
    pub krylov_dim: usize,
    pub tol: f64,
    /// Degree of the source reconstruction, 1 (ETD1) or 2.
    pub order: usize,
}

impl Default for ExpIntConfig {
    fn default() -> Self {
        Self {
            krylov_dim: 10,
            tol: 1e-6,
            order: 2,
        }
    }
}

impl ExpIntConfig {
    pub fn validate(&self) -> Result<()> {
        if self.krylov_dim < 2 || !(self.tol > 0.0) || !(1..=2).contains(&self.order) {
            return Err(Error::BadParameters(
                "need krylov_dim >= 2, tol > 0 and order in {1, 2}".into(),
            ));
        }
        Ok(())
    }
}

/// The source vectors `u_1..u_p` and step `Δτ` of a φ-combination.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombination {
    pub step: f64,
    pub vectors: Vec<Vec<f64>>,
}

impl PhiCombination {
    pub fn new(step: f64, vectors: Vec<Vec<f64>>) -> Self {
        Self { step, vectors }
    }

    /// Drop trailing vectors that are identically zero.
    fn trimmed(&self) -> &[Vec<f64>] {
        let mut p = self.vectors.len();
        while p > 0 && self.vectors[p - 1].iter().all(|&x| x == 0.0) {
            p -= 1;
        }
        &self.vectors[..p]
    }
}

impl LinearOperator for DiscreteOperator {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        DiscreteOperator::apply(self, x, y)
    }

    fn norm_bound(&self) -> f64 {
        self.norm_inf()
    }
}

/// `[[A, η W], [0, J]]` without forming it.
struct Augmented<'a, A: LinearOperator + ?Sized> {
    a: &'a A,
    /// `u_1..u_p`
    sources: &'a [Vec<f64>],
    eta: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Augmented<'_, A> {
    fn dim(&self) -> usize {
        self.a.dim() + self.sources.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.a.dim();
        let p = self.sources.len();
        self.a.apply(&x[..n], &mut y[..n]);
        // column k of W (k = 0..p) is u_{p-k}
        for k in 0..p {
            let c = self.eta * x[n + k];
            if c != 0.0 {
                let u = &self.sources[p - 1 - k];
                y[..n].iter_mut().zip(u).for_each(|(a, b)| *a += c * b);
            }
        }
        for k in 0..p {
            y[n + k] = if k + 1 < p { x[n + k + 1] } else { 0.0 };
        }
    }

    fn norm_bound(&self) -> f64 {
        let w: f64 = self
            .sources
            .iter()
            .map(|u| u.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .sum();
        self.a.norm_bound() + self.eta * w + 1.0
    }
}

/// Power of two close to `1 / ‖W‖`, which balances the two blocks.
fn balancing_factor(sources: &[Vec<f64>]) -> f64 {
    let norm: f64 = sources
        .iter()
        .map(|u| u.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm > 0.0 {
        libm::exp2(-libm::ceil(libm::log2(norm)))
    } else {
        1.0
    }
}

fn start_vector(f: &[f64], p: usize, eta: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(f.len() + p);
    w.extend_from_slice(f);
    w.extend((0..p).map(|k| if k + 1 == p { 1.0 / eta } else { 0.0 }));
    w
}

fn check_lengths(n: usize, f: &[f64], combo: &PhiCombination) -> Result<()> {
    if f.len() != n || combo.vectors.iter().any(|u| u.len() != n) {
        return Err(Error::BadParameters("vector lengths must match the operator".into()));
    }
    if !(combo.step > 0.0) {
        return Err(Error::BadParameters("step must be positive".into()));
    }
    Ok(())
}

/// `φ_0(Δτ A) f + Σ_l Δτ^l φ_l(Δτ A) u_l` from a Krylov subspace.
pub fn krylov_phi_action<A: LinearOperator + ?Sized>(
    a: &A,
    f: &[f64],
    combo: &PhiCombination,
    config: &ExpIntConfig,
) -> Result<Vec<f64>> {
    let n = a.dim();
    check_lengths(n, f, combo)?;
    let sources = combo.trimmed();
    let eta = balancing_factor(sources);
    let aug = Augmented { a, sources, eta };
    let w = start_vector(f, sources.len(), eta);
    let mut y = expmv(&aug, &w, combo.step, config.krylov_dim, config.tol, n)?;
    y.truncate(n);
    Ok(y)
}

/// Same combination from the dense exponential of the augmented matrix.
pub fn dense_phi_action(a: &DiscreteOperator, f: &[f64], combo: &PhiCombination) -> Result<Vec<f64>> {
    let n = a.len();
    check_lengths(n, f, combo)?;
    let sources = combo.trimmed();
    let p = sources.len();
    let eta = balancing_factor(sources);
    let big = n + p;
    let mut m = DenseMatrix::zeros(big);
    let dense_a = a.to_dense();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = dense_a[i * n + j];
        }
        for k in 0..p {
            m[(i, n + k)] = eta * sources[p - 1 - k][i];
        }
    }
    for k in 0..p.saturating_sub(1) {
        m[(n + k, n + k + 1)] = 1.0;
    }
    let e = expm(&m, combo.step);
    let mut y = e.mul_vec(&start_vector(f, p, eta));
    y.truncate(n);
    Ok(y)
}

/// Dense evaluation for systems up to [`DENSE_MAX`], Krylov otherwise.
pub fn phi_action(
    a: &DiscreteOperator,
    f: &[f64],
    combo: &PhiCombination,
    config: &ExpIntConfig,
) -> Result<Vec<f64>> {
    if a.len() <= DENSE_MAX {
        dense_phi_action(a, f, combo)
    } else {
        krylov_phi_action(a, f, combo, config)
    }
}

/// First-order exponential step with `b` frozen at its value in `op.source`:
/// `f_{n+1} = φ_0(Δτ A) f_n + Δτ φ_1(Δτ A) b_n`, which equals
/// `f_n + Δτ φ_1(Δτ A)(A f_n + b_n)` and needs no inverse of `A`.
pub fn etd1_step(f: &[f64], op: &DiscreteOperator, step: f64, config: &ExpIntConfig) -> Result<Vec<f64>> {
    let combo = PhiCombination::new(step, alloc::vec![op.source.clone()]);
    phi_action(op, f, &combo, config)
}

/// Second-order exponential step with the source linear over the step,
/// `b(τ_n + s) = b_n + s (b_{n+1} - b_n) / Δτ`:
/// `f_{n+1} = φ_0 f_n + Δτ φ_1 b_n + Δτ² φ_2 (b_{n+1} - b_n) / Δτ`.
///
/// A constant source reduces exactly to [`etd1_step`].
pub fn etd2_step(
    f: &[f64],
    op: &DiscreteOperator,
    next_source: &[f64],
    step: f64,
    config: &ExpIntConfig,
) -> Result<Vec<f64>> {
    let slope: Vec<f64> = next_source
        .iter()
        .zip(&op.source)
        .map(|(b1, b0)| (b1 - b0) / step)
        .collect();
    let combo = PhiCombination::new(step, alloc::vec![op.source.clone(), slope]);
    phi_action(op, f, &combo, config)
}
