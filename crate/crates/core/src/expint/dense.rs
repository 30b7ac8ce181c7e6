//! Small dense matrices and the matrix exponential by scaling and squaring.

use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: alloc::vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + j]).collect()
    }

    fn is_metzler(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[i * n + j] >= 0.0))
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

const TAYLOR_TERMS: usize = 24;

/// `exp(t X)` by diagonal shift, scaling to norm ≤ ½, truncated Taylor series
/// and repeated squaring.
///
/// Metzler matrices are shifted by their smallest diagonal entry, so every
/// term of the series is entrywise nonnegative and the result is too.
pub fn expm(x: &DenseMatrix, t: f64) -> DenseMatrix {
    let n = x.dim();
    let mut a = x.clone();
    a.scale(t);
    let min_diag = (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    // keep exp(-shift) representable
    let shift = if a.is_metzler() && max_diag - min_diag < 500.0 {
        min_diag
    } else {
        (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64
    };
    let shift = if shift.is_finite() { shift } else { 0.0 };
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let norm = a.norm_one();
    let squarings = if norm > 0.5 {
        libm::ceil(libm::log2(norm / 0.5)) as i32
    } else {
        0
    };
    a.scale(libm::exp2(-squarings as f64));

    // Horner form of sum_{k<=K} a^k / k!
    let mut e = DenseMatrix::identity(n);
    for k in (1..=TAYLOR_TERMS).rev() {
        let mut next = a.mul(&e);
        next.scale(1.0 / k as f64);
        for i in 0..n {
            next[(i, i)] += 1.0;
        }
        e = next;
    }
    for _ in 0..squarings {
        e = e.mul(&e);
    }
    e.scale(libm::exp(shift));
    e
}
