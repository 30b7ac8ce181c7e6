//! Finite-volume discretisation of the claim equation in the firm-value
//! direction, in forward time `τ = T - t`:
//!
//! ```text
//! f_τ = ½ σ² v² f_vv + ((r v - C) f)_v - 2 r f + source
//! ```
//!
//! on cell centres `v_i = (i + ½) h` of `[0, V_max]`, with Dirichlet data at
//! `v = 0` and `v = V_max`. Indices in this module are zero-based.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Uniform cell-centred grid on `[0, V_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    v_max: f64,
    h: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn new(v_max: f64, cells: usize) -> Result<Self> {
        if cells < 3 || !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::BadParameters(alloc::format!(
                "grid needs at least 3 cells and V_max > 0 (got {cells}, {v_max})"
            )));
        }
        let h = v_max / cells as f64;
        let centers = (0..cells).map(|i| (2 * i + 1) as f64 * h / 2.0).collect();
        Ok(Self { v_max, h, centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Index of the centre closest to `v`.
    pub fn nearest(&self, v: f64) -> usize {
        let i = libm::floor(v / self.h);
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.len() - 1)
        }
    }
}

/// Grid with `V_max = vmax_multiple * B`.
pub fn build_grid(promised: f64, cells: usize, vmax_multiple: f64) -> Result<Grid> {
    if !(promised > 0.0) || !(3.0..=4.0).contains(&vmax_multiple) {
        return Err(Error::BadParameters(alloc::format!(
            "need B > 0 and V_max multiple in [3, 4] (got {promised}, {vmax_multiple})"
        )));
    }
    Grid::new(vmax_multiple * promised, cells)
}

/// Degree-8 polynomial smoothing of `max(x, 0)` on `(-ε, ε)`, glued with four
/// continuous derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSmoother {
    epsilon: f64,
    coeffs: [f64; 10],
}

impl PayoffSmoother {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::BadParameters("smoothing width must be positive".into()));
        }
        let e = epsilon;
        let mut c = [0.0; 10];
        c[0] = 35.0 * e / 256.0;
        c[1] = 0.5;
        c[2] = 35.0 / (64.0 * e);
        c[4] = -35.0 / (128.0 * e * e * e);
        c[6] = 7.0 / (64.0 * libm::pow(e, 5.0));
        c[8] = -5.0 / (256.0 * libm::pow(e, 7.0));
        Ok(Self { epsilon, coeffs: c })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coefficients(&self) -> &[f64; 10] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x >= self.epsilon {
            x
        } else if x <= -self.epsilon {
            0.0
        } else {
            self.polynomial(x, 0)
        }
    }

    /// `order`-th derivative of the polynomial piece at `x` (any `x`).
    pub fn polynomial(&self, x: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for j in (order..10).rev() {
            let mut falling = 1.0;
            for k in 0..order {
                falling *= (j - k) as f64;
            }
            acc = acc * x + falling * self.coeffs[j];
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimKind {
    Equity,
    Debt,
}

/// Which cell supplies the face value when the face flux is negative.
///
/// With a nonnegative flux both rules take the left cell `f_i` for face
/// `i + ½`. For a negative flux the `Paper` rule takes `f_{i-1}`, which can
/// reach two cells below the row; `Standard` takes `f_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpwindRule {
    #[default]
    Paper,
    Standard,
}

/// Contingent claim on the firm value: equity (call on `V` struck at `B`) or
/// debt (`min(V, B)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimSpec {
    pub kind: ClaimKind,
    /// Promised payment `B` at maturity.
    pub promised: f64,
    pub smoother: PayoffSmoother,
}

impl ClaimSpec {
    pub fn new(kind: ClaimKind, promised: f64, epsilon: f64) -> Result<Self> {
        if !(promised >= 0.0) {
            return Err(Error::BadParameters("promised payment must be >= 0".into()));
        }
        Ok(Self {
            kind,
            promised,
            smoother: PayoffSmoother::new(epsilon)?,
        })
    }

    /// Smoothed terminal payoff. Debt is `v - π_ε(v - B)` so that the two
    /// payoffs add up to `v` exactly.
    pub fn terminal(&self, v: f64) -> f64 {
        let call = self.smoother.eval(v - self.promised);
        match self.kind {
            ClaimKind::Equity => call,
            ClaimKind::Debt => v - call,
        }
    }

    pub fn lower_bc(&self) -> f64 {
        0.0
    }

    /// Value at `V_max` given the discount factor `exp(-∫ r)` over the
    /// remaining life.
    pub fn upper_bc(&self, v_max: f64, discount: f64) -> f64 {
        match self.kind {
            ClaimKind::Equity => v_max - self.promised * discount,
            ClaimKind::Debt => self.promised * discount,
        }
    }

    /// Per-cell source before boundary contributions.
    pub fn source(&self, payout: f64, debt_payout: f64) -> f64 {
        match self.kind {
            ClaimKind::Equity => payout - debt_payout,
            ClaimKind::Debt => debt_payout,
        }
    }
}

/// Coefficients of one row. `lower` and `upper` multiply the Dirichlet values
/// at `v = 0` and `v = V_max`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RowStencil {
    pub sub2: f64,
    pub sub: f64,
    pub diag: f64,
    pub sup: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RowStencil {
    /// Add `w` times the value of cell `row + offset`, routing ghost cells to
    /// the boundary weights.
    fn put(&mut self, row: usize, cells: usize, offset: isize, w: f64) {
        let col = row as isize + offset;
        if col < 0 {
            self.lower += w;
        } else if col >= cells as isize {
            self.upper += w;
        } else {
            match offset {
                -2 => self.sub2 += w,
                -1 => self.sub += w,
                0 => self.diag += w,
                1 => self.sup += w,
                _ => unreachable!("stencil offset {offset}"),
            }
        }
    }

    fn add(&mut self, other: &RowStencil) {
        self.sub2 += other.sub2;
        self.sub += other.sub;
        self.diag += other.diag;
        self.sup += other.sup;
        self.lower += other.lower;
        self.upper += other.upper;
    }
}

/// `½ σ² v² f_vv` at cell `i`.
///
/// Interior rows use the centred second difference. The first and last rows
/// use the non-uniform three-point formula with the boundary half a cell
/// away: `(2 / 3h) σ² v² [(f_{i+1} - f_i)/h - (f_i - f_b)/(h/2)]` and its
/// mirror image.
pub fn diffusion_row(i: usize, grid: &Grid, sigma: f64) -> RowStencil {
    let n = grid.len();
    let h = grid.h();
    let v = grid.centers()[i];
    let s2v2 = sigma * sigma * v * v;
    let mut row = RowStencil::default();
    if i == 0 {
        let c = 2.0 / (3.0 * h) * s2v2;
        row.sup = c / h;
        row.diag = -c / h - 2.0 * c / h;
        row.lower = 2.0 * c / h;
    } else if i == n - 1 {
        let c = 2.0 / (3.0 * h) * s2v2;
        row.upper = 2.0 * c / h;
        row.diag = -2.0 * c / h - c / h;
        row.sub = c / h;
    } else {
        let c = s2v2 / (2.0 * h * h);
        row.sub = c;
        row.diag = -2.0 * c;
        row.sup = c;
    }
    row
}

/// `((r v - C) f)_v - 2 r f` at cell `i`, flux-differenced with upwinded face
/// values.
pub fn convection_row(i: usize, grid: &Grid, rate: f64, payout: f64, rule: UpwindRule) -> RowStencil {
    let n = grid.len();
    let h = grid.h();
    let v = grid.centers()[i];
    let mut row = RowStencil::default();
    // face i + ½: value from the cell at `offset` relative to row i
    let upper_flux = rate * (v + h / 2.0) - payout;
    row.put(i, n, face_cell(0, upper_flux, rule), upper_flux / h);
    // face i - ½ is face (i-1) + ½
    let lower_flux = rate * (v - h / 2.0) - payout;
    row.put(i, n, face_cell(-1, lower_flux, rule), -lower_flux / h);
    row.diag += -2.0 * rate;
    row
}

fn face_cell(left: isize, flux: f64, rule: UpwindRule) -> isize {
    if flux >= 0.0 {
        left
    } else {
        match rule {
            UpwindRule::Paper => left - 1,
            UpwindRule::Standard => left + 1,
        }
    }
}

/// PDE coefficients frozen over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub sigma: f64,
    pub rate: f64,
    pub payout: f64,
    pub debt_payout: f64,
}

/// Dirichlet values at `v = 0` and `v = V_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub lower: f64,
    pub upper: f64,
}

/// Semi-discrete system `f' = A f + b` for one set of frozen coefficients.
///
/// `A` is tridiagonal except for `sub2`, which is nonzero only under the
/// `Paper` upwind rule with a negative face flux.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub sub2: Vec<f64>,
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    /// `b` for the boundary data the operator was assembled with.
    pub source: Vec<f64>,
    base_source: f64,
    lower_weight: Vec<f64>,
    upper_weight: Vec<f64>,
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// A zero operator with zero source.
    pub fn zeros(n: usize) -> Self {
        let z = alloc::vec![0.0; n];
        Self {
            sub2: z.clone(),
            sub: z.clone(),
            diag: z.clone(),
            sup: z.clone(),
            source: z.clone(),
            base_source: 0.0,
            lower_weight: z.clone(),
            upper_weight: z,
        }
    }

    /// Operator from explicit bands with a given source and no boundary terms.
    pub fn from_bands(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>, source: Vec<f64>) -> Self {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n && source.len() == n);
        Self {
            sub2: alloc::vec![0.0; n],
            sub,
            diag,
            sup,
            source,
            base_source: 0.0,
            lower_weight: alloc::vec![0.0; n],
            upper_weight: alloc::vec![0.0; n],
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i >= 1 {
                s += self.sub[i] * x[i - 1];
            }
            if i >= 2 {
                s += self.sub2[i] * x[i - 2];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// `b` for other boundary data with the same frozen coefficients.
    pub fn source_with(&self, boundary: BoundaryData) -> Vec<f64> {
        self.lower_weight
            .iter()
            .zip(&self.upper_weight)
            .map(|(lw, uw)| self.base_source + lw * boundary.lower + uw * boundary.upper)
            .collect()
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.sub2.iter().all(|&x| x == 0.0)
    }

    /// Smallest off-diagonal entry; nonnegative for a Metzler matrix.
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.len();
        let mut m = f64::INFINITY;
        for i in 0..n {
            if i >= 1 {
                m = m.min(self.sub[i]);
            }
            if i >= 2 {
                m = m.min(self.sub2[i]);
            }
            if i + 1 < n {
                m = m.min(self.sup[i]);
            }
        }
        m
    }

    /// Max-row-sum norm of `A`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.len())
            .map(|i| self.sub2[i].abs() + self.sub[i].abs() + self.diag[i].abs() + self.sup[i].abs())
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy of `A`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = alloc::vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag[i];
            if i >= 1 {
                a[i * n + i - 1] = self.sub[i];
            }
            if i >= 2 {
                a[i * n + i - 2] = self.sub2[i];
            }
            if i + 1 < n {
                a[i * n + i + 1] = self.sup[i];
            }
        }
        a
    }
}

/// Assemble `A` and `b` for frozen coefficients and boundary data.
pub fn assemble(
    grid: &Grid,
    claim: &ClaimSpec,
    coeffs: &Coefficients,
    boundary: BoundaryData,
    rule: UpwindRule,
) -> Result<DiscreteOperator> {
    let n = grid.len();
    let mut op = DiscreteOperator::zeros(n);
    op.base_source = claim.source(coeffs.payout, coeffs.debt_payout);
    for i in 0..n {
        let mut row = diffusion_row(i, grid, coeffs.sigma);
        row.add(&convection_row(i, grid, coeffs.rate, coeffs.payout, rule));
        let entries = [row.sub2, row.sub, row.diag, row.sup, row.lower, row.upper];
        if entries.iter().any(|x| !x.is_finite()) || !op.base_source.is_finite() {
            return Err(Error::NonFiniteCoefficient { row: i });
        }
        op.sub2[i] = row.sub2;
        op.sub[i] = row.sub;
        op.diag[i] = row.diag;
        op.sup[i] = row.sup;
        op.lower_weight[i] = row.lower;
        op.upper_weight[i] = row.upper;
    }
    op.source = op.source_with(boundary);
    if let Some(i) = op.source.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteCoefficient { row: i });
    }
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = build_grid(100.0, 4, 4.0).unwrap();
        assert_eq!(g.h(), 100.0);
        assert_eq!(g.v_max(), 400.0);
        assert_eq!(g.centers(), &[50.0, 150.0, 250.0, 350.0]);
        assert!(build_grid(100.0, 2, 4.0).is_err());
        assert!(build_grid(100.0, 10, 5.0).is_err());
        assert!(build_grid(0.0, 10, 4.0).is_err());
        assert_eq!(g.nearest(149.0), 1);
        assert_eq!(g.nearest(1e9), 3);
    }

    #[test]
    fn smoother_values() {
        let eps = 0.37;
        let p = PayoffSmoother::new(eps).unwrap();
        assert_eq!(p.eval(2.0 * eps), 2.0 * eps);
        assert_eq!(p.eval(0.0), 35.0 * eps / 256.0);
        assert_eq!(p.eval(-eps), 0.0);
    }

    #[test]
    fn smoother_glues_to_ramp() {
        for eps in [1e-3, 0.5, 1.0, 7.0] {
            let p = PayoffSmoother::new(eps).unwrap();
            assert!((p.polynomial(eps, 0) - eps).abs() <= 1e-12 * eps);
            assert!(p.polynomial(-eps, 0).abs() <= 1e-12 * eps);
            assert!((p.polynomial(eps, 1) - 1.0).abs() <= 1e-8);
            assert!(p.polynomial(-eps, 1).abs() <= 1e-8);
            for order in 2..=4 {
                // ramp derivatives vanish; compare on the polynomial's scale
                let scale = libm::pow(eps, 1.0 - order as f64);
                assert!(p.polynomial(eps, order).abs() <= 1e-8 * scale, "{eps} {order}");
                assert!(p.polynomial(-eps, order).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn terminal_identity_is_exact() {
        let grid = Grid::new(400.0, 400).unwrap();
        let eq = ClaimSpec::new(ClaimKind::Equity, 100.0, grid.h()).unwrap();
        let debt = ClaimSpec::new(ClaimKind::Debt, 100.0, grid.h()).unwrap();
        for &v in grid.centers() {
            assert_eq!(eq.terminal(v) + debt.terminal(v), v);
        }
    }

    #[test]
    fn diffusion_rows() {
        let grid = Grid::new(10.0, 10).unwrap();
        for i in 0..10 {
            assert_eq!(diffusion_row(i, &grid, 0.0), RowStencil::default());
        }
        for i in 1..9 {
            let r = diffusion_row(i, &grid, 0.4);
            assert!((r.sub + r.diag + r.sup).abs() < 1e-12);
            let v = grid.centers();
            assert!((r.sub * v[i - 1] + r.diag * v[i] + r.sup * v[i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn convection_rows() {
        let grid = Grid::new(10.0, 10).unwrap();
        for rule in [UpwindRule::Paper, UpwindRule::Standard] {
            for i in 0..10 {
                assert_eq!(convection_row(i, &grid, 0.0, 0.0, rule), RowStencil::default());
            }
        }
        // nonnegative fluxes: pure left-cell face values, nothing above the diagonal
        for i in 1..10 {
            let r = convection_row(i, &grid, 0.05, 0.0, UpwindRule::Paper);
            assert_eq!(r.sup, 0.0);
            assert_eq!(r.sub2, 0.0);
            assert!(r.sub <= 0.0);
        }
        // constant vector: conservation form plus -2r gives the -r f reaction
        let (r, c) = (0.05, 0.0);
        let i = 4;
        let row = convection_row(i, &grid, r, c, UpwindRule::Paper);
        let total = row.sub + row.diag + row.sup + row.sub2;
        assert!((total - (-r)).abs() < 1e-15);
    }

    #[test]
    fn negative_flux_rules() {
        let grid = Grid::new(10.0, 10).unwrap();
        // C large enough that every face flux is negative
        let paper = convection_row(5, &grid, 0.05, 1.0, UpwindRule::Paper);
        assert!(paper.sub2 != 0.0 && paper.sup == 0.0);
        let standard = convection_row(5, &grid, 0.05, 1.0, UpwindRule::Standard);
        assert!(standard.sub2 == 0.0 && standard.sub == 0.0 && standard.sup != 0.0);
        // near the bottom, the `Paper` rule reads the lower boundary value
        let row = convection_row(1, &grid, 0.05, 1.0, UpwindRule::Paper);
        assert!(row.lower != 0.0);
    }

    #[test]
    fn all_physics_off() {
        let grid = Grid::new(10.0, 8).unwrap();
        let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).unwrap();
        let coeffs = Coefficients { sigma: 0.0, rate: 0.0, payout: 0.0, debt_payout: 0.0 };
        let op = assemble(&grid, &claim, &coeffs, BoundaryData { lower: 0.0, upper: 0.0 }, UpwindRule::Paper)
            .unwrap();
        assert!(op.to_dense().iter().all(|&x| x == 0.0));
        assert!(op.source.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn equity_source_is_boundary_only() {
        let grid = Grid::new(400.0, 40).unwrap();
        let claim = ClaimSpec::new(ClaimKind::Equity, 100.0, grid.h()).unwrap();
        let coeffs = Coefficients { sigma: 0.3, rate: 0.05, payout: 0.0, debt_payout: 0.0 };
        let bd = BoundaryData { lower: 0.0, upper: claim.upper_bc(400.0, 0.95) };
        let op = assemble(&grid, &claim, &coeffs, bd, UpwindRule::Paper).unwrap();
        assert!(op.source[..39].iter().all(|&x| x == 0.0));
        assert!(op.source[39] > 0.0);
        assert!(op.is_tridiagonal());
        assert!(op.min_off_diagonal() >= 0.0);
    }

    #[test]
    fn non_finite_coefficient() {
        let grid = Grid::new(10.0, 5).unwrap();
        let claim = ClaimSpec::new(ClaimKind::Debt, 2.0, 0.1).unwrap();
        let coeffs = Coefficients { sigma: f64::NAN, rate: 0.0, payout: 0.0, debt_payout: 0.0 };
        let err = assemble(&grid, &claim, &coeffs, BoundaryData { lower: 0.0, upper: 1.0 }, UpwindRule::Paper)
            .unwrap_err();
        assert_eq!(err, Error::NonFiniteCoefficient { row: 0 });
    }

    #[test]
    fn grid_scaling_invariance() {
        let small = build_grid(100.0, 50, 4.0).unwrap();
        let large = build_grid(200.0, 50, 4.0).unwrap();
        let claim = |b| ClaimSpec::new(ClaimKind::Equity, b, 1.0).unwrap();
        let coeffs = Coefficients { sigma: 0.3, rate: 0.05, payout: 0.0, debt_payout: 0.0 };
        let bd = BoundaryData { lower: 0.0, upper: 0.0 };
        let a = assemble(&small, &claim(100.0), &coeffs, bd, UpwindRule::Paper).unwrap();
        let b = assemble(&large, &claim(200.0), &coeffs, bd, UpwindRule::Paper).unwrap();
        for (x, y) in a.to_dense().iter().zip(b.to_dense()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
