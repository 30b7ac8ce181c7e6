//! Equity and debt surfaces `f(v, τ)` on the grid × τ lattice.
//!
//! Every solver marches `f' = A(τ) f + b(τ)` forward in `τ = T - t` with
//! coefficients frozen at the start of each step and an exponential step for
//! the frozen system. Steps never straddle a calendar-year boundary of the
//! rate and payout curves.

use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::{Error, Result};
use crate::expint::{etd1_step, etd2_step, ExpIntConfig};
use crate::market_data::{MemoryPath, StepCurve, VolatilityModel};
use crate::pde::{assemble, BoundaryData, ClaimSpec, Coefficients, Grid, UpwindRule};
use crate::sdde::{simulate_path, NoiseStream, Path, SchemeConfig, SddeModel};
use crate::special::norm_cdf;

/// Rate and payout curves of calendar time.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurves {
    pub rate: StepCurve,
    pub payout: StepCurve,
    pub debt_payout: StepCurve,
}

impl RateCurves {
    pub fn constant(rate: f64, payout: f64, debt_payout: f64) -> Self {
        Self {
            rate: StepCurve::constant(rate),
            payout: StepCurve::constant(payout),
            debt_payout: StepCurve::constant(debt_payout),
        }
    }
}

/// Time-marching settings shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSettings {
    /// Target step `Δτ`; segments between curve breaks use the largest equal
    /// step not exceeding it.
    pub step: f64,
    pub expint: ExpIntConfig,
    pub upwind: UpwindRule,
}

impl Default for MarchSettings {
    fn default() -> Self {
        Self {
            step: 1.0 / 365.0,
            expint: ExpIntConfig::default(),
            upwind: UpwindRule::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Deterministic,
    MonteCarloMean { n_samples: usize, seed: u64 },
}

/// Claim values on the grid at each τ, with the Dirichlet values alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingSurface {
    pub grid: Grid,
    pub taus: Vec<f64>,
    /// `values[n][i] = f(v_i, τ_n)`.
    pub values: Vec<Vec<f64>>,
    /// Value at `v = 0` for each τ.
    pub lower: Vec<f64>,
    /// Value at `v = V_max` for each τ.
    pub upper: Vec<f64>,
    pub claim: ClaimSpec,
    pub provenance: Provenance,
    /// Calendar time at `τ = 0` (maturity).
    pub maturity: f64,
}

impl PricingSurface {
    /// Value at firm value `v` on row `n`, by four-point Lagrange
    /// interpolation between centres (boundary values included as nodes).
    pub fn interpolate(&self, n: usize, v: f64) -> f64 {
        let centers = self.grid.centers();
        let row = &self.values[n];
        let len = centers.len();
        // nodes: 0 (boundary), centres, V_max (boundary)
        let node = |k: usize| -> (f64, f64) {
            if k == 0 {
                (0.0, self.lower[n])
            } else if k == len + 1 {
                (self.grid.v_max(), self.upper[n])
            } else {
                (centers[k - 1], row[k - 1])
            }
        };
        let total = len + 2;
        let mut j = 0;
        while j + 1 < total && node(j + 1).0 <= v {
            j += 1;
        }
        let first = j.saturating_sub(1).min(total - 4);
        let mut acc = 0.0;
        for a in first..first + 4 {
            let (xa, ya) = node(a);
            let mut w = 1.0;
            for b in first..first + 4 {
                if a != b {
                    let xb = node(b).0;
                    w *= (v - xb) / (xa - xb);
                }
            }
            acc += w * ya;
        }
        acc
    }

    /// Calendar time of row `n`.
    pub fn calendar_time(&self, n: usize) -> f64 {
        self.maturity - self.taus[n]
    }
}

/// Black–Scholes call on `v` struck at `strike`, `tau` years before expiry.
pub fn black_scholes_call(v: f64, strike: f64, rate: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return (v - strike).max(0.0);
    }
    if v <= 0.0 {
        return 0.0;
    }
    let sd = sigma * libm::sqrt(tau);
    let d1 = (libm::log(v / strike) + (rate + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    v * norm_cdf(d1) - strike * libm::exp(-rate * tau) * norm_cdf(d2)
}

/// `g(φ(T - τ - L))`, the diffusion coefficient when `T ≤ L`.
pub fn effective_sigma_deterministic(
    g: &VolatilityModel,
    memory: &MemoryPath,
    horizon: f64,
    delay: f64,
    tau: f64,
) -> Result<f64> {
    let lag = horizon - tau - delay;
    if lag < -delay - 1e-12 * delay {
        return Err(Error::LagOutOfMemory { lag, start: -delay });
    }
    if lag > 1e-12 * delay {
        return Err(Error::BadParameters(alloc::format!(
            "lag time {lag} is after the origin; use the stochastic solver for T > L"
        )));
    }
    let lag = lag.min(0.0);
    Ok(g.at_lag(lag, memory.eval(lag)))
}

/// τ lattice over `[0, span]` refined at every curve break.
fn tau_lattice(curves: &RateCurves, maturity: f64, span: f64, step: f64) -> Vec<f64> {
    let start = maturity - span;
    let mut breaks: Vec<f64> = curves
        .rate
        .breaks_in(start, maturity)
        .chain(curves.payout.breaks_in(start, maturity))
        .chain(curves.debt_payout.breaks_in(start, maturity))
        .map(|t| maturity - t)
        .collect();
    breaks.push(0.0);
    breaks.push(span);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut taus = alloc::vec![0.0];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        let count = libm::ceil(len / step - 1e-9).max(1.0) as usize;
        for k in 1..=count {
            taus.push(if k == count {
                w[1]
            } else {
                w[0] + len * k as f64 / count as f64
            });
        }
    }
    taus
}

/// March a claim over `τ ∈ [0, span]` with `sigma(τ)` supplying the
/// diffusion coefficient. `maturity` is the calendar time at `τ = 0`.
pub fn march(
    claim: &ClaimSpec,
    grid: &Grid,
    curves: &RateCurves,
    maturity: f64,
    span: f64,
    mut sigma: impl FnMut(f64) -> Result<f64>,
    settings: &MarchSettings,
) -> Result<PricingSurface> {
    settings.expint.validate()?;
    if !(settings.step > 0.0) || !(span > 0.0) {
        return Err(Error::BadParameters("need Δτ > 0 and a positive marching window".into()));
    }
    let taus = tau_lattice(curves, maturity, span, settings.step);
    let v_max = grid.v_max();
    let boundary = |tau: f64| {
        let discount = libm::exp(-curves.rate.integral(maturity - tau, maturity));
        BoundaryData {
            lower: claim.lower_bc(),
            upper: claim.upper_bc(v_max, discount),
        }
    };

    let mut f: Vec<f64> = grid.centers().iter().map(|&v| claim.terminal(v)).collect();
    let mut values = Vec::with_capacity(taus.len());
    let mut lower = Vec::with_capacity(taus.len());
    let mut upper = Vec::with_capacity(taus.len());
    let b0 = boundary(0.0);
    values.push(f.clone());
    lower.push(b0.lower);
    upper.push(b0.upper);

    for (n, w) in taus.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        let (c0, c1) = (maturity - t1, maturity - t0);
        let coeffs = Coefficients {
            sigma: sigma(t0).map_err(|e| e.at_tau(n))?,
            rate: curves.rate.eval_on(c0, c1),
            payout: curves.payout.eval_on(c0, c1),
            debt_payout: curves.debt_payout.eval_on(c0, c1),
        };
        let now = boundary(t0);
        let next = boundary(t1);
        let op = assemble(grid, claim, &coeffs, now, settings.upwind).map_err(|e| e.at_tau(n))?;
        f = if settings.expint.order == 1 {
            etd1_step(&f, &op, dt, &settings.expint)
        } else {
            etd2_step(&f, &op, &op.source_with(next), dt, &settings.expint)
        }
        .map_err(|e| e.at_tau(n))?;
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { step: n + 1 }.at_tau(n));
        }
        values.push(f.clone());
        lower.push(next.lower);
        upper.push(next.upper);
    }

    Ok(PricingSurface {
        grid: grid.clone(),
        taus,
        values,
        lower,
        upper,
        claim: *claim,
        provenance: Provenance::Deterministic,
        maturity,
    })
}

/// Deterministic problem for `T ≤ L`: the lagged firm value is the memory
/// path, so `σ(τ) = g(φ(T - τ - L))`. Marches over `τ ∈ [0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_surface_deterministic(
    claim: &ClaimSpec,
    grid: &Grid,
    g: &VolatilityModel,
    memory: &MemoryPath,
    curves: &RateCurves,
    origin: f64,
    horizon: f64,
    settings: &MarchSettings,
) -> Result<PricingSurface> {
    let delay = memory.delay();
    if !(horizon > 0.0) || horizon > delay * (1.0 + 1e-12) {
        return Err(Error::BadParameters(alloc::format!(
            "deterministic solve needs 0 < T <= L (T = {horizon}, L = {delay})"
        )));
    }
    march(
        claim,
        grid,
        curves,
        origin + horizon,
        horizon.min(delay),
        |tau| effective_sigma_deterministic(g, memory, horizon, delay, tau),
        settings,
    )
}

/// Merton baseline: constant σ over `τ ∈ [0, T]`.
pub fn solve_merton_surface(
    claim: &ClaimSpec,
    grid: &Grid,
    sigma: f64,
    curves: &RateCurves,
    origin: f64,
    horizon: f64,
    settings: &MarchSettings,
) -> Result<PricingSurface> {
    if !(sigma > 0.0) {
        return Err(Error::BadParameters("Merton sigma must be positive".into()));
    }
    march(claim, grid, curves, origin + horizon, horizon, |_| Ok(sigma), settings)
}

/// Outcome of one sample of the nested procedure for `T > L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub surface: PricingSurface,
    /// Volatility evaluations that hit the clamp, out of `evaluations`.
    pub clamped: usize,
    pub evaluations: usize,
}

/// Sample `index` of the `T > L` procedure: simulate the firm path with
/// stream `index`, read `σ(τ) = g(V(T - τ - L))` along it (memory path for
/// negative lag times) and solve the resulting deterministic problem over
/// `τ ∈ [0, L]`.
#[allow(clippy::too_many_arguments)]
pub fn solve_sample(
    claim: &ClaimSpec,
    grid: &Grid,
    model: &SddeModel,
    scheme: &SchemeConfig,
    curves: &RateCurves,
    seed: u64,
    index: usize,
    settings: &MarchSettings,
) -> Result<SampleOutcome> {
    let path = simulate_path(model, scheme, NoiseStream::new(seed, index as u64))?;
    if path.is_flagged() {
        return Err(Error::AllPathsExcluded { n: 1 });
    }
    solve_on_path(claim, grid, model, &path, curves, settings)
}

/// The deterministic problem for one fixed firm path.
pub fn solve_on_path(
    claim: &ClaimSpec,
    grid: &Grid,
    model: &SddeModel,
    path: &Path,
    curves: &RateCurves,
    settings: &MarchSettings,
) -> Result<SampleOutcome> {
    let (horizon, delay) = (model.horizon, model.delay());
    if horizon <= delay {
        return Err(Error::BadParameters(
            "the path-wise procedure applies to T > L".into(),
        ));
    }
    let clamped = Cell::new(0usize);
    let evaluations = Cell::new(0usize);
    let sigma = |tau: f64| -> Result<f64> {
        let lag = horizon - tau - delay;
        let value = if lag >= 0.0 { path.value_at(lag) } else { model.memory.eval(lag) };
        let axis = model.g.axis(lag, value);
        evaluations.set(evaluations.get() + 1);
        if model.g.is_clamped(axis) {
            clamped.set(clamped.get() + 1);
        }
        Ok(model.g.evaluate(axis))
    };
    let surface = march(claim, grid, curves, model.origin + horizon, delay, sigma, settings)?;
    Ok(SampleOutcome {
        surface,
        clamped: clamped.get(),
        evaluations: evaluations.get(),
    })
}

/// Mean and standard deviation over valid samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticSurface {
    pub mean: PricingSurface,
    pub stddev: Vec<Vec<f64>>,
    pub n_valid: usize,
    /// Samples left out and why.
    pub skipped: Vec<(usize, Error)>,
    pub clamped: usize,
    pub evaluations: usize,
}

/// Reduce per-sample outcomes in index order.
pub fn reduce_samples(outcomes: Vec<Result<SampleOutcome>>, seed: u64) -> Result<StochasticSurface> {
    let total = outcomes.len();
    let mut skipped = Vec::new();
    let mut valid: Vec<SampleOutcome> = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => valid.push(s),
            Err(e) => skipped.push((i, e)),
        }
    }
    if valid.is_empty() {
        return Err(Error::AllPathsExcluded { n: total });
    }
    let first = &valid[0].surface;
    let rows = first.values.len();
    let cols = first.grid.len();
    let k = valid.len() as f64;
    let mut mean = alloc::vec![alloc::vec![0.0; cols]; rows];
    let mut lower = alloc::vec![0.0; rows];
    let mut upper = alloc::vec![0.0; rows];
    for s in &valid {
        if s.surface.taus != first.taus {
            return Err(Error::LatticeMismatch);
        }
        for (m, r) in mean.iter_mut().zip(&s.surface.values) {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        lower.iter_mut().zip(&s.surface.lower).for_each(|(a, b)| *a += b);
        upper.iter_mut().zip(&s.surface.upper).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().flatten().for_each(|x| *x /= k);
    lower.iter_mut().for_each(|x| *x /= k);
    upper.iter_mut().for_each(|x| *x /= k);
    let mut var = alloc::vec![alloc::vec![0.0; cols]; rows];
    if valid.len() > 1 {
        for s in &valid {
            for ((acc, r), m) in var.iter_mut().zip(&s.surface.values).zip(&mean) {
                for ((a, x), mu) in acc.iter_mut().zip(r).zip(m) {
                    *a += (x - mu) * (x - mu);
                }
            }
        }
        var.iter_mut()
            .flatten()
            .for_each(|x| *x = libm::sqrt(*x / (k - 1.0)));
    }
    let clamped = valid.iter().map(|s| s.clamped).sum();
    let evaluations = valid.iter().map(|s| s.evaluations).sum();
    let surface = PricingSurface {
        grid: first.grid.clone(),
        taus: first.taus.clone(),
        values: mean,
        lower,
        upper,
        claim: first.claim,
        provenance: Provenance::MonteCarloMean {
            n_samples: valid.len(),
            seed,
        },
        maturity: first.maturity,
    };
    Ok(StochasticSurface {
        mean: surface,
        stddev: var,
        n_valid: valid.len(),
        skipped,
        clamped,
        evaluations,
    })
}

/// Nested Monte Carlo for `T > L`, one sample after another.
#[allow(clippy::too_many_arguments)]
pub fn solve_surface_stochastic(
    claim: &ClaimSpec,
    grid: &Grid,
    model: &SddeModel,
    scheme: &SchemeConfig,
    curves: &RateCurves,
    n_samples: usize,
    seed: u64,
    settings: &MarchSettings,
) -> Result<StochasticSurface> {
    if n_samples == 0 {
        return Err(Error::BadParameters("need at least one sample".into()));
    }
    if model.horizon <= model.delay() {
        return Err(Error::BadParameters("stochastic solve needs T > L".into()));
    }
    let outcomes = (0..n_samples)
        .map(|i| solve_sample(claim, grid, model, scheme, curves, seed, i, settings))
        .collect();
    reduce_samples(outcomes, seed)
}

/// Debt surface obtained from an equity surface through `F = v - f`.
pub fn debt_from_equity(equity: &PricingSurface) -> PricingSurface {
    let centers = equity.grid.centers();
    let mut claim = equity.claim;
    claim.kind = crate::pde::ClaimKind::Debt;
    PricingSurface {
        grid: equity.grid.clone(),
        taus: equity.taus.clone(),
        values: equity
            .values
            .iter()
            .map(|row| row.iter().zip(centers).map(|(f, v)| v - f).collect())
            .collect(),
        lower: equity.lower.iter().map(|f| 0.0 - f).collect(),
        upper: equity.upper.iter().map(|f| equity.grid.v_max() - f).collect(),
        claim,
        provenance: equity.provenance,
        maturity: equity.maturity,
    }
}

/// `max |F(v_i, τ) + f(v_i, τ) - v_i|` over the lattice.
pub fn debt_equity_identity_check(equity: &PricingSurface, debt: &PricingSurface) -> Result<f64> {
    if equity.grid != debt.grid || equity.taus != debt.taus {
        return Err(Error::LatticeMismatch);
    }
    let centers = equity.grid.centers();
    let mut worst = 0.0_f64;
    for (fe, fd) in equity.values.iter().zip(&debt.values) {
        for ((e, d), v) in fe.iter().zip(fd).zip(centers) {
            worst = worst.max((e + d - v).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::ClaimKind;

    #[test]
    fn black_scholes_limits() {
        assert_eq!(black_scholes_call(120.0, 100.0, 0.05, 0.3, 0.0), 20.0);
        assert_eq!(black_scholes_call(80.0, 100.0, 0.05, 0.3, 0.0), 0.0);
        assert_eq!(black_scholes_call(0.0, 100.0, 0.05, 0.3, 1.0), 0.0);
        let far = black_scholes_call(1e5, 100.0, 0.05, 0.3, 2.0);
        assert!((far - (1e5 - 100.0 * libm::exp(-0.1))).abs() < 1e-8);
        // reference value for S = K = 100, r = 5%, σ = 30%, one year
        let atm = black_scholes_call(100.0, 100.0, 0.05, 0.3, 1.0);
        assert!((atm - 14.231_254_785_985_819).abs() < 1e-10);
    }

    fn constant_memory(delay: f64, v: f64) -> MemoryPath {
        MemoryPath::constant(delay, v).unwrap()
    }

    #[test]
    fn sigma_endpoints() {
        let memory = MemoryPath::from_knots(2.0, alloc::vec![(-2.0, 10.0), (0.0, 20.0)]).unwrap();
        let g = crate::market_data::fit_volatility(
            &crate::market_data::fixtures::twenty_years(),
            2000.0,
            5.0,
            crate::market_data::VolKind::ValueFitQuadratic,
        )
        .unwrap();
        let at = |t, tau| effective_sigma_deterministic(&g, &memory, t, 2.0, tau).unwrap();
        assert_eq!(at(2.0, 2.0), g.evaluate(10.0));
        assert_eq!(at(2.0, 0.0), g.evaluate(20.0));
        assert_eq!(at(1.0, 1.0), g.evaluate(10.0));
        assert!(matches!(
            effective_sigma_deterministic(&g, &memory, 1.0, 2.0, 1.5),
            Err(Error::LagOutOfMemory { .. })
        ));
        let flat = constant_memory(2.0, 15.0);
        let s0 = effective_sigma_deterministic(&g, &flat, 2.0, 2.0, 0.0).unwrap();
        for k in 0..=20 {
            assert_eq!(effective_sigma_deterministic(&g, &flat, 2.0, 2.0, 0.1 * k as f64).unwrap(), s0);
        }
    }

    #[test]
    fn tau_lattice_splits_at_year_breaks() {
        let curves = RateCurves {
            rate: StepCurve::new(alloc::vec![2000.0, 2001.0, 2002.0], alloc::vec![0.05, 0.04, 0.03]).unwrap(),
            payout: StepCurve::constant(0.0),
            debt_payout: StepCurve::constant(0.0),
        };
        let taus = tau_lattice(&curves, 2002.5, 2.0, 0.1);
        // breaks at τ = 0.5 and 1.5
        assert!(taus.iter().any(|&t| (t - 0.5).abs() < 1e-15));
        assert!(taus.iter().any(|&t| (t - 1.5).abs() < 1e-15));
        assert_eq!(*taus.last().unwrap(), 2.0);
        assert!(taus.windows(2).all(|w| w[1] - w[0] <= 0.1 + 1e-12));
    }

    #[test]
    fn initial_row_is_smoothed_payoff() {
        let grid = Grid::new(40.0, 40).unwrap();
        let claim = ClaimSpec::new(ClaimKind::Equity, 10.0, grid.h()).unwrap();
        let s = solve_merton_surface(
            &claim,
            &grid,
            0.3,
            &RateCurves::constant(0.05, 0.0, 0.0),
            0.0,
            0.1,
            &MarchSettings { step: 0.05, ..Default::default() },
        )
        .unwrap();
        for (i, &v) in grid.centers().iter().enumerate() {
            assert_eq!(s.values[0][i], claim.terminal(v));
        }
        assert_eq!(s.taus, alloc::vec![0.0, 0.05, 0.1]);
        assert_eq!(s.lower, alloc::vec![0.0; 3]);
        assert!((s.upper[2] - (40.0 - 10.0 * libm::exp(-0.005))).abs() < 1e-14);
    }

    #[test]
    fn frozen_dynamics_without_rates_or_volatility() {
        let grid = Grid::new(40.0, 80).unwrap();
        for kind in [ClaimKind::Equity, ClaimKind::Debt] {
            let claim = ClaimSpec::new(kind, 10.0, grid.h()).unwrap();
            let s = solve_merton_surface(
                &claim,
                &grid,
                1e-9,
                &RateCurves::constant(0.0, 0.0, 0.0),
                0.0,
                1.0,
                &MarchSettings { step: 0.1, ..Default::default() },
            )
            .unwrap();
            let last = s.values.last().unwrap();
            for (a, b) in last.iter().zip(&s.values[0]) {
                assert!((a - b).abs() < 1e-9, "{kind:?}");
            }
        }
    }

    #[test]
    fn identity_check_guards_lattice() {
        let grid = Grid::new(40.0, 20).unwrap();
        let other = Grid::new(40.0, 21).unwrap();
        let run = |g: &Grid| {
            let claim = ClaimSpec::new(ClaimKind::Equity, 10.0, g.h()).unwrap();
            solve_merton_surface(
                &claim,
                g,
                0.3,
                &RateCurves::constant(0.05, 0.0, 0.0),
                0.0,
                0.5,
                &MarchSettings { step: 0.1, ..Default::default() },
            )
            .unwrap()
        };
        let a = run(&grid);
        let b = run(&other);
        assert_eq!(debt_equity_identity_check(&a, &b), Err(Error::LatticeMismatch));
        let debt = debt_from_equity(&a);
        assert_eq!(debt_equity_identity_check(&a, &debt).unwrap(), 0.0);
    }
}
