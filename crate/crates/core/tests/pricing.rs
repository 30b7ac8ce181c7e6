use delaycredit_core::market_data::{MemoryPath, StepCurve, VolatilityModel};
use delaycredit_core::pde::{assemble, BoundaryData, ClaimKind, ClaimSpec, Coefficients, Grid, UpwindRule};
use delaycredit_core::pricing::{
    black_scholes_call, debt_equity_identity_check, debt_from_equity, march, solve_merton_surface, solve_sample,
    solve_surface_deterministic, solve_surface_stochastic, MarchSettings, RateCurves,
};
use delaycredit_core::sdde::{SchemeConfig, SddeModel};

fn settings(step: f64) -> MarchSettings {
    MarchSettings {
        step,
        ..Default::default()
    }
}

fn merton(kind: ClaimKind, grid: &Grid, sigma: f64, rate: f64, horizon: f64, step: f64) -> delaycredit_core::pricing::PricingSurface {
    let claim = ClaimSpec::new(kind, grid.v_max() / 4.0, grid.h()).unwrap();
    solve_merton_surface(&claim, grid, sigma, &RateCurves::constant(rate, 0.0, 0.0), 0.0, horizon, &settings(step)).unwrap()
}

#[test]
fn far_from_the_strike_the_call_matches_black_scholes() {
    let grid = Grid::new(400.0, 400).unwrap();
    let s = merton(ClaimKind::Equity, &grid, 0.3, 0.05, 1.0, 1.0 / 365.0);
    let last = s.taus.len() - 1;
    for v in [150.0, 200.0, 300.0] {
        let bs = black_scholes_call(v, 100.0, 0.05, 0.3, 1.0);
        let rel = (s.interpolate(last, v) - bs).abs() / bs;
        assert!(rel < 1e-3, "v = {v}: {rel}");
    }
    // first-order flux error is largest where v f_v is small relative to f
    let bs = black_scholes_call(100.0, 100.0, 0.05, 0.3, 1.0);
    assert!((s.interpolate(last, 100.0) - bs).abs() / bs < 5e-3);
}

#[test]
fn equity_and_debt_solved_separately_add_up_to_firm_value() {
    let grid = Grid::new(400.0, 400).unwrap();
    let e = merton(ClaimKind::Equity, &grid, 0.3, 0.05, 1.0, 1.0 / 365.0);
    let d = merton(ClaimKind::Debt, &grid, 0.3, 0.05, 1.0, 1.0 / 365.0);
    let dev = debt_equity_identity_check(&e, &d).unwrap();
    assert!(dev <= 1e-3 * 400.0, "{dev}");
    // the τ = 0 rows add up exactly
    for (i, v) in grid.centers().iter().enumerate() {
        assert_eq!(e.values[0][i] + d.values[0][i], *v);
    }
    assert_eq!(debt_equity_identity_check(&e, &debt_from_equity(&e)).unwrap(), 0.0);
}

#[test]
fn boundary_columns_hold_the_dirichlet_data() {
    let grid = Grid::new(400.0, 100).unwrap();
    let s = merton(ClaimKind::Equity, &grid, 0.3, 0.05, 1.0, 0.01);
    for (n, tau) in s.taus.iter().enumerate() {
        assert_eq!(s.lower[n], 0.0);
        assert!((s.upper[n] - (400.0 - 100.0 * (-0.05 * tau).exp())).abs() < 1e-12);
    }
    let d = merton(ClaimKind::Debt, &grid, 0.3, 0.05, 1.0, 0.01);
    for (n, tau) in d.taus.iter().enumerate() {
        assert!((d.upper[n] - 100.0 * (-0.05 * tau).exp()).abs() < 1e-12);
    }
}

#[test]
fn operators_are_metzler_and_rows_monotone_for_nonnegative_fluxes() {
    let grid = Grid::new(8.0, 400).unwrap();
    let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).unwrap();
    for &(sigma, rate) in &[(0.25, 0.05), (0.4, 0.03), (0.3, 0.0)] {
        let c = Coefficients { sigma, rate, payout: 0.0, debt_payout: 0.0 };
        let op = assemble(&grid, &claim, &c, BoundaryData { lower: 0.0, upper: 6.0 }, UpwindRule::Paper).unwrap();
        assert!(op.min_off_diagonal() >= 0.0, "sigma {sigma} rate {rate}");
        let s = solve_merton_surface(&claim, &grid, sigma, &RateCurves::constant(rate, 0.0, 0.0), 0.0, 2.0, &settings(0.01)).unwrap();
        for row in &s.values {
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn constant_memory_volatility_reduces_to_merton() {
    let grid = Grid::new(8.0, 200).unwrap();
    let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).unwrap();
    let curves = RateCurves::constant(0.04, 0.0, 0.0);
    let memory = MemoryPath::from_knots(3.0, vec![(-3.0, 1.0), (-1.0, 2.5), (0.0, 2.0)]).unwrap();
    let g = VolatilityModel::constant(0.3);
    let a = solve_surface_deterministic(&claim, &grid, &g, &memory, &curves, 2000.0, 2.5, &settings(0.01)).unwrap();
    let b = solve_merton_surface(&claim, &grid, 0.3, &curves, 2000.0, 2.5, &settings(0.01)).unwrap();
    assert_eq!(a.values, b.values);
    assert!(solve_surface_deterministic(&claim, &grid, &g, &memory, &curves, 2000.0, 3.5, &settings(0.01)).is_err());
}

#[test]
fn rates_change_only_at_year_boundaries() {
    let grid = Grid::new(8.0, 100).unwrap();
    let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).unwrap();
    let rate = StepCurve::new(vec![2000.0, 2001.0, 2002.0], vec![0.05, 0.02, 0.04]).unwrap();
    let curves = RateCurves { rate: rate.clone(), payout: StepCurve::constant(0.0), debt_payout: StepCurve::constant(0.0) };
    let s = solve_merton_surface(&claim, &grid, 0.3, &curves, 2000.5, 2.0, &settings(0.1)).unwrap();
    // maturity 2002.5: breaks at τ = 0.5 and 1.5
    assert!(s.taus.contains(&0.5) && s.taus.contains(&1.5));
    let want = 8.0 - 2.0 * (-rate.integral(2000.5, 2002.5)).exp();
    assert!((s.upper.last().unwrap() - want).abs() < 1e-12);
}

fn constant_model(delay: f64, horizon: f64) -> SddeModel {
    SddeModel::new(
        StepCurve::constant(0.05),
        StepCurve::constant(0.0),
        VolatilityModel::constant(0.3),
        MemoryPath::constant(delay, 2.0).unwrap(),
        2000.0,
        horizon,
    )
    .unwrap()
}

#[test]
fn collapsed_clamp_makes_every_sample_deterministic() {
    let (delay, horizon) = (1.0, 2.0);
    let model = constant_model(delay, horizon);
    let scheme = SchemeConfig::new(1.0, horizon, delay, 200).unwrap();
    let grid = Grid::new(8.0, 200).unwrap();
    let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).unwrap();
    let curves = RateCurves::constant(0.05, 0.0, 0.0);
    let set = settings(0.01);
    let reference = march(&claim, &grid, &curves, 2000.0 + horizon, delay, |_| Ok(0.3), &set).unwrap();
    for i in 0..5 {
        let s = solve_sample(&claim, &grid, &model, &scheme, &curves, 9, i, &set).unwrap();
        assert_eq!(s.evaluations, reference.taus.len() - 1);
        for (a, b) in s.surface.values.iter().flatten().zip(reference.values.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
    let stats = solve_surface_stochastic(&claim, &grid, &model, &scheme, &curves, 5, 9, &set).unwrap();
    assert_eq!(stats.n_valid, 5);
    for (a, b) in stats.mean.values.iter().flatten().zip(reference.values.iter().flatten()) {
        assert!((a - b).abs() <= 1e-10);
    }
    assert!(stats.stddev.iter().flatten().all(|s| *s <= 1e-10));
}
