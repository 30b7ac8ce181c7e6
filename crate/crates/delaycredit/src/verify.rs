//! The acceptance checks behind `delaycredit verify`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use delaycredit_core::expint::{inv_factorial, krylov_phi_action, phi_scalar, ExpIntConfig, PhiCombination};
use delaycredit_core::market_data::{MemoryPath, StepCurve, VolatilityModel};
use delaycredit_core::monte_carlo::run_merton_ensemble;
use delaycredit_core::pde::{
    assemble, BoundaryData, ClaimKind, ClaimSpec, Coefficients, DiscreteOperator, Grid, PayoffSmoother, UpwindRule,
};
use delaycredit_core::pricing::{
    black_scholes_call, debt_equity_identity_check, effective_sigma_deterministic, march, reduce_samples,
    solve_merton_surface, solve_sample, MarchSettings, PricingSurface, RateCurves,
};
use delaycredit_core::sdde::{
    simulate_merton_with_increments, simulate_path, MertonModel, NoiseStream, SchemeConfig, SddeModel,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{self, prepare_with};
use crate::config::{Command, RunConfig};
use crate::csv_io;

/// The bundled synthetic firm used by the default-configuration checks.
pub const SYNTHETIC_FIRM: &str = include_str!("../fixtures/synthetic_firm.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyOptions {
    /// Perturb the φ-functions under test; the suite must then fail.
    pub tamper_phi: bool,
    pub verbose: bool,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<40} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

type CheckFn = fn(&VerifyOptions) -> Result<String, String>;

pub const CHECKS: [(u8, &str, u64, CheckFn); 12] = [
    (1, "black-scholes equivalence", 10, black_scholes_equivalence),
    (2, "second-order time convergence", 30, time_convergence),
    (3, "debt + equity identity", 20, debt_equity_identity),
    (4, "krylov phi accuracy", 5, krylov_accuracy),
    (5, "phi recurrence residual", 1, phi_recurrence),
    (6, "payoff smoothing gluing", 1, smoothing_gluing),
    (7, "zero-noise delay scheme", 5, zero_noise_scheme),
    (8, "merton strong convergence", 30, merton_strong_convergence),
    (9, "monte carlo mean", 30, monte_carlo_mean),
    (10, "stochastic/deterministic consistency", 20, stochastic_consistency),
    (11, "determinism across worker counts", 60, determinism),
    (12, "metzler operator and monotone equity", 10, metzler_monotone),
];

/// Run one check; a check passes when its numerical condition holds within
/// its time budget.
pub fn run_check(id: u8, opts: &VerifyOptions) -> CheckOutcome {
    let (id, name, budget, f) = CHECKS
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .expect("unknown check id");
    let budget = Duration::from_secs(budget);
    let start = Instant::now();
    let result = f(opts);
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > budget {
        passed = false;
        detail.push_str(&format!(" (over budget: {:.2?} > {:.0?})", elapsed, budget));
    }
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        elapsed,
        budget,
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    CHECKS.iter().map(|c| run_check(c.0, opts)).collect()
}

fn verdict(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bs_surface(step: f64) -> Result<PricingSurface, String> {
    let grid = Grid::new(400.0, 400).map_err(|e| e.to_string())?;
    let claim = ClaimSpec::new(ClaimKind::Equity, 100.0, grid.h()).map_err(|e| e.to_string())?;
    let settings = MarchSettings {
        step,
        ..Default::default()
    };
    solve_merton_surface(&claim, &grid, 0.3, &RateCurves::constant(0.05, 0.0, 0.0), 0.0, 1.0, &settings)
        .map_err(|e| e.to_string())
}

fn bs_error(surface: &PricingSurface, v: f64) -> f64 {
    let exact = black_scholes_call(v, 100.0, 0.05, 0.3, 1.0);
    (surface.interpolate(surface.taus.len() - 1, v) - exact) / exact
}

fn black_scholes_equivalence(_: &VerifyOptions) -> Result<String, String> {
    let s = bs_surface(1.0 / 365.0)?;
    let errs: Vec<(f64, f64)> = [50.0, 100.0, 150.0, 200.0].iter().map(|&v| (v, bs_error(&s, v))).collect();
    let worst = errs.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    let detail = errs
        .iter()
        .map(|(v, e)| format!("v={v}: {e:+.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(worst <= 1e-3, format!("relative errors {detail} (limit 1e-3)"))
}

fn time_convergence(_: &VerifyOptions) -> Result<String, String> {
    let coarse = bs_error(&bs_surface(1.0 / 365.0)?, 100.0).abs();
    let fine = bs_error(&bs_surface(1.0 / 730.0)?, 100.0).abs();
    let ratio = coarse / fine;
    verdict(
        (3.0..=5.0).contains(&ratio),
        format!("error {coarse:.3e} -> {fine:.3e}, ratio {ratio:.3} (want [3, 5])"),
    )
}

fn debt_equity_identity(_: &VerifyOptions) -> Result<String, String> {
    let grid = Grid::new(400.0, 400).map_err(|e| e.to_string())?;
    let settings = MarchSettings::default();
    let curves = RateCurves::constant(0.05, 0.0, 0.0);
    let solve = |kind| {
        let claim = ClaimSpec::new(kind, 100.0, grid.h()).map_err(|e| e.to_string())?;
        solve_merton_surface(&claim, &grid, 0.3, &curves, 0.0, 1.0, &settings).map_err(|e| e.to_string())
    };
    let dev = debt_equity_identity_check(&solve(ClaimKind::Equity)?, &solve(ClaimKind::Debt)?)
        .map_err(|e| e.to_string())?;
    verdict(dev <= 1e-3 * 400.0, format!("max |F + f - v| = {dev:.3e} (limit 0.4)"))
}

/// `[f; e_p]` pushed through the exponential of the unbalanced block matrix.
fn dense_oracle(op: &DiscreteOperator, f: &[f64], t: f64, us: &[Vec<f64>]) -> Vec<f64> {
    let n = op.len();
    let p = us.len();
    let a = op.to_dense();
    let mut m = DMatrix::<f64>::zeros(n + p, n + p);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = t * a[i * n + j];
        }
        for k in 0..p {
            m[(i, n + k)] = t * us[p - 1 - k][i];
        }
    }
    for k in 0..p.saturating_sub(1) {
        m[(n + k, n + k + 1)] = t;
    }
    let mut x = DVector::<f64>::zeros(n + p);
    x.rows_mut(0, n).copy_from_slice(f);
    if p > 0 {
        x[n + p - 1] = 1.0;
    }
    (m.exp() * x).iter().take(n).copied().collect()
}

fn krylov_accuracy(_: &VerifyOptions) -> Result<String, String> {
    let n = 50;
    let config = ExpIntConfig::default();
    let mut worst = 0.0_f64;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
        let sub = draw(0.0, 40.0);
        let sup = draw(0.0, 40.0);
        let extra = draw(0.0, 5.0);
        let diag = (0..n).map(|i| -(sub[i] + sup[i]) - extra[i]).collect();
        let b = draw(-1.0, 1.0);
        let slope = draw(-1.0, 1.0);
        let f = draw(0.0, 2.0);
        let t = rng.random_range(0.01..0.2);
        let op = DiscreteOperator::from_bands(sub, diag, sup, b.clone());
        let us = vec![b, slope];
        let got = krylov_phi_action(&op, &f, &PhiCombination::new(t, us.clone()), &config)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        let want = dense_oracle(&op, &f, t, &us);
        let scale = want.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let err = got.iter().zip(&want).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst = worst.max(err);
    }
    verdict(worst <= 1e-6, format!("worst relative error {worst:.2e} over 100 trials (limit 1e-6)"))
}

fn phi_recurrence(opts: &VerifyOptions) -> Result<String, String> {
    let phi = |l: usize, x: f64| {
        let p = phi_scalar(l, x);
        if opts.tamper_phi && l == 2 {
            p * (1.0 + 1e-9)
        } else {
            p
        }
    };
    let mut worst = 0.0_f64;
    for &x in &[-5.0, -0.1, 0.3, 7.0] {
        for l in 0..=3 {
            worst = worst.max((x * phi(l + 1, x) + inv_factorial(l) - phi(l, x)).abs());
        }
    }
    verdict(worst <= 1e-12, format!("max residual {worst:.2e} (limit 1e-12)"))
}

fn smoothing_gluing(_: &VerifyOptions) -> Result<String, String> {
    let mut worst = 0.0_f64;
    for &eps in &[1.0, 0.25, 1e-2, 1e-3] {
        let s = PayoffSmoother::new(eps).map_err(|e| e.to_string())?;
        if s.eval(0.0) != 35.0 * eps / 256.0 {
            return Err(format!("pi(0) = {} differs from 35 eps / 256 at eps = {eps}", s.eval(0.0)));
        }
        for order in 0..=4 {
            // derivatives of max(x, 0) at ±ε, scaled by the natural size ε^(1 - order)
            let right = match order {
                0 => eps,
                1 => 1.0,
                _ => 0.0,
            };
            let scale = eps.powi(1 - order as i32);
            let r = (s.polynomial(eps, order) - right).abs() / scale;
            let l = s.polynomial(-eps, order).abs() / scale;
            worst = worst.max(r).max(l);
        }
    }
    verdict(worst <= 1e-8, format!("max scaled mismatch {worst:.2e} (limit 1e-8)"))
}

fn zero_noise_scheme(_: &VerifyOptions) -> Result<String, String> {
    let (v0, alpha, delay): (f64, f64, f64) = (2.0, 0.1, 1.0);
    let exact = v0 * (alpha * v0 * delay).exp();
    let err = |steps: usize| -> Result<f64, String> {
        let model = SddeModel::new(
            StepCurve::constant(alpha),
            StepCurve::constant(0.0),
            VolatilityModel::constant(0.0),
            MemoryPath::constant(delay, v0).map_err(|e| e.to_string())?,
            0.0,
            delay,
        )
        .map_err(|e| e.to_string())?;
        let scheme = SchemeConfig::new(1.0, delay, delay, steps).map_err(|e| e.to_string())?;
        let path = simulate_path(&model, &scheme, NoiseStream::new(0, 0)).map_err(|e| e.to_string())?;
        Ok((path.terminal() - exact).abs())
    };
    let (a, b) = (err(200)?, err(400)?);
    let ratio = a / b;
    verdict(
        (1.7..=2.3).contains(&ratio),
        format!("error {a:.3e} -> {b:.3e}, ratio {ratio:.3} (want [1.7, 2.3])"),
    )
}

fn merton(sigma: f64, horizon: f64) -> MertonModel {
    MertonModel {
        initial_value: 1.0,
        alpha: StepCurve::constant(0.05),
        payout: StepCurve::constant(0.0),
        sigma,
        origin: 0.0,
        horizon,
    }
}

fn merton_strong_convergence(_: &VerifyOptions) -> Result<String, String> {
    let (sigma, horizon, coarse_steps, paths) = (0.5, 1.0, 64, 1000u64);
    let model = merton(sigma, horizon);
    let fine = SchemeConfig::new(1.0, horizon, horizon, 2 * coarse_steps).map_err(|e| e.to_string())?;
    let coarse = SchemeConfig::new(1.0, horizon, horizon, coarse_steps).map_err(|e| e.to_string())?;
    let (mut ef, mut ec) = (0.0, 0.0);
    for p in 0..paths {
        let dw = NoiseStream::new(2024, p).increments(fine.steps, fine.dt);
        let dw_coarse: Vec<f64> = dw.chunks(2).map(|c| c[0] + c[1]).collect();
        let w: f64 = dw.iter().sum();
        let exact = ((0.05 - 0.5 * sigma * sigma) * horizon + sigma * w).exp();
        let vf = simulate_merton_with_increments(&model, &fine, &dw).map_err(|e| e.to_string())?;
        let vc = simulate_merton_with_increments(&model, &coarse, &dw_coarse).map_err(|e| e.to_string())?;
        ef += (vf[fine.steps] - exact).powi(2);
        ec += (vc[coarse.steps] - exact).powi(2);
    }
    let ratio = (ec / ef).sqrt();
    verdict(
        (1.25..=1.6).contains(&ratio),
        format!("RMS error ratio {ratio:.3} over {paths} paths (want [1.25, 1.6])"),
    )
}

fn monte_carlo_mean(_: &VerifyOptions) -> Result<String, String> {
    let horizon = 2.0;
    let model = merton(0.2, horizon);
    let scheme = SchemeConfig::new(1.0, horizon, horizon, 730).map_err(|e| e.to_string())?;
    let ens = run_merton_ensemble(&model, &scheme, 10_000, 7).map_err(|e| e.to_string())?;
    let last = ens.times.len() - 1;
    let mean = ens.mean_path()[last];
    let se = ens.stddev_path()[last] / (ens.n_included() as f64).sqrt();
    let exact = (0.05 * horizon).exp();
    let z = (mean - exact) / se;
    verdict(
        z.abs() <= 3.0,
        format!("mean {mean:.5} vs {exact:.5}, {z:+.2} standard errors (limit 3)"),
    )
}

fn stochastic_consistency(opts: &VerifyOptions) -> Result<String, String> {
    let (delay, horizon, sigma) = (1.0, 2.0, 0.3);
    let model = SddeModel::new(
        StepCurve::constant(0.05),
        StepCurve::constant(0.0),
        VolatilityModel::constant(sigma),
        MemoryPath::constant(delay, 2.0).map_err(|e| e.to_string())?,
        2000.0,
        horizon,
    )
    .map_err(|e| e.to_string())?;
    let scheme = SchemeConfig::new(1.0, horizon, delay, 730).map_err(|e| e.to_string())?;
    let grid = Grid::new(8.0, 400).map_err(|e| e.to_string())?;
    let claim = ClaimSpec::new(ClaimKind::Equity, 2.0, grid.h()).map_err(|e| e.to_string())?;
    let curves = RateCurves::constant(0.05, 0.0, 0.0);
    let settings = MarchSettings::default();
    let reference =
        march(&claim, &grid, &curves, 2000.0 + horizon, delay, |_| Ok(sigma), &settings).map_err(|e| e.to_string())?;
    let samples = 16;
    let outcomes = crate::parallel::ordered_map(samples, opts.workers.max(1), |i| {
        solve_sample(&claim, &grid, &model, &scheme, &curves, 42, i, &settings)
    });
    let mut worst = 0.0_f64;
    for o in &outcomes {
        let s = o.as_ref().map_err(|e| e.to_string())?;
        for (a, b) in s.surface.values.iter().flatten().zip(reference.values.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
    }
    let mean = reduce_samples(outcomes, 42).map_err(|e| e.to_string())?;
    for (a, b) in mean.mean.values.iter().flatten().zip(reference.values.iter().flatten()) {
        worst = worst.max((a - b).abs());
    }
    verdict(worst <= 1e-10, format!("max deviation {worst:.2e} over {samples} samples (limit 1e-10)"))
}

fn scratch_dir() -> Result<PathBuf, String> {
    let dir = std::env::temp_dir().join(format!(
        "delaycredit-verify-{}-{}",
        std::process::id(),
        Instant::now().elapsed().as_nanos()
    ));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn read_outputs(files: &[PathBuf]) -> Result<Vec<Vec<u8>>, String> {
    files.iter().map(|f| std::fs::read(f).map_err(|e| e.to_string())).collect()
}

fn determinism(_: &VerifyOptions) -> Result<String, String> {
    let dir = scratch_dir()?;
    let result = determinism_in(&dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn determinism_in(dir: &Path) -> Result<String, String> {
    let firm = dir.join("firm.csv");
    std::fs::write(&firm, SYNTHETIC_FIRM).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for command in [Command::Simulate, Command::PriceEquity, Command::PriceDebt, Command::Compare] {
        let mut cfg = RunConfig::new(command);
        cfg.firm_csv = firm.clone();
        cfg.out = dir.join("run");
        cfg.n_paths = 12;
        cfg.grid = 80;
        cfg.dtau = 1.0 / 52.0;
        cfg.delay = 4.0;
        cfg.horizon = 6.0;
        let mut runs = Vec::new();
        for workers in [1, 4, 1] {
            let files = match command {
                Command::Simulate => commands::cmd_simulate(&cfg, workers).map(|r| r.files),
                Command::PriceEquity => commands::cmd_price(&cfg, ClaimKind::Equity, workers).map(|r| r.files),
                Command::PriceDebt => commands::cmd_price(&cfg, ClaimKind::Debt, workers).map(|r| r.files),
                _ => commands::cmd_compare(&cfg, workers).map(|r| r.files),
            }
            .map_err(|e| format!("{}: {e}", command.name()))?;
            runs.push(read_outputs(&files)?);
        }
        if runs.iter().any(|r| r != &runs[0]) {
            return Err(format!("{} outputs differ between runs", command.name()));
        }
        compared += runs[0].len();
    }
    Ok(format!("{compared} output files byte-identical across 1 and 4 workers"))
}

fn metzler_monotone(_: &VerifyOptions) -> Result<String, String> {
    let series = csv_io::parse_firm_csv(SYNTHETIC_FIRM, "synthetic_firm", Path::new("synthetic_firm.csv"))
        .map_err(|e| e.to_string())?;
    let cfg = RunConfig::new(Command::PriceEquity);
    let ws = prepare_with(&cfg, series).map_err(|e| e.to_string())?;
    let priced = commands::price(&ws, &cfg, ClaimKind::Equity, 1).map_err(|e| e.to_string())?;
    let s = &priced.surface;
    let mut min_off = f64::INFINITY;
    for (n, w) in s.taus.windows(2).enumerate() {
        let (c0, c1) = (s.maturity - w[1], s.maturity - w[0]);
        let coeffs = Coefficients {
            sigma: effective_sigma_deterministic(&ws.g, &ws.memory, cfg.horizon, cfg.delay, w[0])
                .map_err(|e| e.to_string())?,
            rate: ws.rates.rate.eval_on(c0, c1),
            payout: ws.rates.payout.eval_on(c0, c1),
            debt_payout: ws.rates.debt_payout.eval_on(c0, c1),
        };
        // the lowest face sits at v = 0 with flux -C
        if coeffs.payout > 0.0 {
            return Err(format!("step {n}: negative face flux, the check does not apply"));
        }
        let bc = BoundaryData {
            lower: s.lower[n],
            upper: s.upper[n],
        };
        let op = assemble(&s.grid, &s.claim, &coeffs, bc, UpwindRule::Paper).map_err(|e| e.to_string())?;
        min_off = min_off.min(op.min_off_diagonal());
    }
    let bad_row = s.values.iter().position(|row| row.windows(2).any(|p| p[1] < p[0]));
    verdict(
        min_off >= 0.0 && bad_row.is_none(),
        format!(
            "min off-diagonal {min_off:.3e} over {} operators; {}",
            s.taus.len() - 1,
            match bad_row {
                None => "all equity rows nondecreasing".to_string(),
                Some(n) => format!("row {n} decreases"),
            }
        ),
    )
}
