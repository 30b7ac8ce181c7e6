//! The simulate, price and compare pipelines.

use std::path::PathBuf;

use delaycredit_core::market_data::{
    build_memory_path, fit_volatility, resample_coefficients, CoefficientCurves, FirmSeries, MemoryPath, VolKind,
    VolatilityModel,
};
use delaycredit_core::monte_carlo::{lattice, Ensemble};
use delaycredit_core::pde::{build_grid, ClaimKind, ClaimSpec};
use delaycredit_core::pricing::{
    reduce_samples, solve_merton_surface, solve_sample, solve_surface_deterministic, MarchSettings, PricingSurface,
    RateCurves,
};
use delaycredit_core::sdde::{simulate_path, NoiseStream, SchemeConfig, SddeModel};
use delaycredit_core::Error as CoreError;

use crate::config::RunConfig;
use crate::csv_io::{self, SlicePoint};
use crate::error::{CliError, Result};
use crate::parallel::ordered_map;

/// Two-sided level of the ensemble band in the summary file.
pub const BAND_LEVEL: f64 = 0.95;

/// Inputs shared by every command, derived from the firm file and the config.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub series: FirmSeries,
    pub memory: MemoryPath,
    pub g: VolatilityModel,
    pub curves: CoefficientCurves,
    pub rates: RateCurves,
    pub scheme: SchemeConfig,
}

impl Workspace {
    pub fn model(&self, cfg: &RunConfig) -> Result<SddeModel> {
        Ok(SddeModel::new(
            self.curves.alpha.clone(),
            self.curves.payout.clone(),
            self.g.clone(),
            self.memory.clone(),
            cfg.origin,
            cfg.horizon,
        )?)
    }
}

/// Steps per year of the simulation lattice: the smallest count not below
/// `1 / dtau` for which both `L` and `T` are whole numbers of steps.
pub fn sde_steps_per_year(dtau: f64, delay: f64, horizon: f64) -> Result<usize> {
    let base = (1.0 / dtau).round().max(1.0) as usize;
    let whole = |x: f64| (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0);
    (base..base * 64 + 64)
        .find(|&n| whole(n as f64 * delay) && whole(n as f64 * horizon))
        .ok_or_else(|| {
            CliError::Config(format!(
                "no simulation step near {dtau} divides one year, L = {delay} and T = {horizon}"
            ))
        })
}

/// Time-based volatility fits are read on memory time; once `g` has to be
/// evaluated at simulated values (T > L) the value fit is used instead.
pub fn resolve_vol_fit(cfg: &RunConfig) -> VolKind {
    if cfg.horizon > cfg.delay && cfg.vol_fit.uses_time() {
        VolKind::ValueFitQuadratic
    } else {
        cfg.vol_fit
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Workspace> {
    cfg.validate().map_err(CliError::Config)?;
    let series = csv_io::load_firm_csv(&cfg.firm_csv)?;
    prepare_with(cfg, series)
}

pub fn prepare_with(cfg: &RunConfig, series: FirmSeries) -> Result<Workspace> {
    let memory = build_memory_path(&series, cfg.origin, cfg.delay)?;
    let g = fit_volatility(&series, cfg.origin, cfg.delay, resolve_vol_fit(cfg))?;
    let per_year = sde_steps_per_year(cfg.dtau, cfg.delay, cfg.horizon)?;
    let curves = resample_coefficients(&series, 1.0 / per_year as f64)?;
    let rates = RateCurves {
        rate: curves.rate.clone(),
        payout: curves.payout.clone(),
        debt_payout: curves.debt_payout.clone(),
    };
    let scheme = SchemeConfig::new(
        cfg.theta,
        cfg.horizon,
        cfg.delay,
        (per_year as f64 * cfg.horizon).round() as usize,
    )?;
    Ok(Workspace {
        series,
        memory,
        g,
        curves,
        rates,
        scheme,
    })
}

/// Simulate the ensemble on `workers` threads.
pub fn run_ensemble(ws: &Workspace, cfg: &RunConfig, workers: usize) -> Result<Ensemble> {
    let model = ws.model(cfg)?;
    let outcomes = ordered_map(cfg.n_paths, workers, |i| {
        simulate_path(&model, &ws.scheme, NoiseStream::new(cfg.seed, i as u64))
    });
    Ok(Ensemble::from_outcomes(cfg.seed, lattice(&ws.scheme), outcomes)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub files: Vec<PathBuf>,
    pub n_included: usize,
    pub n_paths: usize,
}

pub fn cmd_simulate(cfg: &RunConfig, workers: usize) -> Result<SimulateReport> {
    let mut cfg = cfg.clone();
    let ws = prepare(&cfg)?;
    cfg.vol_fit = ws.g.kind();
    let ensemble = run_ensemble(&ws, &cfg, workers)?;
    let stamp = cfg.to_string();
    let files = vec![cfg.output("paths.csv"), cfg.output("summary.csv"), cfg.output("observed.csv")];
    csv_io::write_paths(&files[0], &stamp, &ensemble)?;
    csv_io::write_summary(&files[1], &stamp, &ensemble, BAND_LEVEL)?;
    csv_io::write_observed(
        &files[2],
        &stamp,
        &ws.series,
        cfg.origin,
        cfg.origin - cfg.delay,
        cfg.origin + cfg.horizon,
    )?;
    Ok(SimulateReport {
        files,
        n_included: ensemble.n_included(),
        n_paths: ensemble.n_paths(),
    })
}

/// A priced claim with its Monte Carlo diagnostics when `T > L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Priced {
    pub surface: PricingSurface,
    pub stddev: Option<Vec<Vec<f64>>>,
    pub skipped: usize,
    pub clamp_fraction: f64,
    pub promised: f64,
    pub epsilon: f64,
}

fn promised_payment(ws: &Workspace, cfg: &RunConfig) -> f64 {
    cfg.promised
        .unwrap_or_else(|| ws.series.row_at(cfg.origin + cfg.horizon).book_debt)
}

fn settings(cfg: &RunConfig) -> MarchSettings {
    MarchSettings {
        step: cfg.dtau,
        upwind: cfg.upwind,
        ..Default::default()
    }
}

/// Price one claim under the delayed model: directly for `T ≤ L`, by nested
/// Monte Carlo over `cfg.n_paths` samples otherwise.
pub fn price(ws: &Workspace, cfg: &RunConfig, kind: ClaimKind, workers: usize) -> Result<Priced> {
    let promised = promised_payment(ws, cfg);
    let grid = build_grid(promised, cfg.grid, cfg.vmax_multiple)?;
    let epsilon = cfg.epsilon.unwrap_or(grid.h());
    let claim = ClaimSpec::new(kind, promised, epsilon)?;
    let set = settings(cfg);
    if cfg.horizon <= cfg.delay {
        let surface = solve_surface_deterministic(
            &claim,
            &grid,
            &ws.g,
            &ws.memory,
            &ws.rates,
            cfg.origin,
            cfg.horizon,
            &set,
        )?;
        return Ok(Priced {
            surface,
            stddev: None,
            skipped: 0,
            clamp_fraction: 0.0,
            promised,
            epsilon,
        });
    }
    let model = ws.model(cfg)?;
    let outcomes = ordered_map(cfg.n_paths, workers, |i| {
        solve_sample(&claim, &grid, &model, &ws.scheme, &ws.rates, cfg.seed, i, &set)
    });
    // paths that fail or touch zero are skipped; a PDE failure on a valid
    // path aborts the run
    for e in outcomes.iter().filter_map(|o| o.as_ref().err()) {
        if matches!(e, CoreError::AtTauIndex { .. } | CoreError::BadParameters(_)) {
            return Err(e.clone().into());
        }
    }
    let stats = reduce_samples(outcomes, cfg.seed)?;
    let clamp_fraction = if stats.evaluations == 0 {
        0.0
    } else {
        stats.clamped as f64 / stats.evaluations as f64
    };
    Ok(Priced {
        surface: stats.mean,
        stddev: Some(stats.stddev),
        skipped: stats.skipped.len(),
        clamp_fraction,
        promised,
        epsilon,
    })
}

/// Slice at the observed firm value of each data year inside the surface's
/// window (nearest τ row, nearest grid centre).
pub fn slice(surface: &PricingSurface, series: &FirmSeries, kind: ClaimKind) -> Vec<SlicePoint> {
    let last = surface.taus.len() - 1;
    let start = surface.calendar_time(last);
    let end = surface.maturity;
    series
        .rows()
        .iter()
        .filter(|r| r.year >= start - 1e-9 && r.year <= end + 1e-9)
        .map(|r| {
            let tau = end - r.year;
            let n = nearest_row(&surface.taus, tau);
            let i = surface.grid.nearest(r.firm_value);
            let real = match kind {
                ClaimKind::Equity => r.firm_value - r.book_debt,
                ClaimKind::Debt => r.book_debt,
            };
            SlicePoint {
                year: r.year,
                model: surface.values[n][i],
                real: Some(real),
            }
        })
        .collect()
}

fn nearest_row(taus: &[f64], tau: f64) -> usize {
    let k = taus.partition_point(|&t| t < tau);
    if k == 0 {
        0
    } else if k == taus.len() || tau - taus[k - 1] <= taus[k] - tau {
        k - 1
    } else {
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    pub files: Vec<PathBuf>,
    pub skipped: usize,
    pub clamp_fraction: f64,
}

fn resolved(cfg: &RunConfig, ws: &Workspace, priced: &Priced) -> RunConfig {
    let mut c = cfg.clone();
    c.vol_fit = ws.g.kind();
    c.epsilon = Some(priced.epsilon);
    c.promised = Some(priced.promised);
    c
}

pub fn cmd_price(cfg: &RunConfig, kind: ClaimKind, workers: usize) -> Result<PriceReport> {
    let ws = prepare(cfg)?;
    let priced = price(&ws, cfg, kind, workers)?;
    let cfg = resolved(cfg, &ws, &priced);
    let stamp = cfg.to_string();
    let mut files = vec![cfg.output("surface.csv"), cfg.output("slice.csv")];
    csv_io::write_surface(&files[0], &stamp, &priced.surface)?;
    csv_io::write_slice(&files[1], &stamp, &slice(&priced.surface, &ws.series, kind))?;
    if let Some(sd) = &priced.stddev {
        let path = cfg.output("surface_stddev.csv");
        csv_io::write_grid_table(&path, &stamp, &priced.surface, sd)?;
        files.push(path);
    }
    Ok(PriceReport {
        files,
        skipped: priced.skipped,
        clamp_fraction: priced.clamp_fraction,
    })
}

/// `year,delayed,merton,real` for equity at the observed firm values. The
/// Merton volatility is the memory-window mean of σ.
pub fn cmd_compare(cfg: &RunConfig, workers: usize) -> Result<PriceReport> {
    let ws = prepare(cfg)?;
    let priced = price(&ws, cfg, ClaimKind::Equity, workers)?;
    let sigma = fit_volatility(&ws.series, cfg.origin, cfg.delay, VolKind::ConstantMean)?.evaluate(0.0);
    let merton = solve_merton_surface(
        &priced.surface.claim,
        &priced.surface.grid,
        sigma,
        &ws.rates,
        cfg.origin,
        cfg.horizon,
        &settings(cfg),
    )?;
    let delayed = slice(&priced.surface, &ws.series, ClaimKind::Equity);
    let baseline = slice(&merton, &ws.series, ClaimKind::Equity);
    let cfg = resolved(cfg, &ws, &priced);
    let path = cfg.output("compare.csv");
    let mut out = csv_io::CsvOut::create(&path, &cfg.to_string())?;
    out.record(["year", "delayed", "merton", "real"])?;
    for d in &delayed {
        let m = baseline.iter().find(|b| b.year == d.year).map(|b| b.model);
        out.record([
            csv_io::fmt(d.year),
            csv_io::fmt(d.model),
            m.map(csv_io::fmt).unwrap_or_default(),
            d.real.map(csv_io::fmt).unwrap_or_default(),
        ])?;
    }
    out.finish()?;
    Ok(PriceReport {
        files: vec![path],
        skipped: priced.skipped,
        clamp_fraction: priced.clamp_fraction,
    })
}
