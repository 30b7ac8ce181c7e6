//! θ-semi-implicit Euler–Maruyama for the delayed firm-value equation
//!
//! ```text
//! dV(t) = (α V(t) V(t-L) - C) dt + g(V(t-L)) V(t) dW(t),   V = φ on [-L, 0]
//! ```
//!
//! and for the Merton equation `dV = (αV - C) dt + σ V dW`.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::market_data::{MemoryPath, StepCurve, VolatilityModel};

/// Denominators of the implicit solve below this magnitude are rejected.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

/// Everything needed to simulate the delayed equation.
#[derive(Debug, Clone)]
pub struct SddeModel {
    pub alpha: StepCurve,
    pub payout: StepCurve,
    pub g: VolatilityModel,
    pub memory: MemoryPath,
    /// Calendar time of model time zero; used to read the step curves.
    pub origin: f64,
    pub horizon: f64,
}

impl SddeModel {
    pub fn new(
        alpha: StepCurve,
        payout: StepCurve,
        g: VolatilityModel,
        memory: MemoryPath,
        origin: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::BadParameters("horizon T must be positive".into()));
        }
        Ok(Self {
            alpha,
            payout,
            g,
            memory,
            origin,
            horizon,
        })
    }

    pub fn delay(&self) -> f64 {
        self.memory.delay()
    }
}

/// Time lattice and implicitness of the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub theta: f64,
    pub steps: usize,
    pub dt: f64,
    /// Number of steps spanning the delay, `L = lag_steps * dt`.
    pub lag_steps: usize,
}

impl SchemeConfig {
    /// `steps` uniform steps over `[0, horizon]`; the delay must be a whole
    /// number of steps.
    pub fn new(theta: f64, horizon: f64, delay: f64, steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::BadParameters("theta must lie in [0, 1]".into()));
        }
        if steps == 0 || !(horizon > 0.0) || !(delay > 0.0) {
            return Err(Error::BadParameters("need steps >= 1, T > 0, L > 0".into()));
        }
        let dt = horizon / steps as f64;
        let lag = libm::round(delay / dt);
        if lag < 1.0 || (delay - lag * dt).abs() > 1e-12 * delay {
            return Err(Error::BadParameters(alloc::format!(
                "delay {delay} is not a whole number of steps of {dt}"
            )));
        }
        Ok(Self {
            theta,
            steps,
            dt,
            lag_steps: lag as usize,
        })
    }

    /// Scheme with a given step size; `horizon / dt` must be an integer.
    pub fn with_dt(theta: f64, horizon: f64, delay: f64, dt: f64) -> Result<Self> {
        let steps = libm::round(horizon / dt);
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::BadParameters(alloc::format!(
                "horizon {horizon} is not a whole number of steps of {dt}"
            )));
        }
        Self::new(theta, horizon, delay, steps as usize)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Seeded source of Brownian increments for one path.
///
/// Each `(seed, stream_id)` pair selects an independent ChaCha8 stream, so a
/// path's noise does not depend on which thread simulates it or in what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// `count` i.i.d. `N(0, dt)` increments.
    pub fn increments(&self, count: usize, dt: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        let scale = libm::sqrt(dt);
        (0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    }
}

/// One simulated trajectory on `t_n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
    pub scheme: SchemeConfig,
}

impl Path {
    /// Smallest simulated value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Paths that touch zero or below are kept but flagged; they are left out
    /// of statistics and PDE coefficients.
    pub fn is_flagged(&self) -> bool {
        !(self.min_value() > 0.0)
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Linear interpolation in time, held constant outside `[0, T]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let dt = self.scheme.dt;
        let last = self.values.len() - 1;
        if t <= 0.0 {
            return self.values[0];
        }
        let x = t / dt;
        let k = libm::floor(x) as usize;
        if k >= last {
            return self.values[last];
        }
        let w = x - k as f64;
        if w == 0.0 {
            return self.values[k];
        }
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }
}

/// `V_{n - m}`: from the path when `n >= m`, otherwise from the memory path at
/// `(n - m) dt`.
pub fn lagged_value(path: &[f64], memory: &MemoryPath, n: usize, lag_steps: usize, dt: f64) -> f64 {
    if n >= lag_steps {
        path[n - lag_steps]
    } else {
        memory.eval(-((lag_steps - n) as f64) * dt)
    }
}

/// Inputs of one θ-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaStep {
    pub value: f64,
    /// `V_{n-m}`.
    pub lag: f64,
    /// `V_{n-m+1}`, already known because `m >= 1`.
    pub lag_next: f64,
    pub alpha: f64,
    pub alpha_next: f64,
    pub payout: f64,
    pub payout_next: f64,
    /// `g(V_{n-m})`.
    pub vol: f64,
    pub dw: f64,
    pub theta: f64,
    pub dt: f64,
}

/// Solve one step of
///
/// ```text
/// V_{n+1} = V_n + dt [θ(α_{n+1} V_{n+1} V_{n-m+1} - C_{n+1}) + (1-θ)(α_n V_n V_{n-m} - C_n)]
///           + g(V_{n-m}) V_n ΔW_n
/// ```
///
/// The implicit part is linear in `V_{n+1}`. On a singular denominator the
/// error carries `step = 0`; [`simulate_path`] fills in the real index.
pub fn step_theta(s: &ThetaStep) -> Result<f64> {
    let denom = 1.0 - s.theta * s.dt * s.alpha_next * s.lag_next;
    if denom.abs() < SINGULAR_THRESHOLD {
        return Err(Error::SingularImplicitStep {
            step: 0,
            denominator: denom,
        });
    }
    let explicit = (1.0 - s.theta) * (s.alpha * s.value * s.lag - s.payout);
    let rhs = s.value + s.dt * (explicit - s.theta * s.payout_next) + s.vol * s.value * s.dw;
    Ok(rhs / denom)
}

fn with_step(err: Error, step: usize) -> Error {
    match err {
        Error::SingularImplicitStep { denominator, .. } => Error::SingularImplicitStep { step, denominator },
        other => other,
    }
}

/// Simulate the delayed equation with the increments of `noise`.
pub fn simulate_path(model: &SddeModel, scheme: &SchemeConfig, noise: NoiseStream) -> Result<Path> {
    let dws = noise.increments(scheme.steps, scheme.dt);
    let values = simulate_with_increments(model, scheme, &dws)?;
    Ok(Path {
        times: (0..=scheme.steps).map(|n| scheme.time(n)).collect(),
        values,
        seed: noise.seed,
        stream_id: noise.stream_id,
        scheme: *scheme,
    })
}

/// Scheme values `V_0..V_M` for explicit increments `ΔW_0..ΔW_{M-1}`.
pub fn simulate_with_increments(model: &SddeModel, scheme: &SchemeConfig, dws: &[f64]) -> Result<Vec<f64>> {
    check_consistent(model, scheme)?;
    let (m, dt) = (scheme.lag_steps, scheme.dt);
    let alpha = sample(&model.alpha, model.origin, dt, scheme.steps + 1);
    let payout = sample(&model.payout, model.origin, dt, scheme.steps + 1);
    let mut v = Vec::with_capacity(scheme.steps + 1);
    v.push(model.memory.at_origin());
    for (n, &dw) in dws.iter().enumerate().take(scheme.steps) {
        let lag = lagged_value(&v, &model.memory, n, m, dt);
        let lag_next = lagged_value(&v, &model.memory, n + 1, m, dt);
        let lag_time = n as f64 * dt - model.delay();
        let step = ThetaStep {
            value: v[n],
            lag,
            lag_next,
            alpha: alpha[n],
            alpha_next: alpha[n + 1],
            payout: payout[n],
            payout_next: payout[n + 1],
            vol: model.g.at_lag(lag_time, lag),
            dw,
            theta: scheme.theta,
            dt,
        };
        let next = step_theta(&step).map_err(|e| with_step(e, n))?;
        if !next.is_finite() {
            return Err(Error::NonFiniteValue { step: n + 1 });
        }
        v.push(next);
    }
    Ok(v)
}

fn check_consistent(model: &SddeModel, scheme: &SchemeConfig) -> Result<()> {
    let horizon_ok = (scheme.steps as f64 * scheme.dt - model.horizon).abs() <= 1e-9 * model.horizon;
    let lag_ok = (scheme.lag_steps as f64 * scheme.dt - model.delay()).abs() <= 1e-12 * model.delay();
    if !horizon_ok || !lag_ok {
        return Err(Error::BadParameters(
            "scheme lattice does not match the model's T and L".into(),
        ));
    }
    Ok(())
}

fn sample(curve: &StepCurve, origin: f64, dt: f64, count: usize) -> Vec<f64> {
    (0..count).map(|n| curve.eval(origin + n as f64 * dt)).collect()
}

/// The Merton firm-value model with constant volatility.
#[derive(Debug, Clone)]
pub struct MertonModel {
    pub initial_value: f64,
    pub alpha: StepCurve,
    pub payout: StepCurve,
    pub sigma: f64,
    pub origin: f64,
    pub horizon: f64,
}

/// Merton path with the increments of `noise`.
pub fn simulate_merton_path(model: &MertonModel, scheme: &SchemeConfig, noise: NoiseStream) -> Result<Path> {
    let dws = noise.increments(scheme.steps, scheme.dt);
    let values = simulate_merton_with_increments(model, scheme, &dws)?;
    Ok(Path {
        times: (0..=scheme.steps).map(|n| scheme.time(n)).collect(),
        values,
        seed: noise.seed,
        stream_id: noise.stream_id,
        scheme: *scheme,
    })
}

/// θ-scheme for `dV = (αV - C) dt + σ V dW` with explicit increments.
pub fn simulate_merton_with_increments(model: &MertonModel, scheme: &SchemeConfig, dws: &[f64]) -> Result<Vec<f64>> {
    if !(model.sigma > 0.0) {
        return Err(Error::BadParameters("Merton sigma must be positive".into()));
    }
    let dt = scheme.dt;
    let alpha = sample(&model.alpha, model.origin, dt, scheme.steps + 1);
    let payout = sample(&model.payout, model.origin, dt, scheme.steps + 1);
    let theta = scheme.theta;
    let mut v = Vec::with_capacity(scheme.steps + 1);
    v.push(model.initial_value);
    for (n, &dw) in dws.iter().enumerate().take(scheme.steps) {
        let denom = 1.0 - theta * dt * alpha[n + 1];
        if denom.abs() < SINGULAR_THRESHOLD {
            return Err(Error::SingularImplicitStep { step: n, denominator: denom });
        }
        let explicit = (1.0 - theta) * (alpha[n] * v[n] - payout[n]);
        let rhs = v[n] + dt * (explicit - theta * payout[n + 1]) + model.sigma * v[n] * dw;
        let next = rhs / denom;
        if !next.is_finite() {
            return Err(Error::NonFiniteValue { step: n + 1 });
        }
        v.push(next);
    }
    Ok(v)
}

/// `E[V(T)] = V0 e^{αT}` for the Merton model with `C = 0`.
pub fn merton_exact_mean(initial_value: f64, alpha: f64, horizon: f64) -> f64 {
    initial_value * libm::exp(alpha * horizon)
}
