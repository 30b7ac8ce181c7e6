use alloc::vec::Vec;

use super::{FirmSeries, TIME_EPS};
use crate::error::{Error, Result};

/// Right-continuous piecewise-constant function of calendar time.
///
/// The value on `[t_k, t_{k+1})` is `v_k`; before the first knot the first
/// value applies and after the last knot the last value is held.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepCurve {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::BadParameters("step curve needs matching knots and values".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParameters("step curve knots must increase".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: alloc::vec![0.0],
            values: alloc::vec![value],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn index(&self, t: f64) -> usize {
        self.knots
            .partition_point(|&k| k <= t + TIME_EPS)
            .saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.index(t)]
    }

    /// Value on the open interval `(a, b)`, assuming no knot lies strictly
    /// inside it.
    pub fn eval_on(&self, a: f64, b: f64) -> f64 {
        self.eval(0.5 * (a + b))
    }

    /// Exact integral over `[a, b]` (`a <= b`).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut t = a;
        let mut k = self.index(a);
        while t < b {
            let next = self.knots.get(k + 1).copied().unwrap_or(f64::INFINITY).min(b);
            let next = if next <= t { b } else { next };
            total += self.values[k] * (next - t);
            t = next;
            k += 1;
            if k >= self.values.len() {
                k = self.values.len() - 1;
            }
        }
        total
    }

    /// Knots lying strictly inside `(a, b)`.
    pub fn breaks_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.knots
            .iter()
            .copied()
            .filter(move |&k| k > a + TIME_EPS && k < b - TIME_EPS)
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Yearly coefficients as piecewise-constant curves of calendar time, plus the
/// step size of the simulation lattice they were resampled for.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCurves {
    pub rate: StepCurve,
    pub payout: StepCurve,
    pub debt_payout: StepCurve,
    /// Drift coefficient of the firm-value equation; the risk-free rate unless
    /// overridden.
    pub alpha: StepCurve,
    dt: f64,
}

impl CoefficientCurves {
    /// Constant curves, mainly for tests and closed-form checks.
    pub fn constant(rate: f64, payout: f64, debt_payout: f64, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            rate: StepCurve::constant(rate),
            payout: StepCurve::constant(payout),
            debt_payout: StepCurve::constant(debt_payout),
            alpha: StepCurve::constant(rate),
            dt,
        })
    }

    pub fn with_alpha(mut self, alpha: StepCurve) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Sample a curve at `origin + n dt` for `n = 0..count`.
    pub fn sample(curve: &StepCurve, origin: f64, dt: f64, count: usize) -> Vec<f64> {
        (0..count).map(|n| curve.eval(origin + n as f64 * dt)).collect()
    }

    /// Every calendar time at which some curve changes value.
    pub fn breaks_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .rate
            .breaks_in(a, b)
            .chain(self.payout.breaks_in(a, b))
            .chain(self.debt_payout.breaks_in(a, b))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|x, y| (*x - *y).abs() < TIME_EPS);
        out
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || dt > 1.0 + TIME_EPS {
        return Err(Error::DtNotAligned { dt });
    }
    let per_year = libm::round(1.0 / dt);
    if (per_year * dt - 1.0).abs() > TIME_EPS {
        return Err(Error::DtNotAligned { dt });
    }
    Ok(())
}

/// Yearly `r`, `C` and `C_y` as right-continuous step curves, constant on each
/// `[year, year + 1)`, for a lattice of step `dt` (which must divide one year).
pub fn resample_coefficients(series: &FirmSeries, dt: f64) -> Result<CoefficientCurves> {
    check_dt(dt)?;
    let knots: Vec<f64> = series.rows().iter().map(|r| r.year).collect();
    let column = |f: fn(&super::YearRow) -> f64| -> Result<StepCurve> {
        StepCurve::new(knots.clone(), series.rows().iter().map(f).collect())
    };
    let rate = column(|r| r.rate)?;
    Ok(CoefficientCurves {
        alpha: rate.clone(),
        rate,
        payout: column(|r| r.payout)?,
        debt_payout: column(|r| r.debt_payout)?,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::fixtures::row;
    use alloc::vec;

    fn two_years() -> FirmSeries {
        let mut a = row(2000.0, 0.3, 10.0);
        a.rate = 0.05;
        a.payout = 0.0;
        let mut b = row(2001.0, 0.3, 11.0);
        b.rate = 0.04;
        FirmSeries::new("r", vec![a, b]).unwrap()
    }

    #[test]
    fn piecewise_constant_rates() {
        let c = resample_coefficients(&two_years(), 0.25).unwrap();
        assert_eq!(c.rate.eval(2000.75), 0.05);
        assert_eq!(c.rate.eval(2001.0), 0.04);
        assert_eq!(c.alpha.eval(2000.0), 0.05);
        let lattice = CoefficientCurves::sample(&c.rate, 2000.0, 0.25, 8);
        assert_eq!(lattice, vec![0.05, 0.05, 0.05, 0.05, 0.04, 0.04, 0.04, 0.04]);
    }

    #[test]
    fn misaligned_dt() {
        assert_eq!(
            resample_coefficients(&two_years(), 0.3).unwrap_err(),
            Error::DtNotAligned { dt: 0.3 }
        );
        assert!(resample_coefficients(&two_years(), 1.0 / 366.0).is_ok());
    }

    #[test]
    fn zero_payout_stays_zero() {
        let c = resample_coefficients(&two_years(), 0.5).unwrap();
        for k in 0..40 {
            assert_eq!(c.payout.eval(1995.0 + 0.37 * k as f64), 0.0);
        }
    }

    #[test]
    fn yearly_averages_preserved() {
        let c = resample_coefficients(&two_years(), 1.0 / 12.0).unwrap();
        for (year, expected) in [(2000.0, 0.05), (2001.0, 0.04)] {
            let samples = CoefficientCurves::sample(&c.rate, year, 1.0 / 12.0, 12);
            let mean = samples.iter().sum::<f64>() / 12.0;
            assert!((mean - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn step_integral_is_exact() {
        let c = StepCurve::new(vec![2000.0, 2001.0, 2002.0], vec![0.05, 0.04, 0.02]).unwrap();
        let got = c.integral(2000.5, 2002.25);
        assert!((got - (0.5 * 0.05 + 0.04 + 0.25 * 0.02)).abs() < 1e-15);
        assert_eq!(c.integral(1990.0, 1991.0), 0.05);
        assert_eq!(c.integral(2003.0, 2003.0), 0.0);
        let breaks: Vec<f64> = c.breaks_in(2000.5, 2002.25).collect();
        assert_eq!(breaks, vec![2001.0, 2002.0]);
    }
}
