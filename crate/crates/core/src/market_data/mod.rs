//! Firm observations, memory paths, volatility models and coefficient curves.
//!
//! Times on the model axis are measured in years relative to the pricing
//! origin: the memory path lives on `[-L, 0]` and simulations run on `[0, T]`.
//! Calendar years only appear in [`FirmSeries`] and [`StepCurve`].

mod curves;
mod volatility;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use curves::{resample_coefficients, CoefficientCurves, StepCurve};
pub use volatility::{fit_volatility, VolKind, VolatilityModel};

/// Minimum number of daily returns behind each yearly σ.
pub const MIN_OBSERVATIONS: u32 = 150;

/// Tolerance used when comparing calendar times.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// One yearly observation for a firm. Currency columns are in millions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearRow {
    pub year: f64,
    /// Risk-free rate per year.
    pub rate: f64,
    /// Annualised standard deviation of daily returns.
    pub sigma: f64,
    pub n_obs: u32,
    /// Total book debt `B`.
    pub book_debt: f64,
    /// Total firm asset value `V`.
    pub firm_value: f64,
    /// Total payout per year `C`.
    pub payout: f64,
    /// Payout to debt holders per year `C_y`.
    pub debt_payout: f64,
}

/// Validated yearly series for one firm.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmSeries {
    firm_id: String,
    rows: Vec<YearRow>,
}

impl FirmSeries {
    pub fn new(firm_id: impl Into<String>, rows: Vec<YearRow>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: rows.len(),
            });
        }
        for (k, row) in rows.iter().enumerate() {
            if !row.year.is_finite() {
                return Err(Error::NonPositiveValue {
                    year: row.year,
                    column: "year",
                    value: row.year,
                });
            }
            if k > 0 && row.year <= rows[k - 1].year {
                return Err(Error::NonMonotoneYears {
                    previous: rows[k - 1].year,
                    year: row.year,
                });
            }
            if row.n_obs < MIN_OBSERVATIONS {
                return Err(Error::NObsTooSmall {
                    year: row.year,
                    n_obs: row.n_obs,
                });
            }
            let checks: [(&'static str, f64, bool); 6] = [
                ("sigma", row.sigma, row.sigma > 0.0),
                ("V", row.firm_value, row.firm_value > 0.0),
                ("B", row.book_debt, row.book_debt >= 0.0),
                ("r", row.rate, row.rate >= 0.0),
                ("C", row.payout, true),
                ("C_y", row.debt_payout, true),
            ];
            for (column, value, ok) in checks {
                if !ok || !value.is_finite() {
                    return Err(Error::NonPositiveValue {
                        year: row.year,
                        column,
                        value,
                    });
                }
            }
        }
        Ok(Self {
            firm_id: firm_id.into(),
            rows,
        })
    }

    pub fn firm_id(&self) -> &str {
        &self.firm_id
    }

    pub fn rows(&self) -> &[YearRow] {
        &self.rows
    }

    pub fn first_year(&self) -> f64 {
        self.rows[0].year
    }

    pub fn last_year(&self) -> f64 {
        self.rows[self.rows.len() - 1].year
    }

    /// Whether `[start, end]` lies inside the observed years.
    pub fn covers(&self, start: f64, end: f64) -> bool {
        start >= self.first_year() - TIME_EPS && end <= self.last_year() + TIME_EPS
    }

    /// Firm value at a calendar time, linear between yearly observations and
    /// held constant outside the observed range.
    pub fn value_at(&self, year: f64) -> f64 {
        interp_linear(&self.rows, year, |r| r.firm_value)
    }

    /// The row whose year interval `[year, next year)` contains `t`.
    pub fn row_at(&self, t: f64) -> &YearRow {
        let idx = self
            .rows
            .partition_point(|r| r.year <= t + TIME_EPS)
            .saturating_sub(1);
        &self.rows[idx]
    }

    /// Rows with years inside `[start, end]`.
    pub fn rows_in(&self, start: f64, end: f64) -> impl Iterator<Item = &YearRow> {
        self.rows
            .iter()
            .filter(move |r| r.year >= start - TIME_EPS && r.year <= end + TIME_EPS)
    }
}

fn interp_linear(rows: &[YearRow], t: f64, field: impl Fn(&YearRow) -> f64) -> f64 {
    let k = rows.partition_point(|r| r.year <= t);
    if k == 0 {
        return field(&rows[0]);
    }
    if k == rows.len() {
        return field(&rows[k - 1]);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let w = (t - a.year) / (b.year - a.year);
    field(a) + w * (field(b) - field(a))
}

/// Prescribed firm-value history on `[-L, 0]`, piecewise linear between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPath {
    delay: f64,
    /// `(s, V)` pairs with `s` ascending from `-delay` to `0`.
    knots: Vec<(f64, f64)>,
}

impl MemoryPath {
    /// Path from explicit knots. The first knot must sit at `-delay`, the last
    /// at `0`, abscissae strictly increasing and all values positive.
    pub fn from_knots(delay: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        if !(delay > 0.0) || knots.len() < 2 {
            return Err(Error::WindowNotCovered {
                start: -delay,
                end: 0.0,
            });
        }
        let first = knots[0].0;
        let last = knots[knots.len() - 1].0;
        if (first + delay).abs() > TIME_EPS * delay.max(1.0) || last.abs() > TIME_EPS {
            return Err(Error::WindowNotCovered {
                start: -delay,
                end: 0.0,
            });
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::BadParameters("memory knots must increase".into()));
            }
        }
        if let Some(&(s, v)) = knots.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveValue {
                year: s,
                column: "V",
                value: v,
            });
        }
        Ok(Self { delay, knots })
    }

    /// A path constant at `value` over `[-delay, 0]`.
    pub fn constant(delay: f64, value: f64) -> Result<Self> {
        Self::from_knots(delay, alloc::vec![(-delay, value), (0.0, value)])
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Value at `s`, held at the endpoint values outside `[-L, 0]`.
    pub fn eval(&self, s: f64) -> f64 {
        let k = self.knots.partition_point(|&(x, _)| x <= s);
        if k == 0 {
            return self.knots[0].1;
        }
        if k == self.knots.len() {
            return self.knots[k - 1].1;
        }
        let (x0, y0) = self.knots[k - 1];
        let (x1, y1) = self.knots[k];
        y0 + (s - x0) / (x1 - x0) * (y1 - y0)
    }

    /// Firm value at the time origin.
    pub fn at_origin(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }
}

/// Memory path over `[origin - delay, origin]`, with knots at every observed
/// year in the window and linear interpolation of `V` at the window edges.
pub fn build_memory_path(series: &FirmSeries, origin: f64, delay: f64) -> Result<MemoryPath> {
    let start = origin - delay;
    if !(delay > 0.0) || !series.covers(start, origin) {
        return Err(Error::WindowNotCovered { start, end: origin });
    }
    let mut knots = Vec::new();
    knots.push((-delay, series.value_at(start)));
    for row in series.rows() {
        if row.year > start + TIME_EPS && row.year < origin - TIME_EPS {
            knots.push((row.year - origin, row.firm_value));
        }
    }
    knots.push((0.0, series.value_at(origin)));
    MemoryPath::from_knots(delay, knots)
}
