use alloc::vec::Vec;

use super::{FirmSeries, TIME_EPS};
use crate::error::{Error, Result};

/// How the volatility function `g` is built from the memory window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VolKind {
    /// Piecewise linear interpolation of σ over memory time.
    TimeInterpLinear,
    /// Piecewise quadratic (three-knot Lagrange) interpolation over memory time.
    TimeInterpQuadratic,
    /// Natural cubic spline over memory time.
    TimeInterpSpline,
    /// Least-squares quadratic of σ against firm value.
    ValueFitQuadratic,
    /// Mean of the memory-window σ (Merton volatility).
    ConstantMean,
}

impl VolKind {
    /// Whether the model is evaluated on memory time rather than firm value.
    pub fn uses_time(self) -> bool {
        matches!(
            self,
            VolKind::TimeInterpLinear | VolKind::TimeInterpQuadratic | VolKind::TimeInterpSpline
        )
    }

    fn min_knots(self) -> usize {
        match self {
            VolKind::ConstantMean => 1,
            VolKind::TimeInterpLinear => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Knots(Vec<(f64, f64)>),
    Spline {
        knots: Vec<(f64, f64)>,
        second: Vec<f64>,
    },
    /// `p0 + p1 u + p2 u^2` with `u = (x - center) / scale`.
    Quadratic {
        p: [f64; 3],
        center: f64,
        scale: f64,
    },
    Constant(f64),
}

/// Bounded volatility function `g`.
///
/// Every evaluation is clamped to `[g_min, g_max]`, so `g` is bounded for any
/// argument even where an interpolant would extrapolate.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityModel {
    kind: VolKind,
    repr: Repr,
    clamp: (f64, f64),
}

impl VolatilityModel {
    /// `g ≡ sigma`, with the clamp collapsed onto that value.
    pub fn constant(sigma: f64) -> Self {
        Self {
            kind: VolKind::ConstantMean,
            repr: Repr::Constant(sigma),
            clamp: (sigma, sigma),
        }
    }

    pub fn kind(&self) -> VolKind {
        self.kind
    }

    pub fn clamp_range(&self) -> (f64, f64) {
        self.clamp
    }

    /// Replace the clamp interval.
    pub fn with_clamp(mut self, min: f64, max: f64) -> Result<Self> {
        if !(min <= max) || !(min >= 0.0) || !max.is_finite() {
            return Err(Error::BadParameters("clamp must satisfy 0 <= min <= max".into()));
        }
        self.clamp = (min, max);
        Ok(self)
    }

    /// Least-squares coefficients `(a, b, c)` of `a + b x + c x^2` for the
    /// value-fit kind.
    pub fn quadratic_coefficients(&self) -> Option<(f64, f64, f64)> {
        match self.repr {
            Repr::Quadratic { p, center, scale } => {
                let (mu, s) = (center, scale);
                let a = p[0] - p[1] * mu / s + p[2] * mu * mu / (s * s);
                let b = p[1] / s - 2.0 * p[2] * mu / (s * s);
                let c = p[2] / (s * s);
                Some((a, b, c))
            }
            _ => None,
        }
    }

    /// Evaluate on the model's own axis (memory time for time kinds, firm
    /// value otherwise), clamped.
    pub fn evaluate(&self, x: f64) -> f64 {
        let (lo, hi) = self.clamp;
        let raw = self.raw(x);
        if raw.is_nan() {
            return lo;
        }
        raw.clamp(lo, hi)
    }

    /// Whether the unclamped value at `x` falls outside the clamp interval.
    pub fn is_clamped(&self, x: f64) -> bool {
        let raw = self.raw(x);
        !(raw >= self.clamp.0 && raw <= self.clamp.1)
    }

    /// `g` at a lagged point, given both its model time and its firm value.
    pub fn at_lag(&self, lag_time: f64, lag_value: f64) -> f64 {
        self.evaluate(self.axis(lag_time, lag_value))
    }

    /// The argument [`evaluate`](Self::evaluate) expects for a lagged point.
    pub fn axis(&self, lag_time: f64, lag_value: f64) -> f64 {
        if self.kind.uses_time() {
            lag_time
        } else {
            lag_value
        }
    }

    fn raw(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Constant(c) => *c,
            Repr::Knots(k) if self.kind == VolKind::TimeInterpLinear => linear(k, x),
            Repr::Knots(k) => quadratic_lagrange(k, x),
            Repr::Spline { knots, second } => spline_eval(knots, second, x),
            Repr::Quadratic { p, center, scale } => {
                let u = (x - center) / scale;
                p[0] + u * (p[1] + u * p[2])
            }
        }
    }
}

/// Fit `g` from the σ observations in `[origin - delay, origin]`.
///
/// Time kinds place knots at `year - origin` (start of each year); the value
/// kind regresses σ on `V` of the same rows. The clamp is the observed σ range.
pub fn fit_volatility(
    series: &FirmSeries,
    origin: f64,
    delay: f64,
    kind: VolKind,
) -> Result<VolatilityModel> {
    let start = origin - delay;
    if !(delay > 0.0) || !series.covers(start, origin) {
        return Err(Error::WindowNotCovered { start, end: origin });
    }
    let rows: Vec<_> = series.rows_in(start, origin).collect();
    if rows.len() < kind.min_knots() {
        return Err(Error::TooFewKnots {
            needed: kind.min_knots(),
            got: rows.len(),
        });
    }
    let lo = rows.iter().map(|r| r.sigma).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.sigma).fold(f64::NEG_INFINITY, f64::max);
    let time_knots = || -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r.year - origin, r.sigma)).collect()
    };
    let repr = match kind {
        VolKind::ConstantMean => {
            Repr::Constant(rows.iter().map(|r| r.sigma).sum::<f64>() / rows.len() as f64)
        }
        VolKind::TimeInterpLinear | VolKind::TimeInterpQuadratic => Repr::Knots(time_knots()),
        VolKind::TimeInterpSpline => {
            let knots = time_knots();
            let second = natural_spline_second_derivatives(&knots);
            Repr::Spline { knots, second }
        }
        VolKind::ValueFitQuadratic => {
            let xs: Vec<f64> = rows.iter().map(|r| r.firm_value).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
            fit_quadratic(&xs, &ys)?
        }
    };
    Ok(VolatilityModel {
        kind,
        repr,
        clamp: (lo, hi),
    })
}

fn linear(knots: &[(f64, f64)], x: f64) -> f64 {
    let n = knots.len();
    let k = knots.partition_point(|&(t, _)| t <= x).clamp(1, n - 1);
    let (x0, y0) = knots[k - 1];
    let (x1, y1) = knots[k];
    if x == x0 {
        return y0;
    }
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

/// Three-knot Lagrange interpolation on the stencil nearest to `x`.
fn quadratic_lagrange(knots: &[(f64, f64)], x: f64) -> f64 {
    let n = knots.len();
    // interval [j, j+1] containing x (clamped to the ends)
    let j = knots
        .partition_point(|&(t, _)| t <= x)
        .saturating_sub(1)
        .min(n - 2);
    let first = if j == 0 {
        0
    } else if j + 2 >= n {
        n - 3
    } else if (x - knots[j - 1].0) <= (knots[j + 2].0 - x) {
        j - 1
    } else {
        j
    };
    let s = &knots[first..first + 3];
    let mut acc = 0.0;
    for a in 0..3 {
        let mut w = 1.0;
        for b in 0..3 {
            if a != b {
                w *= (x - s[b].0) / (s[a].0 - s[b].0);
            }
        }
        acc += w * s[a].1;
    }
    acc
}

fn natural_spline_second_derivatives(knots: &[(f64, f64)]) -> Vec<f64> {
    let n = knots.len();
    let mut m = alloc::vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let inner = n - 2;
    let mut c_prime = alloc::vec![0.0; inner];
    let mut d_prime = alloc::vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        let h0 = knots[i].0 - knots[i - 1].0;
        let h1 = knots[i + 1].0 - knots[i].0;
        let diag = 2.0 * (h0 + h1);
        let rhs = 6.0
            * ((knots[i + 1].1 - knots[i].1) / h1 - (knots[i].1 - knots[i - 1].1) / h0);
        let (sub, sup) = (h0, h1);
        if k == 0 {
            c_prime[k] = sup / diag;
            d_prime[k] = rhs / diag;
        } else {
            let denom = diag - sub * c_prime[k - 1];
            c_prime[k] = sup / denom;
            d_prime[k] = (rhs - sub * d_prime[k - 1]) / denom;
        }
    }
    for k in (0..inner).rev() {
        let next = if k + 1 < inner { m[k + 2] } else { 0.0 };
        m[k + 1] = d_prime[k] - c_prime[k] * next;
    }
    m
}

fn spline_eval(knots: &[(f64, f64)], m: &[f64], x: f64) -> f64 {
    let n = knots.len();
    let k = knots
        .partition_point(|&(t, _)| t <= x)
        .saturating_sub(1)
        .min(n - 2);
    let (x0, y0) = knots[k];
    let (x1, y1) = knots[k + 1];
    if x == x0 {
        return y0;
    }
    let h = x1 - x0;
    let a = (x1 - x) / h;
    let b = (x - x0) / h;
    a * y0 + b * y1 + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0
}

/// Least-squares quadratic through `(x, y)` by Householder QR on centred and
/// scaled abscissae.
fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<Repr> {
    let n = xs.len();
    let center = xs.iter().sum::<f64>() / n as f64;
    let scale = xs
        .iter()
        .map(|x| (x - center).abs())
        .fold(0.0_f64, f64::max);
    if !(scale > TIME_EPS * center.abs().max(1.0)) {
        return Err(Error::TooFewKnots { needed: 3, got: 1 });
    }
    // column-major n x 3 design matrix
    let mut a: Vec<f64> = Vec::with_capacity(3 * n);
    for p in 0..3 {
        a.extend(xs.iter().map(|&x| libm::pow((x - center) / scale, p as f64)));
    }
    let mut rhs = ys.to_vec();
    for col in 0..3 {
        let norm = libm::sqrt(
            (col..n)
                .map(|i| a[col * n + i] * a[col * n + i])
                .sum::<f64>(),
        );
        if norm == 0.0 {
            return Err(Error::TooFewKnots { needed: 3, got: col });
        }
        let alpha = if a[col * n + col] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (col..n).map(|i| a[col * n + i]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in col..3 {
            let dot: f64 = (col..n).map(|i| v[i - col] * a[c * n + i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in col..n {
                a[c * n + i] -= f * v[i - col];
            }
        }
        let dot: f64 = (col..n).map(|i| v[i - col] * rhs[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in col..n {
            rhs[i] -= f * v[i - col];
        }
    }
    let mut p = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for c in row + 1..3 {
            s -= a[c * n + row] * p[c];
        }
        let d = a[row * n + row];
        if d.abs() < 1e-13 {
            return Err(Error::TooFewKnots { needed: 3, got: row });
        }
        p[row] = s / d;
    }
    Ok(Repr::Quadratic { p, center, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::fixtures::{row, twenty_years};
    use crate::market_data::YearRow;

    const ALL: [VolKind; 5] = [
        VolKind::TimeInterpLinear,
        VolKind::TimeInterpQuadratic,
        VolKind::TimeInterpSpline,
        VolKind::ValueFitQuadratic,
        VolKind::ConstantMean,
    ];

    fn series_from(points: &[(f64, f64, f64)]) -> FirmSeries {
        let rows: Vec<YearRow> = points.iter().map(|&(y, s, v)| row(y, s, v)).collect();
        FirmSeries::new("t", rows).unwrap()
    }

    #[test]
    fn constant_sigma_for_every_kind() {
        let pts: Vec<_> = (0..12)
            .map(|k| (1991.0 + k as f64, 0.3, 50.0 + k as f64))
            .collect();
        let s = series_from(&pts);
        for kind in ALL {
            let g = fit_volatility(&s, 2000.5, 9.5, kind).unwrap();
            for x in [-20.0, -9.5, -3.3, 0.0, 5.0, 51.0, 1e4] {
                assert_eq!(g.evaluate(x), 0.3, "{kind:?} at {x}");
            }
        }
    }

    #[test]
    fn quadratic_interpolation_hits_knots() {
        let s = series_from(&[
            (2000.0, 0.2, 10.0),
            (2001.0, 0.3, 11.0),
            (2002.0, 0.6, 12.0),
        ]);
        let g = fit_volatility(&s, 2000.0 + 2.0, 2.0, VolKind::TimeInterpQuadratic).unwrap();
        // memory times -2, -1, 0 correspond to calendar 2000, 2001, 2002
        assert_eq!(g.evaluate(-1.0), 0.3);
        assert_eq!(g.evaluate(-2.0), 0.2);
        assert_eq!(g.evaluate(0.0), 0.6);
    }

    #[test]
    fn interpolating_kinds_reproduce_knots() {
        let s = twenty_years();
        for kind in [
            VolKind::TimeInterpLinear,
            VolKind::TimeInterpQuadratic,
            VolKind::TimeInterpSpline,
        ] {
            let g = fit_volatility(&s, 2000.5, 9.5, kind).unwrap();
            for r in s.rows_in(1991.0, 2000.5) {
                let got = g.evaluate(r.year - 2000.5);
                assert!((got - r.sigma).abs() <= 1e-12 * r.sigma, "{kind:?}");
            }
        }
    }

    #[test]
    fn too_few_knots() {
        let s = series_from(&[(2000.0, 0.2, 10.0), (2001.0, 0.3, 11.0), (2002.0, 0.6, 12.0)]);
        let err = fit_volatility(&s, 2001.0, 1.0, VolKind::TimeInterpSpline).unwrap_err();
        assert_eq!(err, Error::TooFewKnots { needed: 3, got: 2 });
        assert!(fit_volatility(&s, 2001.0, 1.0, VolKind::TimeInterpLinear).is_ok());
    }

    /// Normal-equations oracle: solve (X^T X) p = X^T y with Cramer's rule.
    fn normal_equations(xs: &[f64], ys: &[f64]) -> [f64; 3] {
        let mut m = [[0.0; 3]; 3];
        let mut r = [0.0; 3];
        for (&x, &y) in xs.iter().zip(ys) {
            let basis = [1.0, x, x * x];
            for i in 0..3 {
                r[i] += basis[i] * y;
                for j in 0..3 {
                    m[i][j] += basis[i] * basis[j];
                }
            }
        }
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(&m);
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut mk = m;
            for i in 0..3 {
                mk[i][k] = r[i];
            }
            *o = det(&mk) / d;
        }
        out
    }

    #[test]
    fn value_fit_recovers_exact_quadratic() {
        let (a, b, c) = (0.45, -0.004, 1.5e-5);
        let pts: Vec<_> = (0..10)
            .map(|k| {
                let v = 80.0 + 9.0 * k as f64 + (k * k) as f64;
                (1991.0 + k as f64, a + b * v + c * v * v, v)
            })
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.2).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let oracle = normal_equations(&xs, &ys);
        assert!((oracle[0] - a).abs() < 1e-8);
        let g = fit_volatility(&series_from(&pts), 2000.0, 9.0, VolKind::ValueFitQuadratic)
            .unwrap();
        let (fa, fb, fc) = g.quadratic_coefficients().unwrap();
        assert!((fa - oracle[0]).abs() < 1e-8, "{fa} vs {}", oracle[0]);
        assert!((fb - oracle[1]).abs() < 1e-8);
        assert!((fc - oracle[2]).abs() < 1e-8);
        assert!((fa - a).abs() < 1e-8 && (fb - b).abs() < 1e-8 && (fc - c).abs() < 1e-8);
    }

    #[test]
    fn bounded_everywhere() {
        let s = twenty_years();
        for kind in ALL {
            let g = fit_volatility(&s, 2000.5, 9.5, kind).unwrap();
            let (lo, hi) = g.clamp_range();
            for k in 0..10_000 {
                // memory times span 9.5 years and values about 30; sample 10x wider
                let x = if kind.uses_time() {
                    -50.0 + 95.0 * k as f64 / 9999.0
                } else {
                    -300.0 + 600.0 * k as f64 / 9999.0 + 115.0
                };
                let y = g.evaluate(x);
                assert!(y.is_finite() && y >= lo && y <= hi, "{kind:?} {x} -> {y}");
            }
        }
    }

    #[test]
    fn collapsed_clamp_is_constant() {
        let g = fit_volatility(&twenty_years(), 2000.5, 9.5, VolKind::ValueFitQuadratic)
            .unwrap()
            .with_clamp(0.25, 0.25)
            .unwrap();
        for v in [1.0, 100.0, 1e6] {
            assert_eq!(g.evaluate(v), 0.25);
        }
        let g = VolatilityModel::constant(0.3);
        assert_eq!(g.at_lag(-1.0, 7.0), 0.3);
        assert!(!g.is_clamped(3.0));
    }
}
