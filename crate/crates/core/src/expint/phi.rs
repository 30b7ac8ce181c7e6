/// Below this magnitude φ-functions are summed from their Taylor series.
pub const TAYLOR_SWITCH: f64 = 1.0;
const TAYLOR_TERMS: usize = 25;

/// `1 / k!`
pub fn inv_factorial(k: usize) -> f64 {
    let mut f = 1.0;
    for j in 2..=k {
        f /= j as f64;
    }
    f
}

/// Scalar φ-function: `φ_0(x) = e^x` and `φ_{l+1}(x) = (φ_l(x) - 1/l!) / x`.
///
/// Near zero the recurrence cancels catastrophically, so there the series
/// `φ_l(x) = Σ_k x^k / (k + l)!` is used instead.
pub fn phi_scalar(order: usize, x: f64) -> f64 {
    if x.abs() < TAYLOR_SWITCH {
        let mut acc = 0.0;
        for k in (0..TAYLOR_TERMS).rev() {
            acc = acc * x + inv_factorial(k + order);
        }
        return acc;
    }
    let mut phi = libm::exp(x);
    for l in 0..order {
        phi = (phi - inv_factorial(l)) / x;
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(phi_scalar(0, 0.0), 1.0);
        assert_eq!(phi_scalar(1, 0.0), 1.0);
        assert_eq!(phi_scalar(2, 0.0), 0.5);
        assert!((phi_scalar(3, 0.0) - 1.0 / 6.0).abs() < 1e-17);
    }

    #[test]
    fn recurrence_residual() {
        for &x in &[-5.0, -0.1, 0.3, 7.0] {
            for l in 0..=3 {
                let r = x * phi_scalar(l + 1, x) + inv_factorial(l) - phi_scalar(l, x);
                assert!(r.abs() <= 1e-12, "l={l} x={x} residual {r}");
            }
        }
    }

    #[test]
    fn continuous_across_switch() {
        for l in 0..5 {
            let below = phi_scalar(l, TAYLOR_SWITCH * (1.0 - 1e-12));
            let above = phi_scalar(l, TAYLOR_SWITCH * (1.0 + 1e-12));
            assert!((below - above).abs() <= 1e-10 * below, "{l}");
            let below = phi_scalar(l, -TAYLOR_SWITCH * (1.0 - 1e-12));
            let above = phi_scalar(l, -TAYLOR_SWITCH * (1.0 + 1e-12));
            assert!((below - above).abs() <= 1e-10 * below, "{l}");
        }
    }

    #[test]
    fn positive_everywhere() {
        for k in 0..=2000 {
            let x = -100.0 + 0.1 * k as f64;
            for l in 0..4 {
                assert!(phi_scalar(l, x) > 0.0, "l={l} x={x}");
            }
        }
    }
}
