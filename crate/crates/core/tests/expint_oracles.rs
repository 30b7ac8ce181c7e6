use delaycredit_core::expint::{
    etd1_step, etd2_step, krylov_phi_action, phi_scalar, ExpIntConfig, PhiCombination,
};
use delaycredit_core::pde::DiscreteOperator;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `φ_0(tA) f + Σ t^l φ_l(tA) u_l` from the exponential of the full block
/// matrix `[[A, U], [0, J]]` built without any balancing.
fn oracle(op: &DiscreteOperator, f: &[f64], t: f64, us: &[Vec<f64>]) -> Vec<f64> {
    let n = op.len();
    let p = us.len();
    let dense = op.to_dense();
    let mut m = DMatrix::<f64>::zeros(n + p, n + p);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = t * dense[i * n + j];
        }
        for k in 0..p {
            m[(i, n + k)] = t * us[p - 1 - k][i];
        }
    }
    for k in 0..p.saturating_sub(1) {
        m[(n + k, n + k + 1)] = t;
    }
    let e = m.exp();
    let mut x = nalgebra::DVector::<f64>::zeros(n + p);
    for i in 0..n {
        x[i] = f[i];
    }
    if p > 0 {
        x[n + p - 1] = 1.0;
    }
    let y = e * x;
    y.iter().take(n).copied().collect()
}

fn random_tridiagonal(rng: &mut ChaCha8Rng, n: usize) -> DiscreteOperator {
    let sub: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..40.0)).collect();
    let sup: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..40.0)).collect();
    let diag: Vec<f64> = (0..n).map(|i| -(sub[i] + sup[i]) - rng.random_range(0.0..5.0)).collect();
    let source: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    DiscreteOperator::from_bands(sub, diag, sup, source)
}

fn rel_max(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn krylov_matches_dense_exponential_on_random_tridiagonals() {
    let config = ExpIntConfig::default();
    let mut worst = 0.0_f64;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let op = random_tridiagonal(&mut rng, 50);
        let f: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..2.0)).collect();
        let u2: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rng.random_range(0.01..0.2);
        let us = vec![op.source.clone(), u2];
        let got = krylov_phi_action(&op, &f, &PhiCombination::new(t, us.clone()), &config).unwrap();
        worst = worst.max(rel_max(&got, &oracle(&op, &f, t, &us)));
    }
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn pure_exponential_action_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let op = random_tridiagonal(&mut rng, 200);
    let f: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin() + 1.0).collect();
    let got = krylov_phi_action(&op, &f, &PhiCombination::new(0.05, vec![]), &ExpIntConfig::default()).unwrap();
    assert!(rel_max(&got, &oracle(&op, &f, 0.05, &[])) <= 1e-6);
}

#[test]
fn phi_values_match_matrix_exponential_of_scalars() {
    for &x in &[-30.0, -2.0, -0.5, 0.0, 0.4, 3.0] {
        // exp([[x, 1, 0], [0, 0, 1], [0, 0, 0]]) carries φ_1, φ_2 in its first row
        let m = DMatrix::from_row_slice(3, 3, &[x, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let e = m.exp();
        assert!((e[(0, 0)] - phi_scalar(0, x)).abs() <= 1e-12 * e[(0, 0)].max(1.0));
        assert!((e[(0, 1)] - phi_scalar(1, x)).abs() <= 1e-12);
        assert!((e[(0, 2)] - phi_scalar(2, x)).abs() <= 1e-12);
    }
}

/// `f' = λ f + sin(τ)`, solved exactly by variation of constants.
fn scalar_sin_error(steps: usize, order: usize) -> f64 {
    let lambda = -2.0;
    let end = 1.0;
    let dt = end / steps as f64;
    let config = ExpIntConfig {
        order,
        ..Default::default()
    };
    let mut f = vec![1.0];
    for n in 0..steps {
        let t0 = n as f64 * dt;
        let op = DiscreteOperator::from_bands(vec![0.0], vec![lambda], vec![0.0], vec![t0.sin()]);
        f = if order == 1 {
            etd1_step(&f, &op, dt, &config).unwrap()
        } else {
            etd2_step(&f, &op, &[(t0 + dt).sin()], dt, &config).unwrap()
        };
    }
    let k = 1.0 + lambda * lambda;
    let particular = |t: f64| (-lambda * t.sin() - t.cos()) / k;
    let exact = (1.0 - particular(0.0)) * (lambda * end).exp() + particular(end);
    (f[0] - exact).abs()
}

#[test]
fn etd2_is_second_order_for_time_dependent_source() {
    let ratio = scalar_sin_error(40, 2) / scalar_sin_error(80, 2);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    let ratio = scalar_sin_error(400, 1) / scalar_sin_error(800, 1);
    assert!((1.7..=2.3).contains(&ratio), "ETD1 ratio {ratio}");
}

#[test]
fn etd2_is_exact_for_linear_sources() {
    // f' = A f + b0 + s τ over one step, compared with the dense oracle
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let op = random_tridiagonal(&mut rng, 30);
    let slope: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dt = 0.1;
    let next: Vec<f64> = op.source.iter().zip(&slope).map(|(b, s)| b + s * dt).collect();
    let f: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
    let got = etd2_step(&f, &op, &next, dt, &ExpIntConfig::default()).unwrap();
    let want = oracle(&op, &f, dt, &[op.source.clone(), slope]);
    assert!(rel_max(&got, &want) <= 1e-12, "{}", rel_max(&got, &want));
}

#[test]
fn stiff_step_converges_through_halving() {
    // Δτ‖A‖ ≈ 190: a single m = 10 subspace cannot resolve it
    let n = 400;
    let h = 1.0 / n as f64;
    let c = 1.0 / (h * h);
    let op = DiscreteOperator::from_bands(vec![c; n], vec![-2.0 * c; n], vec![c; n], vec![1.0; n]);
    let f: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) * h * std::f64::consts::PI).sin()).collect();
    let start = std::time::Instant::now();
    let got = krylov_phi_action(&op, &f, &PhiCombination::new(3e-4, vec![op.source.clone()]), &ExpIntConfig::default());
    assert!(got.is_ok(), "{got:?}");
    assert!(start.elapsed().as_secs_f64() < 2.0);
    let want = oracle(&op, &f, 3e-4, core::slice::from_ref(&op.source));
    assert!(rel_max(&got.unwrap(), &want) <= 1e-6);
}
