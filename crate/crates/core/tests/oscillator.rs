use aposteriori_core::charfun::{propagate_characteristic, CharMode, TestFunction};
use aposteriori_core::hilbert::{c, PureState, StateMatrix};
use aposteriori_core::model::{master_evolve, TimeGrid};
use aposteriori_core::oracles::*;
use aposteriori_core::C64;

fn params(lambda_up: f64) -> OscillatorParams {
    let grid = TimeGrid::new(0.0, 4.0, 40).unwrap();
    OscillatorParams::new(1.3, c(0.4, -0.2), 0.15, lambda_up, c(0.6, 0.3), grid).unwrap()
}

#[test]
fn stationary_riccati_golden_ratio_case() {
    // Γ = 1, |η|² = ½, λ↑ = ½ ⇒ ν∞ = (√5 − 1)/2.
    let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
    let p = OscillatorParams::new(1.0, c(0.0, 0.0), 0.5, 0.5, c(0.5f64.sqrt(), 0.0), grid).unwrap();
    assert!((p.gamma() - 1.0).abs() < 1e-15);
    let nu = riccati_stationary(&p).unwrap();
    assert!((nu - 0.618_033_988_749_894_8).abs() < 1e-15);
    assert!(riccati_residual(&p, nu).abs() < 1e-15);
}

#[test]
fn stationary_riccati_degenerate_cases() {
    let p = params(0.0);
    assert_eq!(riccati_stationary(&p).unwrap(), 0.0);
    let mut q = params(0.1);
    q.eta = c(0.0, 0.0);
    q.lambda_down = 1.0;
    assert!(riccati_stationary(&q).is_err());
}

#[test]
fn stationary_value_sits_below_the_apriori_variance() {
    // Observation can only shrink the posterior variance below the a-priori 2λ↑/Γ.
    let p = params(0.2);
    let nu = riccati_stationary(&p).unwrap();
    assert!(nu > 0.0 && nu < 2.0 * p.lambda_up / p.gamma());
}

#[test]
fn zero_initial_squeezing_stays_zero() {
    let p = params(0.1);
    let grid = TimeGrid::new(0.0, 3.0, 30).unwrap();
    for (mu, nu) in riccati_covariance_evolve(&p, c(0.0, 0.0), 0.4, &grid) {
        assert_eq!(mu, c(0.0, 0.0));
        assert!(nu >= 0.0);
    }
    let pure = riccati_covariance_evolve(&params(0.0), c(0.0, 0.0), 0.0, &grid);
    assert!(pure.iter().all(|&(_, nu)| nu == 0.0));
}

#[test]
fn covariance_relaxes_to_stationary_value() {
    let p = params(0.3);
    let t = 20.0 / p.gamma();
    let grid = TimeGrid::new(0.0, t, 200).unwrap();
    let path = riccati_covariance_evolve(&p, c(0.0, 0.0), 0.0, &grid);
    let nu_inf = riccati_stationary(&p).unwrap();
    assert!((path.last().unwrap().1 - nu_inf).abs() < 1e-8);
}

#[test]
fn zero_test_function_gives_apriori_moments() {
    let p = params(0.25);
    let grid = TimeGrid::new(0.0, 3.0, 30).unwrap();
    let init = GaussianPosterior { mean: c(0.5, 0.2), mu: c(0.1, -0.05), nu: 0.3 };
    let k = TestFunction::constant_complex(grid, &[c(0.0, 0.0)]);
    let out = oscillator_characteristic(&p, &k, &init).unwrap();
    for (i, &t) in out.times.iter().enumerate() {
        assert!((out.phi[i] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((out.f[i] - apriori_number_variance(&p, init.nu, t)).abs() < 1e-9);
        assert!((out.d[i] - apriori_squeezing(&p, init.mu, t)).norm() < 1e-9);
        assert!((out.b[i] - apriori_mean(&p, init.mean, t)).norm() < 1e-9);
        assert!((out.c[i] - out.b[i]).norm() < 1e-14);
    }
}

#[test]
fn undriven_mean_decays() {
    let grid = TimeGrid::new(0.0, 2.0, 2).unwrap();
    let p = OscillatorParams::new(0.9, c(0.0, 0.0), 0.1, 0.05, c(0.7, 0.0), grid).unwrap();
    let a0 = c(1.0, -0.5);
    let t = 1.7;
    let expect = (-c(0.5 * p.gamma(), p.omega) * t).exp() * a0;
    assert!((apriori_mean(&p, a0, t) - expect).norm() < 1e-15);
}

#[test]
fn covariance_tends_to_stationary_form() {
    let p = params(0.25);
    let (s, s2) = (40.0, 39.3);
    let a = delta1_smooth(&p, 0.9, s, s2);
    let b = delta1_stationary(&p, s, s2);
    assert!((a - b).norm() < 1e-12);
    let a = delta1_smooth(&p, 0.9, s2, s);
    let b = delta1_stationary(&p, s2, s);
    assert!((a - b).norm() < 1e-12);
    assert!(delta2(&p, c(0.3, 0.1), s, s2).norm() < 1e-12);
}

#[test]
fn coefficient_ode_agrees_with_covariance_quadrature() {
    let p = params(0.2);
    let init = GaussianPosterior { mean: c(0.3, 0.1), mu: c(0.05, 0.02), nu: 0.2 };
    let kappa = |n: usize| {
        let grid = TimeGrid::new(0.0, 2.0, n).unwrap();
        let vals = (0..n).map(|i| {
            let s = (i as f64 + 0.5) * 2.0 / n as f64;
            c(0.4 * (1.3 * s).sin(), 0.2 * s)
        });
        TestFunction::complex(grid, vec![vals.collect()]).unwrap()
    };
    let mut errs = Vec::new();
    for n in [50, 100, 200] {
        let k = kappa(n);
        let ode = oscillator_characteristic(&p, &k, &init).unwrap();
        let quad = h_quadrature(&p, &k, &init).unwrap();
        errs.push((ode.h.last().unwrap() - quad.last().unwrap()).norm());
    }
    // Midpoint quadrature converges at second order to the ODE solution.
    assert!(errs[2] < 2e-4, "{errs:?}");
    assert!(errs[0] / errs[2] > 10.0, "{errs:?}");
}

#[test]
fn gaussian_closed_form_matches_truncated_propagation() {
    let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
    let p = OscillatorParams::new(1.1, c(0.3, 0.1), 0.2, 0.0, c(0.8, 0.0), grid).unwrap();
    let m = p.model(16).unwrap();
    let alpha0 = c(0.4, -0.2);
    let rho0 = StateMatrix::pure(&PureState::coherent(16, alpha0));
    let kappa = c(0.15, -0.1);
    let k_oracle = TestFunction::constant_complex(grid, &[kappa]);
    let k_engine = TestFunction::constant_complex(grid, &[p.engine_kappa(kappa)]);
    let oracle = oscillator_characteristic(&p, &k_oracle, &GaussianPosterior::coherent(alpha0)).unwrap();
    let engine = propagate_characteristic(&m, &k_engine, &rho0, CharMode::Complexified).unwrap();
    for (r, phi) in engine.iter().zip(&oracle.phi) {
        assert!((r.phi - phi).norm() < 1e-6, "t = {}: {} vs {}", r.t, r.phi, phi);
    }
}

#[test]
fn zero_test_function_reproduces_master_equation() {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let p = OscillatorParams::new(0.7, c(0.2, 0.0), 0.3, 0.1, c(0.5, 0.0), grid).unwrap();
    let m = p.model(10).unwrap();
    let rho0 = StateMatrix::pure(&PureState::coherent(10, c(0.3, 0.0)));
    let k = TestFunction::constant_complex(grid, &[C64::new(0.0, 0.0)]);
    let g = propagate_characteristic(&m, &k, &rho0, CharMode::Complexified).unwrap();
    let master = master_evolve(&m, &rho0, &grid, &Default::default()).unwrap();
    for (r, s) in g.iter().zip(&master) {
        assert!(r.g_rho.as_ref().unwrap().max_abs_diff(&s.op) < 1e-10);
    }
}
