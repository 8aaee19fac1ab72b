use aposteriori_core::charfun::*;
use aposteriori_core::counting::{CountingConfig, CountingEngine};
use aposteriori_core::diffusive::{DiffusiveConfig, DiffusiveEngine};
use aposteriori_core::hilbert::{c, pauli, PureState, StateMatrix};
use aposteriori_core::model::{master_evolve, DiffusiveChannel, MeasurementModel, TimeGrid};
use aposteriori_core::oracles::{wigner_characteristic, TwoLevelParams};
use aposteriori_core::rng::trajectory_rng;
use aposteriori_core::Error;

fn excited() -> StateMatrix {
    StateMatrix::pure(&PureState::basis(2, 0))
}

#[test]
fn wigner_characteristic_matches_quadrature_of_the_epds() {
    let p = TwoLevelParams::wigner(0.7, 0.6, 1.4).unwrap();
    let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
    let m = p.model(grid).unwrap();
    for k in [0.3, 1.0, -2.2, std::f64::consts::PI] {
        let tf = TestFunction::constant_real(grid, &[k]);
        let out = propagate_characteristic(&m, &tf, &excited(), CharMode::Counting).unwrap();
        for r in &out {
            let expect = wigner_characteristic(&p, 1.0, r.t, k).unwrap();
            assert!((r.phi - expect).norm() < 1e-12, "k = {k}, t = {}", r.t);
        }
    }
}

#[test]
fn wigner_characteristic_frozen_value() {
    // λ₋ = λ₁ = 1, t = 1, k = π/2: P₀ + i(1 − P₀) with P₀ = (1 + e^{-2})/2.
    let p = TwoLevelParams::wigner(0.0, 1.0, 1.0).unwrap();
    let z = wigner_characteristic(&p, 1.0, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
    assert!((z.re - 0.567_667_641_618_306_3).abs() < 1e-15);
    assert!((z.im - 0.432_332_358_381_693_7).abs() < 1e-15);
}

#[test]
fn phi_is_the_trace_and_bounded() {
    let p = TwoLevelParams::new(1.0, 0.3, 0.2, 0.9).unwrap();
    let grid = TimeGrid::new(0.0, 3.0, 30).unwrap();
    let m = p.driven_model(grid, 0.8).unwrap();
    let vals: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
    let tf = TestFunction::real(grid, vec![vals]).unwrap();
    let out = propagate_characteristic(&m, &tf, &excited(), CharMode::Counting).unwrap();
    for r in &out {
        assert!((r.phi - r.g_rho.as_ref().unwrap().trace()).norm() < 1e-12);
        assert!(r.phi.norm() <= 1.0 + 1e-12);
    }
}

#[test]
fn zero_test_function_reduces_to_master_equation() {
    let p = TwoLevelParams::new(1.0, 0.3, 0.2, 0.9).unwrap();
    let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
    let m = p.driven_model(grid, 1.2).unwrap();
    let tf = TestFunction::zero(grid, 1);
    let out = propagate_characteristic(&m, &tf, &excited(), CharMode::Counting).unwrap();
    let master = master_evolve(&m, &excited(), &grid, &Default::default()).unwrap();
    for (r, s) in out.iter().zip(&master) {
        assert!(r.g_rho.as_ref().unwrap().max_abs_diff(&s.op) < 1e-10);
        assert!((r.phi - c(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn mode_and_shape_are_checked() {
    let p = TwoLevelParams::new(1.0, 0.3, 0.2, 0.9).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let m = p.model(grid).unwrap();
    let two = TestFunction::zero(grid, 2);
    assert!(propagate_characteristic(&m, &two, &excited(), CharMode::Counting).is_err());
    let one = TestFunction::zero(grid, 1);
    assert!(propagate_characteristic(&m, &one, &excited(), CharMode::Diffusive).is_err());
    assert!(TestFunction::real(grid, vec![vec![0.0; 9]]).is_err());
    assert!(TestFunction::real(grid, vec![vec![f64::NAN; 10]]).is_err());
}

#[test]
fn complex_test_function_equals_its_real_pairs() {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let z = pauli::sigma_minus().scale_real(0.8);
    let m = MeasurementModel::hamiltonian_only(pauli::sigma3().scale_real(0.5), grid)
        .with_diffusive(DiffusiveChannel::new(z.clone(), c(1.0, 0.0)))
        .with_diffusive(DiffusiveChannel::new(z, c(0.0, 1.0)));
    let mut mc = m.clone();
    mc.complex_pairs = true;
    let kc = TestFunction::constant_complex(grid, &[c(0.4, -0.7)]);
    let kr = kc.to_pairs();
    let a = propagate_characteristic(&mc, &kc, &excited(), CharMode::Complexified).unwrap();
    let b = propagate_characteristic(&m, &kr, &excited(), CharMode::Diffusive).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.phi - y.phi).norm() < 1e-14);
    }
    assert!(propagate_characteristic(&m, &kc, &excited(), CharMode::Complexified).is_err());
}

#[test]
fn monte_carlo_of_zero_test_function_is_exact() {
    let p = TwoLevelParams::wigner(0.0, 1.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let m = p.model(grid).unwrap();
    let engine = CountingEngine::new(&m, grid, CountingConfig::default()).unwrap();
    let recs: Vec<_> = (0..50).map(|i| engine.simulate(&excited(), &mut trajectory_rng(3, i)).unwrap()).collect();
    let refs: Vec<_> = recs.iter().map(RecordRef::Counting).collect();
    let est = monte_carlo_characteristic(&refs, &TestFunction::zero(grid, 1)).unwrap();
    for r in est {
        assert_eq!(r.phi, c(1.0, 0.0));
        assert_eq!(r.stderr, Some(0.0));
    }
    assert!(matches!(monte_carlo_characteristic(&[], &TestFunction::zero(grid, 1)), Err(Error::EmptyEnsemble)));
}

#[test]
fn monte_carlo_agrees_with_propagation_on_wigner_atom() {
    let p = TwoLevelParams::wigner(0.0, 0.5, 1.5).unwrap();
    let grid = TimeGrid::new(0.0, 1.5, 6).unwrap();
    let m = p.model(grid).unwrap();
    let engine = CountingEngine::new(&m, grid, CountingConfig { record_states: false, ..Default::default() }).unwrap();
    let k = TestFunction::constant_real(grid, &[1.1]);
    let mut acc = CharAccumulator::new(grid.steps + 1);
    for i in 0..4000 {
        let rec = engine.simulate(&excited(), &mut trajectory_rng(17, i)).unwrap();
        acc.push(&counting_functional(&rec, &k)).unwrap();
    }
    let est = acc.finish(&grid).unwrap();
    let det = propagate_characteristic(&m, &k, &excited(), CharMode::Counting).unwrap();
    for (e, d) in est.iter().zip(&det) {
        let se = e.stderr.unwrap();
        assert!((e.phi - d.phi).norm() <= 3.0 * se.max(1e-12), "t = {}: {} vs {} (se {se})", e.t, e.phi, d.phi);
    }
}

#[test]
fn diffusive_functional_of_zero_is_one() {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let m = MeasurementModel::hamiltonian_only(pauli::sigma3(), grid).with_diffusive(DiffusiveChannel::new(pauli::sigma_minus(), c(1.0, 0.0)));
    let engine = DiffusiveEngine::new(&m, grid.refine(10), DiffusiveConfig::default()).unwrap();
    let (_, path) = engine.simulate(&excited(), &mut trajectory_rng(1, 0)).unwrap();
    let v = diffusive_functional(&path.unwrap(), &TestFunction::zero(grid, 1)).unwrap();
    assert!(v.iter().all(|z| *z == c(1.0, 0.0)));
}
