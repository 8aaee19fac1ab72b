use aposteriori_core::charfun::{propagate_characteristic, CharMode, TestFunction};
use aposteriori_core::hilbert::{c, hermitian_eigenvalues, pauli, LinearMap, Operator, PureState, StateMatrix, Tolerances};
use aposteriori_core::model::{master_evolve, CountingChannel, MeasurementModel, TimeGrid};
use aposteriori_core::oracles::{pi_flow, riccati_residual, riccati_stationary, OscillatorParams, TwoLevelParams};
use aposteriori_core::stats::Welford;
use proptest::prelude::*;

fn op(dim: usize, v: &[f64]) -> Operator {
    Operator::from_fn(dim, |i, j| c(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]))
}

fn density(v: &[f64]) -> StateMatrix {
    let a = op(2, v);
    let mut rho = a.matmul(&a.adjoint());
    rho.add_identity(c(1e-3, 0.0));
    let tr = rho.trace().re;
    StateMatrix::density(rho.scale_real(1.0 / tr), &Tolerances::default()).unwrap()
}

fn random_model(h: &[f64], k1: &[f64], k2: &[f64]) -> MeasurementModel {
    let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
    let hh = op(2, h).hermitian_part();
    MeasurementModel::hamiltonian_only(hh, grid)
        .with_dissipator(CountingChannel::single(0, op(2, k1)))
        .with_counting(CountingChannel::single(0, op(2, k2)))
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_reverses_products(a in entries(18), b in entries(18)) {
        let (x, y) = (op(3, &a), op(3, &b));
        prop_assert!(x.matmul(&y).adjoint().max_abs_diff(&y.adjoint().matmul(&x.adjoint())) < 1e-14);
        prop_assert!((x.matmul(&y).trace() - y.matmul(&x).trace()).norm() < 1e-13);
        prop_assert!(x.adjoint().adjoint().max_abs_diff(&x) == 0.0);
    }

    #[test]
    fn superoperator_matrix_matches_its_action(h in entries(8), k1 in entries(8), k2 in entries(8), r in entries(8)) {
        let m = random_model(&h, &k1, &k2);
        let l = m.liouvillian(0);
        let x = op(2, &r);
        let direct = l.apply(&x);
        let via = l.to_matrix().apply(&x);
        prop_assert!(direct.max_abs_diff(&via) < 1e-13);
    }

    #[test]
    fn liouvillian_is_trace_free_and_hermiticity_preserving(h in entries(8), k1 in entries(8), k2 in entries(8), r in entries(8)) {
        let m = random_model(&h, &k1, &k2);
        let x = op(2, &r).hermitian_part();
        let y = m.liouvillian(0).apply(&x);
        prop_assert!(y.trace().norm() < 1e-13);
        prop_assert!(y.hermiticity_deviation() < 1e-13);
    }

    #[test]
    fn master_evolution_keeps_states_physical(h in entries(8), k1 in entries(8), k2 in entries(8), r in entries(8)) {
        let m = random_model(&h, &k1, &k2);
        let rho0 = density(&r);
        for s in master_evolve(&m, &rho0, &m.grid, &Tolerances::default()).unwrap() {
            prop_assert!((s.op.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(hermitian_eigenvalues(&s.op)[0] > -1e-10);
        }
    }

    #[test]
    fn characteristic_operator_is_linear_in_the_state(
        h in entries(8), k1 in entries(8), k2 in entries(8),
        r1 in entries(8), r2 in entries(8), w in 0.0f64..1.0, k in -3.0f64..3.0,
    ) {
        let m = random_model(&h, &k1, &k2);
        let (a, b) = (density(&r1), density(&r2));
        let mut mix = a.op.scale_real(w);
        mix.axpy(c(1.0 - w, 0.0), &b.op);
        let mix = StateMatrix::unnormalized(mix);
        let tf = TestFunction::constant_real(m.grid, &[k]);
        let ga = propagate_characteristic(&m, &tf, &a, CharMode::Counting).unwrap();
        let gb = propagate_characteristic(&m, &tf, &b, CharMode::Counting).unwrap();
        let gm = propagate_characteristic(&m, &tf, &mix, CharMode::Counting).unwrap();
        for ((x, y), z) in ga.iter().zip(&gb).zip(&gm) {
            let expect = x.phi * w + y.phi * (1.0 - w);
            prop_assert!((z.phi - expect).norm() < 1e-12);
            prop_assert!(z.phi.norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn filtered_populations_decay_monotonically(
        lp in 0.0f64..2.0, lm in 0.0f64..2.0, l1 in 0.01f64..2.0,
        p1 in 0.0f64..1.0, t in 0.0f64..5.0, dt in 0.0f64..1.0,
    ) {
        let p = TwoLevelParams::new(0.0, lp, lm, l1).unwrap();
        let (a, b) = pi_flow(&p, 1.0 - p1, p1, t);
        let (a2, b2) = pi_flow(&p, 1.0 - p1, p1, t + dt);
        prop_assert!(a >= -1e-15 && b >= -1e-15);
        prop_assert!(a2 + b2 <= a + b + 1e-12);
    }

    #[test]
    fn stationary_riccati_solves_its_equation(
        e in 0.05f64..2.0, down in 0.0f64..2.0, up in 0.0f64..1.0,
    ) {
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        prop_assume!(e * e + down - up > 0.05);
        let p = OscillatorParams::new(1.0, c(0.0, 0.0), down, up, c(e, 0.0), grid).unwrap();
        let nu = riccati_stationary(&p).unwrap();
        prop_assert!(nu >= 0.0);
        prop_assert!(riccati_residual(&p, nu).abs() <= 1e-12 * (1.0 + up));
    }

    #[test]
    fn welford_merge_equals_sequential(xs in prop::collection::vec(-10.0f64..10.0, 2..60), split in 0usize..60) {
        let split = split.min(xs.len());
        let mut all = Welford::new();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Welford::new(), Welford::new());
        xs[..split].iter().for_each(|&x| a.push(x));
        xs[split..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        prop_assert!((a.mean() - all.mean()).abs() < 1e-12);
        prop_assert!((a.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn pure_states_have_unit_purity(v in entries(6)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let psi = PureState::new(vec![c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5])]).unwrap();
        let rho = StateMatrix::pure(&psi);
        prop_assert!((aposteriori_core::hilbert::purity(&rho.op) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sigma_algebra() {
    let (s1, s2, s3) = (pauli::sigma1(), pauli::sigma2(), pauli::sigma3());
    assert!(s1.matmul(&s2).max_abs_diff(&s3.scale(c(0.0, 1.0))) < 1e-15);
    let sp_sm = pauli::sigma_plus().matmul(&pauli::sigma_minus());
    assert!(sp_sm.max_abs_diff(&Operator::unit(2, 0, 0)) < 1e-15);
}
