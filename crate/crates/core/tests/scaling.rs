use aposteriori_core::counting::CountEvent;
use aposteriori_core::hilbert::{c, pauli, LinearMap, Operator};
use aposteriori_core::model::{DiffusiveChannel, MeasurementModel, TimeGrid};
use aposteriori_core::oracles::OscillatorParams;
use aposteriori_core::scaling::*;
use aposteriori_core::stats::fit_through_origin;

fn qubit(z: Operator, f: f64) -> MeasurementModel {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let h = pauli::sigma3().scale_real(0.4) + pauli::sigma1().scale_real(0.3);
    MeasurementModel::hamiltonian_only(h, grid).with_diffusive(DiffusiveChannel::new(z, c(f, 0.0)))
}

#[test]
fn liouvillian_is_invariant_under_scaling() {
    let base = qubit(pauli::sigma_minus().scale_real(0.9), 1.0);
    for eps in [1.0, 0.2, 0.025, 0.005] {
        let s = scale_counting_model(&base, eps).unwrap();
        let a = base.liouvillian(0).to_matrix();
        let b = s.counting.liouvillian(0).to_matrix();
        let diff = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "ε = {eps}: {diff}");
    }
}

#[test]
fn rejects_bad_epsilon_and_counting_bases() {
    let base = qubit(pauli::sigma_minus(), 1.0);
    assert!(scale_counting_model(&base, 0.0).is_err());
    assert!(scale_counting_model(&base, -0.1).is_err());
    let s = scale_counting_model(&base, 0.1).unwrap();
    assert!(scale_counting_model(&s.counting, 0.1).is_err());
}

#[test]
fn pure_noise_channel_has_flat_rate() {
    let base = qubit(Operator::zeros(2), 1.0);
    let eps = 0.1;
    let s = scale_counting_model(&base, eps).unwrap();
    let r = s.counting.counting[0].rate_operator(0);
    assert!(r.max_abs_diff(&Operator::identity(2).scale_real(1.0 / (eps * eps))) < 1e-10);
    assert!((s.expected_count_bound(0.0, 1.0) - 100.0).abs() < 1e-8);
}

#[test]
fn count_cap_is_enforced() {
    let base = qubit(pauli::sigma_minus(), 1.0);
    let s = scale_counting_model(&base, 1e-4).unwrap();
    assert!(s.check_count_cap(0.0, 1.0).is_err());
    let s = scale_counting_model(&base, 0.05).unwrap();
    assert!(s.check_count_cap(0.0, 1.0).is_ok());
}

#[test]
fn outputs_are_compensated_counts() {
    let base = qubit(pauli::sigma_minus(), 2.0);
    let s = scale_counting_model(&base, 0.1).unwrap();
    let ev = [CountEvent { t: 0.2, channel: 0, log_c: 0.0 }, CountEvent { t: 0.6, channel: 0, log_c: 0.0 }];
    let y = s.outputs(&ev, &[0.0, 0.5, 1.0]);
    assert!((y[0][0] - 0.0).abs() < 1e-15);
    assert!((y[1][0] - (0.1 - 4.0 * 0.5 / 0.1)).abs() < 1e-12);
    assert!((y[2][0] - (0.2 - 4.0 / 0.1)).abs() < 1e-12);
}

#[test]
fn large_epsilon_recovers_plain_counting() {
    let z = pauli::sigma_minus().scale_real(0.8);
    let base = qubit(z.clone(), 1.0);
    let s = scale_counting_model(&base, 1e6).unwrap();
    let k = &s.counting.counting[0].kraus_at(0)[0];
    assert!(k.max_abs_diff(&z) < 2e-6);
}

#[test]
fn generator_gap_vanishes_at_zero_k() {
    let base = qubit(pauli::sigma_minus(), 1.0);
    assert!(generator_gap(&base, 0.1, &[0.0], 0.5).unwrap() < 1e-12);
}

#[test]
fn generator_gap_is_linear_in_epsilon() {
    let base = qubit(pauli::sigma_minus(), 1.0);
    let eps = EPSILON_SWEEP;
    let gaps: Vec<f64> = eps.iter().map(|&e| generator_gap(&base, e, &[1.0], 0.5).unwrap()).collect();
    let (slope, r2) = fit_through_origin(&eps, &gaps);
    assert!(slope > 0.0);
    assert!(r2 > 0.999, "R² = {r2}, gaps = {gaps:?}");
    for w in gaps.windows(2) {
        assert!(w[1] < w[0]);
    }
    for (g, e) in gaps.iter().zip(&eps) {
        assert!(g / e < 2.0 * slope);
    }
}

#[test]
fn generator_gap_decreases_on_the_oscillator() {
    let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
    let p = OscillatorParams::new(1.0, c(0.2, 0.0), 0.2, 0.05, c(0.7, 0.0), grid).unwrap();
    let m = p.model(6).unwrap();
    let k = [0.6, -0.3];
    let g1 = generator_gap(&m, 0.05, &k, 0.5).unwrap();
    let g2 = generator_gap(&m, 0.1, &k, 0.5).unwrap();
    assert!(g1 < g2);
}
