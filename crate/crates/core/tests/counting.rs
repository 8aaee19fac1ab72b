use aposteriori_core::counting::*;
use aposteriori_core::hilbert::{c, pauli, trace_distance, PureState, StateMatrix, Tolerances};
use aposteriori_core::model::{CountingChannel, MeasurementModel, TimeGrid};
use aposteriori_core::oracles::{OscillatorParams, TwoLevelParams};
use aposteriori_core::rng::trajectory_rng;
use aposteriori_core::scaling::scale_counting_model;
use aposteriori_core::Error;

fn sup_gap(m: &MeasurementModel, rho0: &StateMatrix, grid: TimeGrid, seed: u64, trajectories: u64) -> (f64, usize) {
    let engine = CountingEngine::new(m, grid, CountingConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut jumps = 0;
    for i in 0..trajectories {
        let rec = engine.simulate(rho0, &mut trajectory_rng(seed, i)).unwrap();
        jumps += rec.total_counts();
        let (phis, cs) = linear_counting_evolve(m, rho0, &rec.realization(), 1.0, &grid).unwrap();
        for (s, (phi, c)) in rec.snapshots.iter().zip(phis.iter().zip(&cs)) {
            worst = worst.max(trace_distance(s.state.as_ref().unwrap(), &phi.scale_real(1.0 / c)));
            assert!((s.log_c - c.ln()).abs() < 1e-8 * c.ln().abs().max(1.0), "ln c at t = {}", s.t);
        }
    }
    (worst, jumps)
}

#[test]
fn linear_filter_matches_engine_on_two_level_atom() {
    let grid = TimeGrid::new(0.0, 5.0, 50).unwrap();
    let p = TwoLevelParams::new(0.8, 0.2, 0.3, 1.2).unwrap();
    let m = p.driven_model(grid, 1.1).unwrap();
    let (d, jumps) = sup_gap(&m, &StateMatrix::pure(&PureState::basis(2, 0)), grid, 4, 20);
    assert!(jumps > 20);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn linear_filter_matches_engine_on_scaled_oscillator() {
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let p = OscillatorParams::new(1.0, c(0.3, 0.0), 0.2, 0.05, c(0.7, 0.0), grid).unwrap();
    let s = scale_counting_model(&p.model(8).unwrap(), 0.5).unwrap();
    let rho0 = StateMatrix::pure(&PureState::coherent(8, c(0.4, 0.1)));
    let (d, jumps) = sup_gap(&s.counting, &rho0, grid, 6, 5);
    assert!(jumps > 0);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn jump_times_are_reproducible_and_grid_independent() {
    let p = TwoLevelParams::wigner(0.0, 0.4, 1.0).unwrap();
    let coarse = TimeGrid::new(0.0, 4.0, 4).unwrap();
    let fine = TimeGrid::new(0.0, 4.0, 64).unwrap();
    let m = p.model(coarse).unwrap();
    let rho0 = StateMatrix::pure(&PureState::basis(2, 0));
    let cfg = CountingConfig { record_states: false, ..Default::default() };
    let a = CountingEngine::new(&m, coarse, cfg).unwrap();
    let b = CountingEngine::new(&m, fine, cfg).unwrap();
    for i in 0..30 {
        let ra = a.simulate(&rho0, &mut trajectory_rng(12, i)).unwrap();
        let rb = b.simulate(&rho0, &mut trajectory_rng(12, i)).unwrap();
        let rc = a.simulate(&rho0, &mut trajectory_rng(12, i)).unwrap();
        assert_eq!(ra.events, rc.events);
        assert_eq!(ra.events.len(), rb.events.len());
        for (x, y) in ra.events.iter().zip(&rb.events) {
            assert!((x.t - y.t).abs() < 1e-8);
        }
    }
}

#[test]
fn pure_jump_unravelling_stays_pure() {
    let grid = TimeGrid::new(0.0, 10.0, 10_000).unwrap();
    let p = TwoLevelParams::wigner(0.5, 0.0, 1.0).unwrap();
    let m = p.driven_model(grid, 2.0).unwrap();
    let engine = CountingEngine::new(&m, grid, CountingConfig { snapshot_every: 10, ..Default::default() }).unwrap();
    let rec = engine.simulate(&StateMatrix::pure(&PureState::basis(2, 1)), &mut trajectory_rng(0, 0)).unwrap();
    assert!(rec.total_counts() > 3);
    for s in &rec.snapshots {
        let rho = s.state.as_ref().unwrap();
        let purity = aposteriori_core::hilbert::purity(rho);
        assert!(purity >= 1.0 - 1e-6, "purity {purity} at t = {}", s.t);
    }
}

#[test]
fn pure_counting_step_follows_the_density_step() {
    let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
    let p = TwoLevelParams::wigner(0.5, 0.0, 1.0).unwrap();
    let m = p.driven_model(grid, 1.3).unwrap();
    let tol = Tolerances::default();
    let psi = PureState::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
    let dt = 1e-4;
    // Both are first-order schemes: no-count steps agree to O(dt²), jump
    // steps only to O(dt).
    for (dn, bound) in [([0u8], 1e-6), ([1u8], 10.0 * dt)] {
        let a = pure_counting_step(&m, &psi, 0.0, dt, &dn, &tol).unwrap();
        let b = nonlinear_counting_step(&m, &StateMatrix::pure(&psi), 0.0, dt, &dn, &tol).unwrap();
        let d = trace_distance(&a.projector(), &b.op);
        assert!(d < bound, "dn = {dn:?}: {d}");
    }
}

#[test]
fn jump_into_dark_state_is_rejected() {
    let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
    let m = TwoLevelParams::wigner(0.0, 0.0, 1.0).unwrap().model(grid).unwrap();
    let ground = StateMatrix::pure(&PureState::basis(2, 1));
    assert!(matches!(jump_apply(&m, &ground, 0.3, 0, &Tolerances::default()), Err(Error::ZeroProbabilityJump { .. })));
    assert!(nonlinear_counting_step(&m, &ground, 0.0, 1e-3, &[1], &Tolerances::default()).is_err());
    assert!(nonlinear_counting_step(&m, &ground, 0.0, 1e-3, &[2], &Tolerances::default()).is_err());
}

#[test]
fn ground_state_never_counts() {
    let grid = TimeGrid::new(0.0, 3.0, 30).unwrap();
    let m = TwoLevelParams::wigner(0.0, 0.5, 1.0).unwrap().model(grid).unwrap();
    let engine = CountingEngine::new(&m, grid, CountingConfig::default()).unwrap();
    let rec = engine.simulate(&StateMatrix::pure(&PureState::basis(2, 1)), &mut trajectory_rng(0, 0)).unwrap();
    assert!(rec.events.is_empty());
    assert!(rec.snapshots.iter().all(|s| s.c() == 1.0));
}

#[test]
fn sampled_jump_matches_survival_target() {
    let grid = TimeGrid::new(0.0, 4.0, 8).unwrap();
    let p = TwoLevelParams::wigner(0.0, 0.0, 1.0).unwrap();
    let m = p.model(grid).unwrap();
    let rho = StateMatrix::pure(&PureState::basis(2, 0));
    let tol = Tolerances::default();
    let u = 0.3;
    let (t, j, post) = sample_jump(&m, &rho, 0.0, 4.0, u, &mut trajectory_rng(0, 0), &tol).unwrap().unwrap();
    assert_eq!(j, 0);
    assert!((t - (-u.ln())).abs() < 1e-8, "{t}");
    assert!(trace_distance(&post.op, &StateMatrix::pure(&PureState::basis(2, 1)).op) < 1e-12);
    assert!(sample_jump(&m, &rho, 0.0, 0.2, u, &mut trajectory_rng(0, 0), &tol).unwrap().is_none());
}

#[test]
fn multi_channel_compensator_is_bounded_by_peak_rates() {
    let grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
    let h = pauli::sigma1().scale_real(0.8);
    let m = MeasurementModel::hamiltonian_only(h, grid)
        .with_counting(CountingChannel::single(0, pauli::sigma_minus().scale_real(0.9)))
        .with_counting(CountingChannel::single(1, pauli::sigma_plus().scale_real(0.5)));
    let engine = CountingEngine::new(&m, grid, CountingConfig::default()).unwrap();
    let rho0 = StateMatrix::maximally_mixed(2);
    let rec = engine.simulate(&rho0, &mut trajectory_rng(1, 1)).unwrap();
    let last = rec.snapshots.last().unwrap();
    let total: f64 = last.compensator.iter().sum();
    assert!(last.compensator.iter().all(|&x| x > 0.0));
    // Peak rates are 0.81 and 0.25 over a span of 2.
    assert!(total < (0.81 + 0.25) * 2.0 + 1e-9);
    assert_eq!(last.counts.iter().sum::<u64>() as usize, rec.total_counts());
}

#[test]
fn realizations_are_validated() {
    assert!(CountRealization::new(0.0, vec![(0.5, 0), (0.5, 0)], 1.0).is_err());
    assert!(CountRealization::new(0.0, vec![(1.5, 0)], 1.0).is_err());
    let r = CountRealization::new(0.0, vec![(0.2, 1), (0.6, 0)], 1.0).unwrap();
    assert_eq!(r.counts_at(0.5, 2), vec![0, 1]);
}
