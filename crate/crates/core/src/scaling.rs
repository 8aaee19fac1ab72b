//! Counting-to-diffusion limit: the ε-scaled counting model with Kraus
//! factors Z_j + f_j/ε, its rescaled outputs εN_j − |f_j|²t/ε, and the
//! distance between the two characteristic-operator generators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::charfun::{characteristic_generator, propagate_characteristic, CharMode, TestFunction};
use crate::counting::CountEvent;
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigenvalues, spectral_norm, LinearMap, Operator, StateMatrix, Superop};
use crate::model::{CountingChannel, MeasurementModel, Mode, Schedule, TimeGrid};

/// Largest expected number of counts per trajectory the harness accepts.
pub const COUNT_CAP: f64 = 1e6;

/// Default ε sweep.
pub const EPSILON_SWEEP: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// A diffusive model together with its ε-scaled counting counterpart.
#[derive(Clone, Debug)]
pub struct ScaledModel {
    pub base: MeasurementModel,
    pub epsilon: f64,
    pub counting: MeasurementModel,
}

/// Builds the counting model with Kraus factors Z_j + f_j/ε and Hamiltonian
/// H − (i/2ε)Σ(f_j*Z_j − f_jZ_j†), and checks that its Liouvillian equals
/// the base one on every schedule segment.
pub fn scale_counting_model(base: &MeasurementModel, epsilon: f64) -> Result<ScaledModel> {
    base.validate()?;
    if base.diffusive.is_empty() || !base.counting.is_empty() {
        return Err(Error::ModeMismatch { required: "diffusive", found: Mode::Counting.name() });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {epsilon}")));
    }
    let steps = base.grid.steps;
    let piecewise = !base.is_autonomous();
    let cells: Vec<usize> = if piecewise { (0..steps).collect() } else { vec![0] };
    let wrap = |v: Vec<Operator>| if piecewise { Schedule::Piecewise(v) } else { Schedule::Constant(v.into_iter().next().expect("one cell")) };

    let shift = |cell: usize| {
        let mut h = base.hamiltonian_at(cell).clone();
        for ch in &base.diffusive {
            let f = ch.f_at(cell);
            let x = ch.z.scale(f.conj()) - ch.z.adjoint().scale(f);
            h.axpy(C64::new(0.0, -0.5 / epsilon), &x);
        }
        h.hermitize_in_place();
        h
    };
    let mut m = base.clone();
    m.hamiltonian = wrap(cells.iter().map(|&c| shift(c)).collect());
    m.diffusive = Vec::new();
    m.complex_pairs = false;
    for (j, ch) in base.diffusive.iter().enumerate() {
        let kraus: Vec<Vec<Operator>> = cells
            .iter()
            .map(|&c| {
                let mut k = ch.z.clone();
                k.add_identity(ch.f_at(c) / epsilon);
                vec![k]
            })
            .collect();
        let kraus = if piecewise { Schedule::Piecewise(kraus) } else { Schedule::Constant(kraus.into_iter().next().expect("one cell")) };
        m.counting.push(CountingChannel { kraus, label: j });
    }
    m.validate()?;

    for &c in &cells {
        let a = base.liouvillian(c).to_matrix();
        let b = m.liouvillian(c).to_matrix();
        let scale = a.as_slice().iter().map(|z| z.norm()).fold(1.0, f64::max);
        let diff = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        if diff > 1e-10 * scale {
            return Err(Error::Contract(format!("scaled Liouvillian differs from the base by {diff:.3e} on cell {c}")));
        }
    }
    Ok(ScaledModel { base: base.clone(), epsilon, counting: m })
}

impl ScaledModel {
    /// Upper bound on the expected number of counts in [t0, t1]:
    /// ∫ Σ_j λ_max(R_j) dt.
    pub fn expected_count_bound(&self, t0: f64, t1: f64) -> f64 {
        let grid = &self.counting.grid;
        let mut total = 0.0;
        let mut t = t0;
        while t < t1 {
            let cell = grid.cell_of(t);
            let end = if self.counting.is_autonomous() { t1 } else { grid.time(cell + 1).min(t1) };
            let end = if end <= t { t1 } else { end };
            let rate: f64 = self
                .counting
                .counting
                .iter()
                .map(|ch| hermitian_eigenvalues(&ch.rate_operator(cell)).last().copied().unwrap_or(0.0))
                .sum();
            total += rate * (end - t);
            t = end;
        }
        total
    }

    /// Errors with `CountCap` when the bound exceeds 10⁶.
    pub fn check_count_cap(&self, t0: f64, t1: f64) -> Result<f64> {
        let e = self.expected_count_bound(t0, t1);
        if e > COUNT_CAP {
            return Err(Error::CountCap { expected: e, cap: COUNT_CAP });
        }
        Ok(e)
    }

    /// ∫_{t0}^{t} |f_j|² ds for every channel.
    fn f2_integral(&self, t: f64) -> Vec<f64> {
        let grid = &self.base.grid;
        let mut acc = vec![0.0; self.base.diffusive.len()];
        let mut s = grid.t0;
        while s < t {
            let cell = grid.cell_of(s);
            let end = if self.base.is_autonomous() { t } else { grid.time(cell + 1).min(t) };
            let end = if end <= s { t } else { end };
            for (a, ch) in acc.iter_mut().zip(&self.base.diffusive) {
                *a += ch.f_at(cell).norm_sqr() * (end - s);
            }
            s = end;
        }
        acc
    }

    /// Y^ε_j(t) = εN_j(t) − ∫|f_j|²ds/ε at each of `times`.
    pub fn outputs(&self, events: &[CountEvent], times: &[f64]) -> Vec<Vec<f64>> {
        let nch = self.base.diffusive.len();
        times
            .iter()
            .map(|&t| {
                let mut n = vec![0.0; nch];
                for e in events.iter().filter(|e| e.t <= t) {
                    n[e.channel] += 1.0;
                }
                let f2 = self.f2_integral(t);
                n.iter().zip(&f2).map(|(nj, fj)| self.epsilon * nj - fj / self.epsilon).collect()
            })
            .collect()
    }
}

/// 𝒦^ε(k): the counting generator of the scaled model at εk, shifted by
/// −(i/ε)Σk_j|f_j|².
pub fn epsilon_generator(scaled: &ScaledModel, cell: usize, k: &[f64]) -> Result<Superop> {
    let eps = scaled.epsilon;
    let ek: Vec<f64> = k.iter().map(|x| eps * x).collect();
    let mut g = characteristic_generator(&scaled.counting, cell, &ek, CharMode::Counting)?;
    let shift: f64 = k.iter().zip(&scaled.base.diffusive).map(|(kj, ch)| kj * ch.f_at(cell).norm_sqr()).sum();
    g.add_scalar(C64::new(0.0, -shift / eps));
    Ok(g)
}

/// Spectral norm of 𝒦^ε_t(k) − 𝒦⁰_t(k) on the dim²-dimensional
/// representation.
pub fn generator_gap(base: &MeasurementModel, epsilon: f64, k: &[f64], t: f64) -> Result<f64> {
    let scaled = scale_counting_model(base, epsilon)?;
    let cell = base.cell(t);
    let ge = epsilon_generator(&scaled, cell, k)?.to_matrix();
    let g0 = characteristic_generator(base, cell, k, CharMode::Diffusive)?.to_matrix();
    let d = ge.sub(&g0);
    let nn = d.size();
    Ok(spectral_norm(nn, nn, d.as_slice()))
}

/// Mean and variance of each diffusive output Y_j at every grid time,
/// read off the characteristic function by central differences in k_j with
/// step `h`.
pub fn predicted_output_moments(base: &MeasurementModel, rho0: &StateMatrix, grid: TimeGrid, h: f64) -> Result<Vec<Vec<(f64, f64)>>> {
    base.require(Mode::Diffusive)?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("difference step must be positive, got {h}")));
    }
    let nch = base.diffusive.len();
    let mut out = vec![vec![(0.0, 0.0); nch]; grid.steps + 1];
    for j in 0..nch {
        let mut k = vec![0.0; nch];
        k[j] = h;
        let plus = propagate_characteristic(base, &TestFunction::constant_real(grid, &k), rho0, CharMode::Diffusive)?;
        k[j] = -h;
        let minus = propagate_characteristic(base, &TestFunction::constant_real(grid, &k), rho0, CharMode::Diffusive)?;
        for ((o, p), m) in out.iter_mut().zip(&plus).zip(&minus) {
            let (lp, lm) = (p.phi.ln(), m.phi.ln());
            o[j] = ((lp - lm).im / (2.0 * h), -(lp + lm).re / (h * h));
        }
    }
    Ok(out)
}
