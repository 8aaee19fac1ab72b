//! Characteristic operators 𝒢_t[k] and functionals Φ_t[k] = Tr 𝒢_t[k]ρ.
//!
//! Test functions are piecewise-constant on their own grid. Deterministic
//! propagation freezes the generator 𝒦(k) on every cell and applies its
//! exponential; Monte Carlo estimation averages V_t[k] over records.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::counting::CountingRecord;
use crate::diffusive::OutputPath;
use crate::error::{Error, Result};
use crate::hilbert::{expm_propagate, Operator, StateMatrix, Superop};
use crate::model::{MeasurementModel, Mode, TimeGrid};
use crate::stats::ComplexWelford;

/// Bound on |Φ| beyond which a result is rejected.
pub const PHI_SLACK: f64 = 1e-6;

/// Which generator family to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharMode {
    /// ℒ + Σ(e^{ik_j} − 1)𝒥_j.
    Counting,
    /// ℒ + Σ{−½k_j²|f_j|² + ik_j(f_j*Z_j· + f_j·Z_j†)}.
    Diffusive,
    /// Complex κ per channel pair, ℒ + Σ{−½|κ|² + i(κ*Z· + κ·Z†)}.
    Complexified,
}

/// k_j(s) sampled per cell of `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    grid: TimeGrid,
    values: Vec<Vec<C64>>,
    complex: bool,
}

impl TestFunction {
    /// Real test function, `values[j][cell]`.
    pub fn real(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        let values = values.into_iter().map(|v| v.into_iter().map(|x| C64::new(x, 0.0)).collect()).collect();
        Self::build(grid, values, false)
    }

    /// Complex test function κ_j(s), one entry per channel pair.
    pub fn complex(grid: TimeGrid, values: Vec<Vec<C64>>) -> Result<Self> {
        Self::build(grid, values, true)
    }

    pub fn constant_real(grid: TimeGrid, k: &[f64]) -> Self {
        let values = k.iter().map(|&x| vec![C64::new(x, 0.0); grid.steps]).collect();
        Self { grid, values, complex: false }
    }

    pub fn constant_complex(grid: TimeGrid, k: &[C64]) -> Self {
        let values = k.iter().map(|&x| vec![x; grid.steps]).collect();
        Self { grid, values, complex: true }
    }

    pub fn zero(grid: TimeGrid, channels: usize) -> Self {
        Self::constant_real(grid, &vec![0.0; channels])
    }

    fn build(grid: TimeGrid, values: Vec<Vec<C64>>, complex: bool) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if v.len() != grid.steps {
                return Err(Error::InvalidParameter(format!(
                    "test function channel {j} has {} samples for {} cells",
                    v.len(),
                    grid.steps
                )));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("test function channel {j} is not finite")));
            }
            if !complex && v.iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidParameter(format!("real test function channel {j} has imaginary part")));
            }
        }
        Ok(Self { grid, values, complex })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn value(&self, channel: usize, cell: usize) -> C64 {
        self.values[channel][cell]
    }

    /// Real channel values on `cell`; a complex κ expands to (Re κ, Im κ).
    pub fn real_values_at(&self, cell: usize) -> Vec<f64> {
        if self.complex {
            self.values.iter().flat_map(|v| [v[cell].re, v[cell].im]).collect()
        } else {
            self.values.iter().map(|v| v[cell].re).collect()
        }
    }

    /// Same values as real channel pairs.
    pub fn to_pairs(&self) -> Self {
        if !self.complex {
            return self.clone();
        }
        let mut values = Vec::with_capacity(2 * self.values.len());
        for v in &self.values {
            values.push(v.iter().map(|z| C64::new(z.re, 0.0)).collect());
            values.push(v.iter().map(|z| C64::new(z.im, 0.0)).collect());
        }
        Self { grid: self.grid, values, complex: false }
    }

    fn is_zero_at(&self, cell: usize) -> bool {
        self.values.iter().all(|v| v[cell] == C64::new(0.0, 0.0))
    }
}

/// Φ_t[k] at one grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicResult {
    pub t: f64,
    pub phi: C64,
    pub g_rho: Option<Operator>,
    pub stderr: Option<f64>,
}

/// 𝒦_t(k) on model cell `cell` for real channel values `k`.
pub fn characteristic_generator(m: &MeasurementModel, cell: usize, k: &[f64], mode: CharMode) -> Result<Superop> {
    let mut s = m.liouvillian(cell);
    match mode {
        CharMode::Counting => {
            m.require(Mode::Counting)?;
            if k.len() != m.counting.len() {
                return Err(Error::DimensionMismatch { expected: m.counting.len(), found: k.len() });
            }
            for (ch, &kj) in m.counting.iter().zip(k) {
                if kj == 0.0 {
                    continue;
                }
                let w = C64::new(libm::cos(kj) - 1.0, libm::sin(kj));
                for op in ch.kraus_at(cell) {
                    s.add_sandwich(w, op, op);
                }
            }
        }
        CharMode::Diffusive | CharMode::Complexified => {
            m.require(Mode::Diffusive)?;
            if mode == CharMode::Complexified && !m.complex_pairs {
                return Err(Error::ModeMismatch { required: "complexified", found: "diffusive" });
            }
            if k.len() != m.diffusive.len() {
                return Err(Error::DimensionMismatch { expected: m.diffusive.len(), found: k.len() });
            }
            for (ch, &kj) in m.diffusive.iter().zip(k) {
                if kj == 0.0 {
                    continue;
                }
                let f = ch.f_at(cell);
                s.add_scalar(C64::new(-0.5 * kj * kj * f.norm_sqr(), 0.0));
                let i_k = C64::new(0.0, kj);
                s.add_left(i_k * f.conj(), &ch.z);
                s.add_right(i_k * f, &ch.z.adjoint());
            }
        }
    }
    Ok(s)
}

fn check_mode(m: &MeasurementModel, k: &TestFunction, mode: CharMode) -> Result<()> {
    let expected = match mode {
        CharMode::Counting => m.counting.len(),
        CharMode::Diffusive => m.diffusive.len(),
        CharMode::Complexified => m.diffusive.len() / 2,
    };
    if k.channels() != expected {
        return Err(Error::DimensionMismatch { expected, found: k.channels() });
    }
    if k.is_complex() != (mode == CharMode::Complexified) {
        return Err(Error::InvalidParameter("complex test functions go with complexified mode only".into()));
    }
    Ok(())
}

/// 𝒢_t[k]ρ0 and Φ_t[k] at every point of the test-function grid.
pub fn propagate_characteristic(
    m: &MeasurementModel,
    k: &TestFunction,
    rho0: &StateMatrix,
    mode: CharMode,
) -> Result<Vec<CharacteristicResult>> {
    m.validate()?;
    check_mode(m, k, mode)?;
    rho0.op.check_dim(m.dim)?;
    let grid = k.grid();
    let mut cache: Vec<(usize, Vec<u64>, u64, crate::hilbert::Propagator)> = Vec::new();
    let mut x = rho0.op.clone();
    let mut out = Vec::with_capacity(grid.steps + 1);
    let push = |out: &mut Vec<CharacteristicResult>, t: f64, x: &Operator| -> Result<()> {
        let phi = x.trace();
        if !(phi.norm() <= 1.0 + PHI_SLACK) {
            return Err(Error::Contract(format!("|Φ| = {} exceeds 1 at t = {t}", phi.norm())));
        }
        out.push(CharacteristicResult { t, phi, g_rho: Some(x.clone()), stderr: None });
        Ok(())
    };
    push(&mut out, grid.t0, &x)?;
    for i in 0..grid.steps {
        let kv = k.real_values_at(i);
        let key: Vec<u64> = kv.iter().map(|v| v.to_bits()).collect();
        let (ta, tb) = (grid.time(i), grid.time(i + 1));
        let mut t = ta;
        while t < tb {
            let cell = m.cell(t);
            let end = m.grid.time(cell + 1).min(tb);
            let end = if end <= t { tb } else { end };
            let dt = end - t;
            let seg = m.segment(cell);
            let pos = cache.iter().position(|(s, kk, d, _)| *s == seg && *kk == key && *d == dt.to_bits());
            let pos = match pos {
                Some(p) => p,
                None => {
                    let g = characteristic_generator(m, cell, &kv, mode)?;
                    if cache.len() >= 64 {
                        cache.remove(0);
                    }
                    cache.push((seg, key.clone(), dt.to_bits(), crate::hilbert::Propagator::new(&g, dt)?));
                    cache.len() - 1
                }
            };
            x = cache[pos].3.apply(&x);
            t = end;
        }
        if !x.is_finite() {
            return Err(Error::NumericalOverflow { context: "characteristic propagation", t: tb });
        }
        push(&mut out, tb, &x)?;
    }
    Ok(out)
}

/// Applies exp(dt·𝒦(k)) once; used for single-interval checks.
pub fn characteristic_step(m: &MeasurementModel, x: &Operator, t: f64, dt: f64, k: &[f64], mode: CharMode) -> Result<Operator> {
    let g = characteristic_generator(m, m.cell(t), k, mode)?;
    expm_propagate(&g, x, dt)
}

/// Cell of the test-function grid that holds an event at time t; cells are
/// left-open, (t_i, t_{i+1}].
fn event_cell(grid: &TimeGrid, t: f64) -> Option<usize> {
    if t <= grid.t0 || t > grid.t1 {
        return None;
    }
    let x = (t - grid.t0) / grid.dt();
    let c = libm::ceil(x) as usize;
    Some(c.saturating_sub(1).min(grid.steps - 1))
}

/// V_t[k] = exp{iΣ_j ∫k_j dN_j} for a counting record, at every test-function
/// grid time.
pub fn counting_functional(record: &CountingRecord, k: &TestFunction) -> Vec<C64> {
    let grid = k.grid();
    let mut phase = vec![0.0; grid.steps + 1];
    for ev in &record.events {
        if let Some(cell) = event_cell(grid, ev.t) {
            let kj = k.value(ev.channel, cell).re;
            for p in phase.iter_mut().skip(cell + 1) {
                *p += kj;
            }
        }
    }
    phase.into_iter().map(|p| C64::new(libm::cos(p), libm::sin(p))).collect()
}

/// V_t[k] = exp{iΣ_j ∫k_j dY_j} for a diffusive output path. The path grid
/// must refine the test-function grid. Complex test functions act on channel
/// pairs.
pub fn diffusive_functional(path: &OutputPath, k: &TestFunction) -> Result<Vec<C64>> {
    let grid = k.grid();
    let r = path
        .grid
        .refinement_of(grid)
        .ok_or_else(|| Error::InvalidParameter("output path grid must refine the test-function grid".into()))?;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(C64::new(1.0, 0.0));
    let mut phase = 0.0;
    for cell in 0..grid.steps {
        let kv = k.real_values_at(cell);
        if kv.len() != path.channels() {
            return Err(Error::DimensionMismatch { expected: path.channels(), found: kv.len() });
        }
        if !k.is_zero_at(cell) {
            for step in cell * r..(cell + 1) * r {
                phase += kv.iter().zip(&path.dy[step]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out.push(C64::new(libm::cos(phase), libm::sin(phase)));
    }
    Ok(out)
}

/// Streaming mean of V_t[k] over trajectories.
#[derive(Clone, Debug, Default)]
pub struct CharAccumulator {
    parts: Vec<ComplexWelford>,
}

impl CharAccumulator {
    pub fn new(points: usize) -> Self {
        Self { parts: vec![ComplexWelford::default(); points] }
    }

    pub fn push(&mut self, v: &[C64]) -> Result<()> {
        if v.len() != self.parts.len() {
            return Err(Error::DimensionMismatch { expected: self.parts.len(), found: v.len() });
        }
        for (w, z) in self.parts.iter_mut().zip(v) {
            w.push(*z);
        }
        Ok(())
    }

    pub fn merge(&mut self, o: &CharAccumulator) {
        for (a, b) in self.parts.iter_mut().zip(&o.parts) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.parts.first().map_or(0, |w| w.re.n)
    }

    pub fn finish(&self, grid: &TimeGrid) -> Result<Vec<CharacteristicResult>> {
        if self.count() == 0 {
            return Err(Error::EmptyEnsemble);
        }
        Ok(self
            .parts
            .iter()
            .enumerate()
            .map(|(i, w)| CharacteristicResult { t: grid.time(i), phi: w.mean(), g_rho: None, stderr: Some(w.std_error()) })
            .collect())
    }
}

/// A record from either engine.
#[derive(Clone, Copy, Debug)]
pub enum RecordRef<'a> {
    Counting(&'a CountingRecord),
    Diffusive(&'a OutputPath),
}

/// Ensemble estimate of Φ_t[k] as the mean of V_t[k], with standard errors.
pub fn monte_carlo_characteristic(records: &[RecordRef<'_>], k: &TestFunction) -> Result<Vec<CharacteristicResult>> {
    if records.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut acc = CharAccumulator::new(k.grid().steps + 1);
    for r in records {
        let v = match r {
            RecordRef::Counting(rec) => counting_functional(rec, k),
            RecordRef::Diffusive(path) => diffusive_functional(path, k)?,
        };
        acc.push(&v)?;
    }
    acc.finish(k.grid())
}
