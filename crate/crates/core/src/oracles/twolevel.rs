use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::counting::CountRealization;
use crate::error::{Error, Result};
use crate::hilbert::{c, pauli, Operator};
use crate::model::{CountingChannel, MeasurementModel, Schedule, TimeGrid};

/// Two-level emitter with pumping λ₊, unobserved decay λ₋ and observed
/// decay λ₁. Basis (|1⟩, |0⟩), excited first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelParams {
    pub omega: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda_one: f64,
}

impl TwoLevelParams {
    pub fn new(omega: f64, lambda_plus: f64, lambda_minus: f64, lambda_one: f64) -> Result<Self> {
        let p = Self { omega, lambda_plus, lambda_minus, lambda_one };
        p.validate()?;
        Ok(p)
    }

    /// Wigner atom: no pumping.
    pub fn wigner(omega: f64, lambda_minus: f64, lambda_one: f64) -> Result<Self> {
        Self::new(omega, 0.0, lambda_minus, lambda_one)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !self.omega.is_finite() || !ok(self.lambda_plus) || !ok(self.lambda_minus) {
            return Err(Error::InvalidParameter(format!("two-level parameters out of range: {self:?}")));
        }
        if !(self.lambda_one > 0.0) || !self.lambda_one.is_finite() {
            return Err(Error::InvalidParameter("two-level model needs λ₁ > 0".into()));
        }
        Ok(())
    }

    /// κ = ½(λ₊ + λ₋ + λ₁).
    pub fn kappa(&self) -> f64 {
        0.5 * (self.lambda_plus + self.lambda_minus + self.lambda_one)
    }

    /// α = λ₋ − λ₊.
    pub fn alpha(&self) -> f64 {
        self.lambda_minus - self.lambda_plus
    }

    pub fn hamiltonian(&self) -> Operator {
        pauli::sigma3().scale_real(0.5 * self.omega)
    }

    /// Counting model: H = (ω/2)σ₃, unobserved √λ₊σ₊ and √λ₋σ₋, counted √λ₁σ₋.
    pub fn model(&self, grid: TimeGrid) -> Result<MeasurementModel> {
        self.build(grid, self.hamiltonian())
    }

    /// Same model with a resonant drive (Ω/2)σ₁ added to H.
    pub fn driven_model(&self, grid: TimeGrid, rabi: f64) -> Result<MeasurementModel> {
        let h = self.hamiltonian() + pauli::sigma1().scale_real(0.5 * rabi);
        self.build(grid, h)
    }

    fn build(&self, grid: TimeGrid, h: Operator) -> Result<MeasurementModel> {
        self.validate()?;
        let mut unobserved = Vec::new();
        if self.lambda_plus > 0.0 {
            unobserved.push(pauli::sigma_plus().scale_real(libm::sqrt(self.lambda_plus)));
        }
        if self.lambda_minus > 0.0 {
            unobserved.push(pauli::sigma_minus().scale_real(libm::sqrt(self.lambda_minus)));
        }
        let mut m = MeasurementModel::hamiltonian_only(h, grid);
        if !unobserved.is_empty() {
            m = m.with_dissipator(CountingChannel { kraus: Schedule::Constant(unobserved), label: 0 });
        }
        m = m.with_counting(CountingChannel::single(0, pauli::sigma_minus().scale_real(libm::sqrt(self.lambda_one))));
        m.validate()?;
        Ok(m)
    }
}

/// Unnormalized filter φ = [[π₁, ζ/2], [ζ*/2, π₀]] in the (|1⟩, |0⟩) basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelFilterState {
    pub pi0: f64,
    pub pi1: f64,
    pub zeta: C64,
}

impl TwoLevelFilterState {
    pub fn ground() -> Self {
        Self { pi0: 1.0, pi1: 0.0, zeta: c(0.0, 0.0) }
    }

    pub fn excited() -> Self {
        Self { pi0: 0.0, pi1: 1.0, zeta: c(0.0, 0.0) }
    }

    pub fn from_operator(phi: &Operator) -> Result<Self> {
        phi.check_dim(2)?;
        Ok(Self { pi0: phi.get(1, 1).re, pi1: phi.get(0, 0).re, zeta: phi.get(0, 1) * 2.0 })
    }

    pub fn to_operator(&self) -> Operator {
        let half = self.zeta * 0.5;
        Operator::from_rows(&[alloc::vec![c(self.pi1, 0.0), half], alloc::vec![half.conj(), c(self.pi0, 0.0)]])
            .expect("2×2 filter entries are finite")
    }

    /// c = π₀ + π₁.
    pub fn c(&self) -> f64 {
        self.pi0 + self.pi1
    }

    /// ξ = π₁ − π₀.
    pub fn xi(&self) -> f64 {
        self.pi1 - self.pi0
    }

    /// The normalized state φ/c.
    pub fn normalized(&self) -> Operator {
        self.to_operator().scale_real(1.0 / self.c())
    }
}

/// Solves the between-jump π system over time `t`:
/// π₀' = −λ₊π₀ + λ₋π₁, π₁' = λ₊π₀ − (λ₁ + λ₋)π₁.
pub fn pi_flow(p: &TwoLevelParams, pi0: f64, pi1: f64, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (pi0, pi1);
    }
    let k = p.kappa();
    let s = libm::sqrt((k * k - p.lambda_plus * p.lambda_one).max(0.0));
    let fast = libm::exp(-(s + k) * t);
    let slow = libm::exp((s - k) * t);
    let ch = 0.5 * (slow + fast);
    let sh_s = if s * t < 1e-6 {
        libm::exp(-k * t) * t * (1.0 + s * s * t * t / 6.0)
    } else {
        (slow - fast) / (2.0 * s)
    };
    // M + κI
    let (m00, m01, m10, m11) = (k - p.lambda_plus, p.lambda_minus, p.lambda_plus, k - p.lambda_one - p.lambda_minus);
    (ch * pi0 + sh_s * (m00 * pi0 + m01 * pi1), ch * pi1 + sh_s * (m10 * pi0 + m11 * pi1))
}

/// Exact linear filter along a count realization with τ = 1/λ₁, sampled at
/// every grid time. Events at a grid time are included in that sample.
pub fn twolevel_filter_evolve(
    p: &TwoLevelParams,
    s0: TwoLevelFilterState,
    realization: &CountRealization,
    grid: &TimeGrid,
) -> Vec<TwoLevelFilterState> {
    let decay = |dt: f64| {
        let e = libm::exp(-p.kappa() * dt);
        c(e * libm::cos(p.omega * dt), -e * libm::sin(p.omega * dt))
    };
    let mut s = s0;
    let mut t = grid.t0;
    let mut events = realization.events.iter().filter(|(te, _)| *te > grid.t0).peekable();
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(s);
    for i in 1..=grid.steps {
        let ti = grid.time(i);
        while let Some(&&(te, _)) = events.peek() {
            if te > ti {
                break;
            }
            let (_, pi1) = pi_flow(p, s.pi0, s.pi1, te - t);
            s = TwoLevelFilterState { pi0: pi1, pi1: 0.0, zeta: c(0.0, 0.0) };
            t = te;
            events.next();
        }
        let (a, b) = pi_flow(p, s.pi0, s.pi1, ti - t);
        s = TwoLevelFilterState { pi0: a, pi1: b, zeta: s.zeta * decay(ti - t) };
        t = ti;
        out.push(s);
    }
    out
}

fn require_wigner(p: &TwoLevelParams) -> Result<()> {
    p.validate()?;
    if p.lambda_plus != 0.0 {
        return Err(Error::InvalidParameter("Wigner-atom formulas need λ₊ = 0".into()));
    }
    Ok(())
}

/// Exclusive probability (density) of observing exactly the counts at
/// `events` in (0, t], starting from a state with excited population π₁(0).
/// No events: the no-count probability. One event: its density. More: zero.
pub fn wigner_epd(p: &TwoLevelParams, pi1_0: f64, t: f64, events: &[f64]) -> Result<f64> {
    require_wigner(p)?;
    if !(0.0..=1.0).contains(&pi1_0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("π₁(0) = {pi1_0}, t = {t} out of range")));
    }
    let k2 = 2.0 * p.kappa();
    match events {
        [] => Ok(1.0 - pi1_0 + (p.lambda_minus + p.lambda_one * libm::exp(-k2 * t)) * pi1_0 / k2),
        [t1] => {
            if !(*t1 > 0.0 && *t1 <= t) {
                return Err(Error::InvalidParameter(format!("count time {t1} outside (0, {t}]")));
            }
            Ok(p.lambda_one * libm::exp(-k2 * t1) * pi1_0)
        }
        _ => Ok(0.0),
    }
}

/// Probability of at least one count in (0, t]: ∫₀ᵗ λ₁e^{−2κs}π₁(0) ds.
pub fn wigner_count_cdf(p: &TwoLevelParams, pi1_0: f64, t: f64) -> Result<f64> {
    require_wigner(p)?;
    let k2 = 2.0 * p.kappa();
    Ok(p.lambda_one * pi1_0 * (-libm::expm1(-k2 * t)) / k2)
}

/// Φ_t[k] for constant k: P₀ + e^{ik}∫₀ᵗ p(s) ds.
pub fn wigner_characteristic(p: &TwoLevelParams, pi1_0: f64, t: f64, k: f64) -> Result<C64> {
    let p0 = wigner_epd(p, pi1_0, t, &[])?;
    Ok(c(p0, 0.0) + c(libm::cos(k), libm::sin(k)) * wigner_count_cdf(p, pi1_0, t)?)
}
