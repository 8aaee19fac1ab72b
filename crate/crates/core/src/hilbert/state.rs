use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use super::{spectral_floor, Operator, Tolerances};
use crate::error::{Error, Result};

/// Density matrix ρ (normalized) or unnormalized trace-class φ.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMatrix {
    pub op: Operator,
    pub normalized: bool,
}

impl StateMatrix {
    /// Validated density matrix: Hermitian, unit trace, PSD (all within `tol`).
    pub fn density(op: Operator, tol: &Tolerances) -> Result<Self> {
        let dev = op.hermiticity_deviation();
        if dev > tol.herm {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = op.trace().re;
        if (tr - 1.0).abs() > tol.trace {
            return Err(Error::TraceDrift { t: 0.0, trace: tr });
        }
        let floor = spectral_floor(&op, tol)?;
        if floor < -tol.psd * tr.abs().max(1.0) {
            return Err(Error::Positivity { t: 0.0, min_eigenvalue: floor });
        }
        Ok(Self { op, normalized: true })
    }

    pub fn unnormalized(op: Operator) -> Self {
        Self { op, normalized: false }
    }

    pub fn pure(psi: &PureState) -> Self {
        Self { op: psi.projector(), normalized: true }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { op: Operator::scalar(dim, C64::new(1.0 / dim as f64, 0.0)), normalized: true }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    /// Divides by the trace; errors if the trace is not positive.
    pub fn normalize(&self, t: f64) -> Result<Self> {
        let c = self.trace();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositiveNormalization { t, c });
        }
        Ok(Self { op: self.op.scale_real(1.0 / c), normalized: true })
    }

    /// ⟨X⟩ = Tr{X ρ}.
    pub fn expect(&self, x: &Operator) -> C64 {
        x.trace_product(&self.op)
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
}

impl PureState {
    /// Normalizes the given amplitudes.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidParameter("empty state vector".into()));
        }
        let n = norm(&amps);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("state vector has zero or non-finite norm".into()));
        }
        Ok(Self { amps: amps.into_iter().map(|a| a / n).collect() })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = alloc::vec![C64::new(0.0, 0.0); dim];
        amps[k] = C64::new(1.0, 0.0);
        Self { amps }
    }

    /// Truncated coherent state |α⟩ on `dim` Fock levels (renormalized).
    pub fn coherent(dim: usize, alpha: C64) -> Self {
        let mut amps = Vec::with_capacity(dim);
        let mut term = C64::new(libm::exp(-0.5 * alpha.norm_sqr()), 0.0);
        for n in 0..dim {
            amps.push(term);
            term = term * alpha / libm::sqrt((n + 1) as f64);
        }
        Self::new(amps).expect("coherent amplitudes are finite")
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn projector(&self) -> Operator {
        Operator::outer(&self.amps, &self.amps)
    }

    /// ⟨ψ|X|ψ⟩.
    pub fn expect(&self, x: &Operator) -> C64 {
        inner(&self.amps, &x.apply(&self.amps))
    }
}

fn norm(v: &[C64]) -> f64 {
    libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum())
}

/// ⟨u|v⟩.
pub(crate) fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}
