//! Dense complex linear algebra on small Hilbert spaces.

mod operator;
mod spectral;
mod state;
mod superop;

pub use operator::Operator;
pub use spectral::{clip_to_psd, hermitian_eigen, hermitian_eigenvalues, purity, spectral_floor, spectral_norm, trace_distance};
pub use state::{PureState, StateMatrix};
pub(crate) use state::inner;
pub use superop::{expm_propagate, FnMap, LinearMap, Propagator, Sandwich, SuperMatrix, Superop, DENSE_LIMIT, RK4_NORM_STEP};

use num_complex::Complex64 as C64;

/// Numerical tolerances used by state validation and engine monitors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub herm: f64,
    pub trace: f64,
    /// Relative to the trace.
    pub psd: f64,
    /// Jump-time resolution as a fraction of the horizon.
    pub time_rel: f64,
    /// Smallest admissible jump rate.
    pub rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { herm: 1e-9, trace: 1e-8, psd: 1e-7, time_rel: 1e-10, rate: 1e-14 }
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Two-level operators in the basis (|1⟩, |0⟩): excited first.
pub mod pauli {
    use super::{c, Operator};

    pub fn sigma0() -> Operator {
        Operator::identity(2)
    }
    pub fn sigma1() -> Operator {
        Operator::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) })
    }
    pub fn sigma2() -> Operator {
        let mut m = Operator::zeros(2);
        m.set(0, 1, c(0.0, -1.0));
        m.set(1, 0, c(0.0, 1.0));
        m
    }
    pub fn sigma3() -> Operator {
        Operator::real_diag(&[1.0, -1.0])
    }
    /// σ₊ = |1⟩⟨0|.
    pub fn sigma_plus() -> Operator {
        Operator::unit(2, 0, 1)
    }
    /// σ₋ = |0⟩⟨1|.
    pub fn sigma_minus() -> Operator {
        Operator::unit(2, 1, 0)
    }
}

/// Truncated Fock-space ladder operators on levels 0..dim.
pub mod fock {
    use super::{c, Operator};

    pub fn annihilation(dim: usize) -> Operator {
        let mut a = Operator::zeros(dim);
        for n in 1..dim {
            a.set(n - 1, n, c(libm::sqrt(n as f64), 0.0));
        }
        a
    }

    pub fn creation(dim: usize) -> Operator {
        annihilation(dim).adjoint()
    }

    pub fn number(dim: usize) -> Operator {
        Operator::real_diag(&(0..dim).map(|n| n as f64).collect::<alloc::vec::Vec<_>>())
    }
}
