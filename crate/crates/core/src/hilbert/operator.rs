use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Dense complex square matrix, row-major.
///
/// Products skip zero entries of the left factor, which keeps banded
/// ladder-operator algebra on truncated Fock spaces at O(dim²·bandwidth).
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "operator dimension must be positive");
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn scalar(dim: usize, z: C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = z;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Builds from row-major entries; rejects non-square or non-finite data.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("operator entries must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(dim, data)
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    pub fn real_diag(values: &[f64]) -> Self {
        let vals: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&vals)
    }

    /// |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    /// Matrix unit |a⟩⟨b|.
    pub fn unit(dim: usize, a: usize, b: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[a * dim + b] = ONE;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.data[i * self.dim + j] = z;
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dim })
        }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Tr{self · other} without forming the product.
    pub fn trace_product(&self, other: &Operator) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        let mut out = Self::zeros(self.dim);
        self.matmul_into(other, &mut out);
        out
    }

    /// out = self · other (out is overwritten).
    pub fn matmul_into(&self, other: &Operator, out: &mut Operator) {
        let n = self.dim;
        debug_assert_eq!(n, other.dim);
        out.data.iter_mut().for_each(|z| *z = ZERO);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
    }

    /// self · other†, skipping zero entries of `other`.
    pub fn mul_adjoint(&self, other: &Operator) -> Self {
        let n = self.dim;
        debug_assert_eq!(n, other.dim);
        let mut out = Self::zeros(n);
        for j in 0..n {
            for k in 0..n {
                let b = other.data[j * n + k];
                if b == ZERO {
                    continue;
                }
                let b = b.conj();
                for i in 0..n {
                    out.data[i * n + j] += self.data[i * n + k] * b;
                }
            }
        }
        out
    }

    /// Matrix exponential by scaling and squaring of a Taylor polynomial.
    pub fn expm(&self) -> Self {
        let norm = self.norm_one();
        let s = if norm > 0.5 { libm::ceil(libm::log2(norm / 0.5)) as i32 } else { 0 };
        let b = self.scale_real(libm::ldexp(1.0, -s));
        let mut result = Self::identity(self.dim);
        let mut term = Self::identity(self.dim);
        for k in 1..=30 {
            term = term.matmul(&b).scale_real(1.0 / k as f64);
            result += &term;
            if term.norm_one() <= 1e-18 * result.norm_one() {
                break;
            }
        }
        for _ in 0..s {
            result = result.matmul(&result);
        }
        result
    }

    /// K · self · K†.
    pub fn sandwich(&self, k: &Operator) -> Self {
        k.matmul(self).mul_adjoint(k)
    }

    /// K · self · L†.
    pub fn sandwich2(&self, k: &Operator, l: &Operator) -> Self {
        k.matmul(self).mul_adjoint(l)
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        self.matmul(other) - other.matmul(self)
    }

    pub fn anticommutator(&self, other: &Operator) -> Self {
        self.matmul(other) + other.matmul(self)
    }

    pub fn scale(&self, z: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|x| x * z).collect() }
    }

    pub fn scale_real(&self, x: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * x).collect() }
    }

    pub fn scale_in_place(&mut self, z: C64) {
        self.data.iter_mut().for_each(|x| *x *= z);
    }

    /// self += a · x.
    pub fn axpy(&mut self, a: C64, x: &Operator) {
        debug_assert_eq!(self.dim, x.dim);
        if a == ZERO {
            return;
        }
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn add_identity(&mut self, z: C64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += z;
        }
    }

    /// (self + self†)/2.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5)
    }

    pub fn hermitize_in_place(&mut self) {
        let n = self.dim;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                let m = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = m;
                self.data[j * n + i] = m.conj();
            }
        }
    }

    /// max |x_ij − conj(x_ji)|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        dev
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    /// Largest absolute row sum; an upper bound on the spectral norm together
    /// with the column sum.
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|i| self.data[i * n..(i + 1) * n].iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn norm_one(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// sqrt(‖·‖₁‖·‖∞) ≥ spectral norm, tighter than Frobenius for banded operators.
    pub fn norm_bound(&self) -> f64 {
        libm::sqrt(self.norm_one() * self.norm_inf())
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        let mut out = vec![ZERO; n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn kron(&self, other: &Operator) -> Self {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |r, c| self.get(r / m, c / m) * other.get(r % m, c % m))
    }

    /// max |a_ij − b_ij|.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(mut self, rhs: Operator) -> Operator {
        self += &rhs;
        self
    }
}

impl Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(mut self, rhs: Operator) -> Operator {
        self -= &rhs;
        self
    }
}

impl Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&Operator> for Operator {
    fn sub_assign(&mut self, rhs: &Operator) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul<&Operator> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(mut self) -> Operator {
        self.data.iter_mut().for_each(|z| *z = -*z);
        self
    }
}
