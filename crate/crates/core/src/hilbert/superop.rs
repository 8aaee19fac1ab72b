use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use super::Operator;
use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Largest dim² for which propagation goes through the dense
/// superoperator exponential instead of RK4 substeps.
pub const DENSE_LIMIT: usize = 256;

/// RK4 substeps are sized so that ‖G‖·h stays below this.
pub const RK4_NORM_STEP: f64 = 0.1;

/// A linear map on operators.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Operator) -> Operator;
    /// Upper bound on the induced norm, used to size RK4 substeps.
    fn norm_bound(&self) -> f64;

    /// dim²×dim² matrix acting on row-major vectorized operators.
    fn to_matrix(&self) -> SuperMatrix {
        let n = self.dim();
        let nn = n * n;
        let mut m = SuperMatrix::zeros(nn);
        for a in 0..n {
            for b in 0..n {
                let img = self.apply(&Operator::unit(n, a, b));
                let col = a * n + b;
                for (r, z) in img.as_slice().iter().enumerate() {
                    m.data[r * nn + col] = *z;
                }
            }
        }
        m
    }
}

/// Wraps a closure as a [`LinearMap`].
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Operator) -> Operator> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&Operator) -> Operator> LinearMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Operator) -> Operator {
        (self.f)(x)
    }
    fn norm_bound(&self) -> f64 {
        let m = self.to_matrix();
        libm::sqrt(m.norm_one() * m.norm_inf())
    }
}

/// w · K ρ L†.
#[derive(Clone, Debug, PartialEq)]
pub struct Sandwich {
    pub weight: C64,
    pub k: Operator,
    pub l: Operator,
}

/// Map of the form ρ ↦ Aρ + ρB + Σ w·KρL†.
///
/// Every generator in the crate (Liouvillians, no-count semigroup
/// generators, characteristic-operator generators) has this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Superop {
    dim: usize,
    left: Operator,
    right_adj: Operator,
    terms: Vec<Sandwich>,
}

impl Superop {
    pub fn zero(dim: usize) -> Self {
        Self { dim, left: Operator::zeros(dim), right_adj: Operator::zeros(dim), terms: Vec::new() }
    }

    pub fn left(&self) -> &Operator {
        &self.left
    }

    pub fn right(&self) -> Operator {
        self.right_adj.adjoint()
    }

    pub fn terms(&self) -> &[Sandwich] {
        &self.terms
    }

    /// ρ ↦ ρ + c·Xρ.
    pub fn add_left(&mut self, c: C64, x: &Operator) -> &mut Self {
        self.left.axpy(c, x);
        self
    }

    /// ρ ↦ ρ + c·ρX.
    pub fn add_right(&mut self, c: C64, x: &Operator) -> &mut Self {
        self.right_adj.axpy(c.conj(), &x.adjoint());
        self
    }

    /// ρ ↦ zρ.
    pub fn add_scalar(&mut self, z: C64) -> &mut Self {
        self.left.add_identity(z);
        self
    }

    /// −i[H, ρ].
    pub fn add_hamiltonian(&mut self, h: &Operator) -> &mut Self {
        self.add_left(C64::new(0.0, -1.0), h);
        self.add_right(C64::new(0.0, 1.0), h)
    }

    /// −½{X, ρ}.
    pub fn add_anticommutator(&mut self, c: C64, x: &Operator) -> &mut Self {
        self.add_left(c, x);
        self.add_right(c, x)
    }

    /// w · KρL†.
    pub fn add_sandwich(&mut self, w: C64, k: &Operator, l: &Operator) -> &mut Self {
        if w != ZERO {
            self.terms.push(Sandwich { weight: w, k: k.clone(), l: l.clone() });
        }
        self
    }

    /// KρK† − ½{K†K, ρ}.
    pub fn add_dissipator(&mut self, k: &Operator) -> &mut Self {
        let r = k.adjoint().matmul(k);
        self.add_sandwich(ONE, k, k);
        self.add_anticommutator(C64::new(-0.5, 0.0), &r)
    }

    pub fn plus(mut self, other: &Superop) -> Self {
        self.left += &other.left;
        self.right_adj += &other.right_adj;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn scaled(&self, z: C64) -> Self {
        Self {
            dim: self.dim,
            left: self.left.scale(z),
            right_adj: self.right_adj.scale(z.conj()),
            terms: self
                .terms
                .iter()
                .map(|s| Sandwich { weight: s.weight * z, k: s.k.clone(), l: s.l.clone() })
                .collect(),
        }
    }
}

impl LinearMap for Superop {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Operator) -> Operator {
        let mut out = self.left.matmul(x);
        // x·B = (B†·x†)†
        out += &self.right_adj.matmul(&x.adjoint()).adjoint();
        for s in &self.terms {
            let kx = s.k.matmul(x);
            out.axpy(s.weight, &kx.mul_adjoint(&s.l));
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        self.left.norm_bound()
            + self.right_adj.norm_bound()
            + self.terms.iter().map(|s| s.weight.norm() * s.k.norm_bound() * s.l.norm_bound()).sum::<f64>()
    }

    fn to_matrix(&self) -> SuperMatrix {
        let n = self.dim;
        let nn = n * n;
        let mut m = SuperMatrix::zeros(nn);
        let right = self.right_adj.adjoint();
        for i in 0..n {
            for j in 0..n {
                let r = i * n + j;
                let row = &mut m.data[r * nn..(r + 1) * nn];
                // A E_ab contributes A_ia at b = j.
                for a in 0..n {
                    row[a * n + j] += self.left.get(i, a);
                }
                // E_ab B contributes B_bj at a = i.
                for b in 0..n {
                    row[i * n + b] += right.get(b, j);
                }
                for s in &self.terms {
                    for a in 0..n {
                        let ka = s.k.get(i, a);
                        if ka == ZERO {
                            continue;
                        }
                        for b in 0..n {
                            row[a * n + b] += s.weight * ka * s.l.get(j, b).conj();
                        }
                    }
                }
            }
        }
        m
    }
}

/// Dense matrix on the vectorized operator space.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperMatrix {
    n: usize,
    data: Vec<C64>,
}

impl SuperMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    pub fn scale(&self, z: C64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|x| x * z).collect() }
    }

    pub fn sub(&self, other: &SuperMatrix) -> Self {
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn matmul(&self, other: &SuperMatrix) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(&other.data[k * n..(k + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn norm_one(&self) -> f64 {
        let n = self.n;
        (0..n).map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.n;
        (0..n).map(|i| self.data[i * n..(i + 1) * n].iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Matrix exponential by scaling and squaring of a Taylor polynomial.
    pub fn expm(&self) -> Self {
        let n = self.n;
        let norm = self.norm_one();
        let mut s = 0u32;
        if norm > 0.5 {
            s = libm::ceil(libm::log2(norm / 0.5)) as u32;
        }
        let b = self.scale(C64::new(libm::ldexp(1.0, -(s as i32)), 0.0));
        let mut result = Self::identity(n);
        let mut term = Self::identity(n);
        for k in 1..=30 {
            term = term.matmul(&b).scale(C64::new(1.0 / k as f64, 0.0));
            let tn = term.norm_one();
            for (r, t) in result.data.iter_mut().zip(&term.data) {
                *r += t;
            }
            if tn <= 1e-18 * result.norm_one() {
                break;
            }
        }
        for _ in 0..s {
            result = result.matmul(&result);
        }
        result
    }

    /// Applies to a row-major vectorized operator.
    pub fn apply(&self, x: &Operator) -> Operator {
        let d = x.dim();
        let n = self.n;
        debug_assert_eq!(d * d, n);
        let v = x.as_slice();
        let mut out = vec![ZERO; n];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Operator::from_raw(d, out)
    }
}

/// exp(dt·G) applied to x.
///
/// Dense scaling-and-squaring on the superoperator matrix when dim² ≤ 256,
/// otherwise RK4 with ‖G‖·h ≤ 0.1.
pub fn expm_propagate<G: LinearMap + ?Sized>(generator: &G, x: &Operator, dt: f64) -> Result<Operator> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidParameter("propagation interval must be non-negative".into()));
    }
    x.check_dim(generator.dim())?;
    if dt == 0.0 {
        return Ok(x.clone());
    }
    let d = generator.dim();
    let out = if d * d <= DENSE_LIMIT {
        generator.to_matrix().scale(C64::new(dt, 0.0)).expm().apply(x)
    } else {
        let steps = rk4_steps(generator.norm_bound(), dt);
        let h = dt / steps as f64;
        let mut y = x.clone();
        for _ in 0..steps {
            y = rk4_step(generator, &y, h);
        }
        y
    };
    if !out.is_finite() {
        return Err(Error::NumericalOverflow { context: "expm_propagate", t: dt });
    }
    Ok(out)
}

fn rk4_steps(norm: f64, dt: f64) -> usize {
    let s = libm::ceil(norm * dt / RK4_NORM_STEP);
    if s.is_finite() && s >= 1.0 {
        s as usize
    } else {
        1
    }
}

fn rk4_step<G: LinearMap + ?Sized>(g: &G, y: &Operator, h: f64) -> Operator {
    let k1 = g.apply(y);
    let mut tmp = y.clone();
    tmp.axpy(C64::new(0.5 * h, 0.0), &k1);
    let k2 = g.apply(&tmp);
    let mut tmp = y.clone();
    tmp.axpy(C64::new(0.5 * h, 0.0), &k2);
    let k3 = g.apply(&tmp);
    let mut tmp = y.clone();
    tmp.axpy(C64::new(h, 0.0), &k3);
    let k4 = g.apply(&tmp);
    let mut out = y.clone();
    out.axpy(C64::new(h / 6.0, 0.0), &k1);
    out.axpy(C64::new(h / 3.0, 0.0), &k2);
    out.axpy(C64::new(h / 3.0, 0.0), &k3);
    out.axpy(C64::new(h / 6.0, 0.0), &k4);
    out
}

/// exp(dt·G) frozen for repeated application.
#[derive(Clone, Debug)]
pub enum Propagator {
    Dense(SuperMatrix),
    Rk4 { generator: Superop, h: f64, steps: usize },
}

impl Propagator {
    pub fn new(generator: &Superop, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::InvalidParameter("propagation interval must be non-negative".into()));
        }
        let d = generator.dim();
        if d * d <= DENSE_LIMIT {
            let m = generator.to_matrix().scale(C64::new(dt, 0.0)).expm();
            if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NumericalOverflow { context: "propagator", t: dt });
            }
            Ok(Self::Dense(m))
        } else {
            let steps = rk4_steps(generator.norm_bound(), dt);
            Ok(Self::Rk4 { generator: generator.clone(), h: dt / steps as f64, steps })
        }
    }

    /// Composition self∘self (the propagator over twice the interval).
    pub fn squared(&self) -> Self {
        match self {
            Self::Dense(m) => Self::Dense(m.matmul(m)),
            Self::Rk4 { generator, h, steps } => Self::Rk4 { generator: generator.clone(), h: *h, steps: 2 * steps },
        }
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        match self {
            Self::Dense(m) => m.apply(x),
            Self::Rk4 { generator, h, steps } => {
                let mut y = x.clone();
                for _ in 0..*steps {
                    y = rk4_step(generator, &y, *h);
                }
                y
            }
        }
    }
}
