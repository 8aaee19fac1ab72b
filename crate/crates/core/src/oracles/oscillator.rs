use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::charfun::TestFunction;
use crate::diffusive::OutputPath;
use crate::error::{Error, Result};
use crate::hilbert::{c, fock, Operator};
use crate::model::{CountingChannel, DiffusiveChannel, MeasurementModel, Schedule, TimeGrid};

/// Driven damped cavity mode under heterodyne detection of ηa:
/// H = ωa†a + g(t)a† + g(t)*a, thermal rates λ↓, λ↑.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorParams {
    pub omega: f64,
    /// Source amplitude, on `grid` cells when piecewise.
    pub g: Schedule<C64>,
    pub grid: TimeGrid,
    pub lambda_down: f64,
    pub lambda_up: f64,
    pub eta: C64,
}

impl OscillatorParams {
    pub fn new(omega: f64, g: C64, lambda_down: f64, lambda_up: f64, eta: C64, grid: TimeGrid) -> Result<Self> {
        let p = Self { omega, g: Schedule::Constant(g), grid, lambda_down, lambda_up, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn with_g_schedule(mut self, values: Vec<C64>) -> Result<Self> {
        if values.len() != self.grid.steps {
            return Err(Error::InvalidParameter(format!("g schedule has {} values for {} cells", values.len(), self.grid.steps)));
        }
        self.g = Schedule::Piecewise(values);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !self.omega.is_finite() || !ok(self.lambda_down) || !ok(self.lambda_up) || !self.eta.norm().is_finite() {
            return Err(Error::InvalidParameter("oscillator parameters out of range".into()));
        }
        if self.g.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("source amplitude is not finite".into()));
        }
        if !(self.gamma() > 0.0) {
            return Err(Error::InvalidParameter(format!("Γ = {} must be strictly positive", self.gamma())));
        }
        Ok(())
    }

    /// Γ = 2(|η|² + λ↓ − λ↑).
    pub fn gamma(&self) -> f64 {
        2.0 * (self.eta.norm_sqr() + self.lambda_down - self.lambda_up)
    }

    pub fn g_at(&self, t: f64) -> C64 {
        *self.g.at(self.grid.cell_of(t))
    }

    /// Fock-truncated model on levels 0..cutoff with the complexified channel
    /// pair (ηa, 1), (ηa, i) and the leakage monitor on the top two levels.
    pub fn model(&self, cutoff: usize) -> Result<MeasurementModel> {
        self.validate()?;
        if cutoff < 4 {
            return Err(Error::InvalidParameter("Fock cutoff must be at least 4".into()));
        }
        let a = fock::annihilation(cutoff);
        let ad = a.adjoint();
        let n = fock::number(cutoff);
        let h_of = |g: &C64| n.scale_real(self.omega) + ad.scale(*g) + a.scale(g.conj());
        let mut m = MeasurementModel::hamiltonian_only(h_of(self.g.at(0)), self.grid);
        m.hamiltonian = self.g.map(h_of);
        let mut unobserved = Vec::new();
        if self.lambda_down > 0.0 {
            unobserved.push(a.scale_real(libm::sqrt(2.0 * self.lambda_down)));
        }
        if self.lambda_up > 0.0 {
            unobserved.push(ad.scale_real(libm::sqrt(2.0 * self.lambda_up)));
        }
        if !unobserved.is_empty() {
            m = m.with_dissipator(CountingChannel { kraus: Schedule::Constant(unobserved), label: 0 });
        }
        let z = a.scale(self.eta);
        m = m.with_diffusive(DiffusiveChannel::new(z.clone(), c(1.0, 0.0)));
        m = m.with_diffusive(DiffusiveChannel::new(z, c(0.0, 1.0)));
        m.complex_pairs = true;
        m.leakage_levels = 2;
        m.validate()?;
        Ok(m)
    }

    /// Engine test-function value for an oracle κ (the oracle measures a, the
    /// engine ηa): κ/η*.
    pub fn engine_kappa(&self, kappa: C64) -> C64 {
        kappa / self.eta.conj()
    }
}

/// Mean and normally ordered covariances of a Gaussian state:
/// ν = ⟨a†a⟩ − |⟨a⟩|², μ = ⟨a²⟩ − ⟨a⟩².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: C64,
    pub mu: C64,
    pub nu: f64,
}

impl GaussianPosterior {
    pub fn coherent(alpha: C64) -> Self {
        Self { mean: alpha, mu: c(0.0, 0.0), nu: 0.0 }
    }

    /// Moments of a Fock-space density matrix.
    pub fn from_operator(rho: &Operator) -> Self {
        let a = fock::annihilation(rho.dim());
        let mean = a.trace_product(rho);
        let a2 = a.matmul(&a);
        let n = a.adjoint().matmul(&a);
        Self { mean, mu: a2.trace_product(rho) - mean * mean, nu: n.trace_product(rho).re - mean.norm_sqr() }
    }

    /// ν(ν + 1) − |μ|², non-negative for physical states.
    pub fn physicality_margin(&self) -> f64 {
        self.nu * (self.nu + 1.0) - self.mu.norm_sqr()
    }
}

/// Right-hand sides of the posterior covariance equations.
pub fn riccati_rhs(p: &OscillatorParams, mu: C64, nu: f64) -> (C64, f64) {
    let e2 = p.eta.norm_sqr();
    let gam = p.gamma();
    let dmu = -c(gam, 2.0 * p.omega) * mu - mu * (4.0 * e2 * nu);
    let dnu = -gam * nu - 2.0 * e2 * (mu.norm_sqr() + nu * nu) + 2.0 * p.lambda_up;
    (dmu, dnu)
}

fn rk4_cov(p: &OscillatorParams, mu: C64, nu: f64, h: f64) -> (C64, f64) {
    let (m1, n1) = riccati_rhs(p, mu, nu);
    let (m2, n2) = riccati_rhs(p, mu + m1 * (0.5 * h), nu + n1 * 0.5 * h);
    let (m3, n3) = riccati_rhs(p, mu + m2 * (0.5 * h), nu + n2 * 0.5 * h);
    let (m4, n4) = riccati_rhs(p, mu + m3 * h, nu + n3 * h);
    (mu + (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0), nu + (n1 + 2.0 * n2 + 2.0 * n3 + n4) * h / 6.0)
}

fn cov_substeps(p: &OscillatorParams, mu: C64, nu: f64, dt: f64) -> usize {
    let rate = 2.0 * p.omega.abs() + p.gamma() + 4.0 * p.eta.norm_sqr() * (1.0 + nu.abs() + mu.norm()) + 1.0;
    libm::ceil(dt * rate / 0.05).max(1.0) as usize
}

/// (μ, ν) on every grid time by RK4.
pub fn riccati_covariance_evolve(p: &OscillatorParams, mu0: C64, nu0: f64, grid: &TimeGrid) -> Vec<(C64, f64)> {
    let dt = grid.dt();
    let sub = cov_substeps(p, mu0, nu0, dt);
    let h = dt / sub as f64;
    let (mut mu, mut nu) = (mu0, nu0);
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push((mu, nu));
    for _ in 0..grid.steps {
        for _ in 0..sub {
            (mu, nu) = rk4_cov(p, mu, nu, h);
        }
        out.push((mu, nu));
    }
    out
}

/// Complex increments dW = ½(dY₁ + i dY₂)/η of the rescaled output, one
/// per path step.
pub fn oscillator_dw(path: &OutputPath, eta: C64) -> Result<Vec<C64>> {
    if !path.complex_pairs || path.channels() != 2 {
        return Err(Error::InvalidParameter("oscillator output path must hold one channel pair".into()));
    }
    Ok((0..path.dy.len()).map(|i| path.dw(i, 0) / eta).collect())
}

/// Gaussian filter along the increments `dw` (one per grid step): (μ, ν) by
/// RK4, the mean by Euler–Maruyama of
/// d⟨a⟩ = −[(iω + Γ/2)⟨a⟩ + ig]dt + 2|η|²{μ(dW* − ⟨a⟩*dt) + ν(dW − ⟨a⟩dt)}.
pub fn riccati_posterior_evolve(
    p: &OscillatorParams,
    g0: GaussianPosterior,
    dw: &[C64],
    grid: &TimeGrid,
) -> Result<Vec<GaussianPosterior>> {
    if dw.len() != grid.steps {
        return Err(Error::DimensionMismatch { expected: grid.steps, found: dw.len() });
    }
    let dt = grid.dt();
    let cov = riccati_covariance_evolve(p, g0.mu, g0.nu, grid);
    let e2 = p.eta.norm_sqr();
    let z = c(0.5 * p.gamma(), p.omega);
    let mut mean = g0.mean;
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(g0);
    for i in 0..grid.steps {
        let (mu, nu) = cov[i];
        let g = p.g_at(0.5 * (grid.time(i) + grid.time(i + 1)));
        let innov = dw[i] - mean * dt;
        let d = -(z * mean + c(0.0, 1.0) * g) * dt + (mu * innov.conj() + innov * nu) * (2.0 * e2);
        mean += d;
        let (mu1, nu1) = cov[i + 1];
        if nu1 < -1e-12 {
            return Err(Error::Contract(format!("posterior variance ν = {nu1} is negative at t = {}", grid.time(i + 1))));
        }
        out.push(GaussianPosterior { mean, mu: mu1, nu: nu1 });
    }
    Ok(out)
}

/// Stationary positive solution of −Γν − 2|η|²ν² + 2λ↑ = 0, in the
/// cancellation-free form 4λ↑ / (Γ(√(1 + 16|η|²λ↑/Γ²) + 1)).
pub fn riccati_stationary(p: &OscillatorParams) -> Result<f64> {
    p.validate()?;
    let e2 = p.eta.norm_sqr();
    if e2 == 0.0 {
        return Err(Error::InvalidParameter("stationary Riccati solution needs η ≠ 0".into()));
    }
    let gam = p.gamma();
    let x = 16.0 * e2 * p.lambda_up / (gam * gam);
    Ok(4.0 * p.lambda_up / (gam * (libm::sqrt(1.0 + x) + 1.0)))
}

/// −Γν − 2|η|²ν² + 2λ↑.
pub fn riccati_residual(p: &OscillatorParams, nu: f64) -> f64 {
    -p.gamma() * nu - 2.0 * p.eta.norm_sqr() * nu * nu + 2.0 * p.lambda_up
}

/// Coefficient paths of the Gaussian characteristic operator and
/// Φ = exp(−h) on the test-function grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorCharacteristic {
    pub times: Vec<f64>,
    pub b: Vec<C64>,
    pub c: Vec<C64>,
    pub d: Vec<C64>,
    pub f: Vec<f64>,
    pub h: Vec<C64>,
    pub phi: Vec<C64>,
}

#[derive(Clone, Copy)]
struct Coeffs {
    b: C64,
    c: C64,
    d: C64,
    f: f64,
    h: C64,
}

fn coeff_rhs(p: &OscillatorParams, k: C64, g: C64, y: &Coeffs) -> Coeffs {
    let i = c(0.0, 1.0);
    let z = c(0.5 * p.gamma(), p.omega);
    let src = i * k.conj() * y.d + i * k * y.f;
    Coeffs {
        b: -z * y.b + src - i * g,
        c: -z * y.c - src - i * g,
        d: -c(p.gamma(), 2.0 * p.omega) * y.d,
        f: -p.gamma() * y.f + 2.0 * p.lambda_up,
        h: -i * k.conj() * y.b - i * k * y.c.conj() + c(0.5 * (k / p.eta).norm_sqr(), 0.0),
    }
}

fn axpy(y: &Coeffs, h: f64, k: &Coeffs) -> Coeffs {
    Coeffs { b: y.b + k.b * h, c: y.c + k.c * h, d: y.d + k.d * h, f: y.f + k.f * h, h: y.h + k.h * h }
}

/// Integrates the (b, c, d, f, h) system with b(0) = c(0) = α₀, d(0) = μ₀,
/// f(0) = ν₀, h(0) = 0 under a complex test function κ (one channel,
/// oracle normalization). Φ_t = exp(−h(t)).
pub fn oscillator_characteristic(p: &OscillatorParams, kappa: &TestFunction, init: &GaussianPosterior) -> Result<OscillatorCharacteristic> {
    if !kappa.is_complex() || kappa.channels() != 1 {
        return Err(Error::InvalidParameter("oscillator test function must be one complex channel".into()));
    }
    if p.eta.norm() == 0.0 {
        return Err(Error::InvalidParameter("characteristic functional needs η ≠ 0".into()));
    }
    let grid = kappa.grid();
    let dt = grid.dt();
    let mut y = Coeffs { b: init.mean, c: init.mean, d: init.mu, f: init.nu, h: c(0.0, 0.0) };
    let mut out = OscillatorCharacteristic {
        times: grid.times(),
        b: vec![y.b],
        c: vec![y.c],
        d: vec![y.d],
        f: vec![y.f],
        h: vec![y.h],
        phi: vec![c(1.0, 0.0)],
    };
    for cell in 0..grid.steps {
        let k = kappa.value(0, cell);
        let rate = p.omega.abs() + p.gamma() + k.norm() * (1.0 + k.norm() / p.eta.norm_sqr()) + 1.0;
        let sub = libm::ceil(dt * rate / 0.02).max(1.0) as usize;
        let h = dt / sub as f64;
        for s in 0..sub {
            let t = grid.time(cell) + s as f64 * h;
            let (g0, gm, g1) = (p.g_at(t), p.g_at(t + 0.5 * h), p.g_at(t + h));
            let k1 = coeff_rhs(p, k, g0, &y);
            let k2 = coeff_rhs(p, k, gm, &axpy(&y, 0.5 * h, &k1));
            let k3 = coeff_rhs(p, k, gm, &axpy(&y, 0.5 * h, &k2));
            let k4 = coeff_rhs(p, k, g1, &axpy(&y, h, &k3));
            y = Coeffs {
                b: y.b + (k1.b + k2.b * 2.0 + k3.b * 2.0 + k4.b) * (h / 6.0),
                c: y.c + (k1.c + k2.c * 2.0 + k3.c * 2.0 + k4.c) * (h / 6.0),
                d: y.d + (k1.d + k2.d * 2.0 + k3.d * 2.0 + k4.d) * (h / 6.0),
                f: y.f + (k1.f + 2.0 * k2.f + 2.0 * k3.f + k4.f) * (h / 6.0),
                h: y.h + (k1.h + k2.h * 2.0 + k3.h * 2.0 + k4.h) * (h / 6.0),
            };
        }
        out.b.push(y.b);
        out.c.push(y.c);
        out.d.push(y.d);
        out.f.push(y.f);
        out.h.push(y.h);
        out.phi.push((-y.h).exp());
    }
    Ok(out)
}

/// α(t) = e^{−(iω+Γ/2)(t−t₀)}α₀ − i∫ g(s)e^{−(iω+Γ/2)(t−s)} ds, exact for
/// piecewise-constant g.
pub fn apriori_mean(p: &OscillatorParams, alpha0: C64, t: f64) -> C64 {
    let z = c(0.5 * p.gamma(), p.omega);
    let t0 = p.grid.t0;
    let decay = |s: f64| (-z * (t - s)).exp();
    let mut acc = decay(t0) * alpha0;
    let mut a = t0;
    let mut cell = 0;
    while a < t {
        let b = if p.g.is_constant() || cell + 1 >= p.grid.steps { t } else { p.grid.time(cell + 1).min(t) };
        let g = *p.g.at(cell);
        acc += -c(0.0, 1.0) * g * (decay(b) - decay(a)) / z;
        a = b;
        cell += 1;
    }
    acc
}

/// Asymptotic amplitude with the initial condition forgotten (α₀ = 0).
pub fn coherent_amplitude(p: &OscillatorParams, t: f64) -> C64 {
    apriori_mean(p, c(0.0, 0.0), t)
}

/// C(t) = 2λ↑/Γ + (ν₀ − 2λ↑/Γ)e^{−Γt}: the a-priori ⟨a†a⟩ − |α|².
pub fn apriori_number_variance(p: &OscillatorParams, nu0: f64, t: f64) -> f64 {
    let inf = 2.0 * p.lambda_up / p.gamma();
    inf + (nu0 - inf) * libm::exp(-p.gamma() * (t - p.grid.t0))
}

/// e^{−(2iω+Γ)t}μ₀: the a-priori ⟨a²⟩ − α².
pub fn apriori_squeezing(p: &OscillatorParams, mu0: C64, t: f64) -> C64 {
    (-c(p.gamma(), 2.0 * p.omega) * (t - p.grid.t0)).exp() * mu0
}

/// Off-diagonal (s ≠ s′) part of the output covariance Δ₁.
pub fn delta1_smooth(p: &OscillatorParams, nu0: f64, s: f64, s2: f64) -> C64 {
    if s >= s2 {
        (-c(0.5 * p.gamma(), p.omega) * (s - s2)).exp() * apriori_number_variance(p, nu0, s2)
    } else {
        (c(-0.5 * p.gamma(), p.omega) * (s2 - s)).exp() * apriori_number_variance(p, nu0, s)
    }
}

/// Δ₂(s, s′) = e^{−(iω+Γ/2)(s+s′)}μ₀.
pub fn delta2(p: &OscillatorParams, mu0: C64, s: f64, s2: f64) -> C64 {
    (-c(0.5 * p.gamma(), p.omega) * (s + s2 - 2.0 * p.grid.t0)).exp() * mu0
}

/// Stationary off-diagonal covariance (2λ↑/Γ)e^{−(Γ/2)|s−s′|}e^{−iω(s−s′)}.
pub fn delta1_stationary(p: &OscillatorParams, s: f64, s2: f64) -> C64 {
    let d = s - s2;
    c(0.0, -p.omega * d).exp() * (2.0 * p.lambda_up / p.gamma() * libm::exp(-0.5 * p.gamma() * d.abs()))
}

/// h(t) from the mean/covariance representation by midpoint quadrature on
/// the test-function grid. The δ part of Δ₁ contributes 1/(2|η|²Δt) on the
/// diagonal cells.
pub fn h_quadrature(p: &OscillatorParams, kappa: &TestFunction, init: &GaussianPosterior) -> Result<Vec<C64>> {
    if !kappa.is_complex() || kappa.channels() != 1 {
        return Err(Error::InvalidParameter("oscillator test function must be one complex channel".into()));
    }
    let grid = kappa.grid();
    let dt = grid.dt();
    let n = grid.steps;
    let mid: Vec<f64> = (0..n).map(|i| 0.5 * (grid.time(i) + grid.time(i + 1))).collect();
    let k: Vec<C64> = (0..n).map(|i| kappa.value(0, i)).collect();
    let i_unit = c(0.0, 1.0);
    let diag = 1.0 / (2.0 * p.eta.norm_sqr() * dt);
    let pair = |i: usize, j: usize| -> C64 {
        let mut d1 = delta1_smooth(p, init.nu, mid[i], mid[j]);
        if i == j {
            d1 += c(diag, 0.0);
        }
        let d2 = delta2(p, init.mu, mid[i], mid[j]);
        k[i].conj() * k[j] * d1 + k[i] * k[j] * d2.conj() * 0.5 + k[i].conj() * k[j].conj() * d2 * 0.5
    };
    let mut h = c(0.0, 0.0);
    let mut out = vec![h];
    for m in 0..n {
        let a = apriori_mean(p, init.mean, mid[m]);
        h += -i_unit * (k[m].conj() * a + k[m] * a.conj()) * dt;
        let mut cross = pair(m, m);
        for j in 0..m {
            cross += pair(m, j) + pair(j, m);
        }
        h += cross * (dt * dt);
        out.push(h);
    }
    Ok(out)
}
