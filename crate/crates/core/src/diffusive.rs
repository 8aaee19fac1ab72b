//! Diffusive detection: the nonlinear filter, its linear companion, the
//! pure-state unravelling and the complexified channel layout.
//!
//! The nonlinear step is a symmetric split: half a step of the drift
//! exp(ℒ′dt/2), a second-order Kraus kick driven by dY, another half step
//! and renormalization, which keeps states positive (see [`StepOps`]). The
//! linear step is the explicit Milstein scheme for
//! dφ = ℒφdt + Σ_j (Z_jφ/f_j + φZ_j†/f_j*) dY_j.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hilbert::{clip_to_psd, inner, purity, spectral_floor, LinearMap, Operator, Propagator, PureState, StateMatrix, Superop, Tolerances};
use crate::model::{DiffusiveChannel, MeasurementModel, Mode, TimeGrid};

/// Output increments along a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPath {
    pub grid: TimeGrid,
    /// dY[step][channel].
    pub dy: Vec<Vec<f64>>,
    /// Innovations dM[step][channel] (empty for replayed paths).
    pub dm: Vec<Vec<f64>>,
    pub complex_pairs: bool,
}

impl OutputPath {
    pub fn channels(&self) -> usize {
        self.dy.first().map_or(0, |v| v.len())
    }

    /// Complex increment dW_p = ½(dY_{2p} + i dY_{2p+1}).
    pub fn dw(&self, step: usize, pair: usize) -> C64 {
        C64::new(0.5 * self.dy[step][2 * pair], 0.5 * self.dy[step][2 * pair + 1])
    }

    /// Y_j(t_i) = Σ_{s<i} dY_j.
    pub fn y_at(&self, i: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.channels()];
        for row in &self.dy[..i] {
            for (a, b) in y.iter_mut().zip(row) {
                *a += b;
            }
        }
        y
    }
}

/// Engine settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusiveConfig {
    pub snapshot_every: usize,
    pub record_states: bool,
    pub record_path: bool,
    /// Project onto the PSD cone instead of failing on a positivity violation.
    pub clip_negative: bool,
    /// Full eigenvalue check every this many steps (0: snapshots only).
    pub positivity_every: usize,
    pub tol: Tolerances,
}

impl Default for DiffusiveConfig {
    fn default() -> Self {
        Self { snapshot_every: 1, record_states: true, record_path: true, clip_negative: false, positivity_every: 0, tol: Tolerances::default() }
    }
}

/// Population threshold for the truncation-leakage monitor.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusiveSnapshot {
    pub index: usize,
    pub t: f64,
    pub state: Option<Operator>,
    /// Y_j(t).
    pub y: Vec<f64>,
    /// M_j(t) = Y_j(t) − ∫ 2Re(f_j*⟨Z_j⟩) ds.
    pub m: Vec<f64>,
    /// ⟨Z_j⟩ at t.
    pub z_mean: Vec<C64>,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusiveRecord {
    pub grid: TimeGrid,
    pub snapshots: Vec<DiffusiveSnapshot>,
    /// Steps where eigenvalue clipping was applied (only with `clip_negative`).
    pub clipped_steps: usize,
    pub seed: u64,
    pub stream: u64,
}

impl DiffusiveRecord {
    pub fn final_state(&self) -> Option<&Operator> {
        self.snapshots.last().and_then(|s| s.state.as_ref())
    }
}

/// Real coordinates of a Hermitian operator: Re x_ik on and above the
/// diagonal at i·d + k, Im x_ik below it at k·d + i.
fn hvec(x: &Operator) -> Vec<f64> {
    let d = x.dim();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        for k in i..d {
            let z = x.get(i, k);
            v[i * d + k] = z.re;
            if k > i {
                v[k * d + i] = z.im;
            }
        }
    }
    v
}

fn from_hvec(d: usize, v: &[f64]) -> Operator {
    let mut x = Operator::zeros(d);
    for i in 0..d {
        x.set(i, i, C64::new(v[i * d + i], 0.0));
        for k in i + 1..d {
            let z = C64::new(v[i * d + k], v[k * d + i]);
            x.set(i, k, z);
            x.set(k, i, z.conj());
        }
    }
    x
}

/// The Hermitian operator whose coordinates are the unit vector e_q.
fn hbasis(d: usize, q: usize) -> Operator {
    let (i, k) = (q / d, q % d);
    let mut x = Operator::zeros(d);
    if i == k {
        x.set(i, i, C64::new(1.0, 0.0));
    } else if i < k {
        x.set(i, k, C64::new(1.0, 0.0));
        x.set(k, i, C64::new(1.0, 0.0));
    } else {
        x.set(k, i, C64::new(0.0, 1.0));
        x.set(i, k, C64::new(0.0, -1.0));
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Row-major real matrix acting on Hermitian coordinates.
#[derive(Clone, Debug)]
struct RealMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMap {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.cols).map(|row| dot(row, v)).collect()
    }

    fn matmul(&self, other: &RealMap) -> RealMap {
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                for j in 0..other.cols {
                    data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        RealMap { rows: self.rows, cols: other.cols, data }
    }
}

/// How exp(ℒ′τ) is applied, ℒ′ being ℒ without the measured jump terms.
#[derive(Clone, Debug)]
enum Drift {
    /// No unobserved channels: ρ ↦ EρE† with E = exp(Aτ).
    Sandwich(Operator),
    /// The propagator restricted to Hermitian operators, for dim² up to
    /// the dense limit.
    Real(RealMap),
    Super(Propagator),
}

impl Drift {
    fn new(m: &MeasurementModel, cell: usize, a: &Operator, tau: f64) -> Result<Self> {
        if m.dissipators.is_empty() {
            return Ok(Self::Sandwich(a.scale_real(tau).expm()));
        }
        let mut g = m.free_superop(cell);
        for ch in &m.diffusive {
            g.add_anticommutator(C64::new(-0.5, 0.0), &ch.z.adjoint().matmul(&ch.z));
        }
        let p = Propagator::new(&g, tau)?;
        let d = m.dim;
        if let Propagator::Dense(_) = p {
            let nn = d * d;
            let mut data = vec![0.0; nn * nn];
            for q in 0..nn {
                for (r, x) in hvec(&p.apply(&hbasis(d, q))).into_iter().enumerate() {
                    data[r * nn + q] = x;
                }
            }
            return Ok(Self::Real(RealMap { rows: nn, cols: nn, data }));
        }
        Ok(Self::Super(p))
    }

    /// Applies the drift to a Hermitian operator.
    fn apply(&self, x: &Operator) -> Operator {
        match self {
            Self::Sandwich(e) => x.sandwich(e),
            Self::Real(r) => from_hvec(x.dim(), &r.apply(&hvec(x))),
            Self::Super(p) => p.apply(x),
        }
    }

    fn squared(&self) -> Self {
        match self {
            Self::Sandwich(e) => Self::Sandwich(e.matmul(e)),
            Self::Real(r) => Self::Real(r.matmul(r)),
            Self::Super(p) => Self::Super(p.squared()),
        }
    }

    /// The operator E′ with Tr{exp(ℒ′τ)X} = Tr{E′X}.
    fn trace_functional(&self, d: usize) -> Operator {
        match self {
            Self::Sandwich(e) => e.adjoint().matmul(e),
            Self::Real(r) => {
                // c_q = Tr{exp(ℒ′τ)h_q} for the coordinate basis h_q; E′ is
                // Hermitian with Tr{E′h_q} = c_q.
                let nn = d * d;
                let c: Vec<f64> = (0..nn)
                    .map(|q| {
                        let s: f64 = (0..d).map(|i| r.data[(i * d + i) * nn + q]).sum();
                        if q / d == q % d { s } else { 0.5 * s }
                    })
                    .collect();
                from_hvec(d, &c)
            }
            Self::Super(p) => {
                let mut out = Operator::zeros(d);
                for a in 0..d {
                    for b in 0..d {
                        out.set(b, a, p.apply(&Operator::unit(d, a, b)).trace());
                    }
                }
                out
            }
        }
    }
}

/// Gauss–Hermite nodes per output channel when tabulating moments; exact
/// for the degree-6 polynomials that occur.
const MOMENT_NODES: usize = 4;

/// Per-cell operators of the nonlinear filter.
///
/// One step is ρ ↦ N[e^{ℒ′dt/2}(M ·e^{ℒ′dt/2}ρ· M†)] with the Wick-ordered
/// Kraus factor M = I + Σ B_jΔY_j + ½ΣΣ B_jB_l(ΔY_jΔY_l − δ_jl|f_j|²dt),
/// whose reference-measure average is exp(Σ𝒥_j dt) up to O(dt³). The
/// increments are drawn from a Gaussian carrying the exact mean and
/// covariance of the law Tr{e^{ℒ′dt/2}(MρM†)} × reference density, so the
/// ensemble mean follows exp(ℒdt) to O(dt³) per step.
#[derive(Clone, Debug)]
pub(crate) struct StepOps {
    /// Kraus terms: I, B_j, then ½(B_jB_l + B_lB_j) for j ≤ l.
    terms: Vec<Operator>,
    /// (j, l) of each second-order term.
    pairs: Vec<(usize, usize)>,
    /// Rows ρ ↦ Re Tr{U_b† E′ U_a ρ} for a ≤ b in `gram_index` order, on
    /// Hermitian coordinates.
    gram: RealMap,
    gram_index: Vec<(usize, usize)>,
    /// Reference moments E[w u_a u_b] (doubled off the diagonal) for the
    /// weights w = 1, x_i, x_i x_k, row-major over `gram`.
    m0: Vec<f64>,
    m1: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
    z: Vec<Operator>,
    /// |f_j|² dt.
    var: Vec<f64>,
    half: Drift,
    full: Drift,
}

impl StepOps {
    pub(crate) fn new(m: &MeasurementModel, cell: usize, dt: f64) -> Result<Self> {
        let d = m.dim;
        let mut a = m.hamiltonian_at(cell).scale(C64::new(0.0, -1.0));
        for k in m.unobserved_kraus(cell) {
            a.axpy(C64::new(-0.5, 0.0), &k.adjoint().matmul(k));
        }
        let z: Vec<Operator> = m.diffusive.iter().map(|c| c.z.clone()).collect();
        let f: Vec<C64> = m.diffusive.iter().map(|c| c.f_at(cell)).collect();
        for zj in &z {
            a.axpy(C64::new(-0.5, 0.0), &zj.adjoint().matmul(zj));
        }
        let n = z.len();
        let b: Vec<Operator> = z.iter().zip(&f).map(|(zj, fj)| zj.scale(C64::new(1.0, 0.0) / fj)).collect();
        let mut terms = vec![Operator::identity(d)];
        terms.extend(b.iter().cloned());
        let mut pairs = Vec::new();
        for j in 0..n {
            for l in j..n {
                let mut p = b[j].matmul(&b[l]);
                if j != l {
                    p += &b[l].matmul(&b[j]);
                    p.scale_in_place(C64::new(0.5, 0.0));
                }
                terms.push(p);
                pairs.push((j, l));
            }
        }
        let half = Drift::new(m, cell, &a, 0.5 * dt)?;
        let full = half.squared();
        let e = half.trace_functional(d);
        let var: Vec<f64> = f.iter().map(|fj| fj.norm_sqr() * dt).collect();

        let basis: Vec<Operator> = (0..d * d).map(|q| hbasis(d, q)).collect();
        let mut data = Vec::new();
        let mut gram_index = Vec::new();
        for ia in 0..terms.len() {
            let eu = e.matmul(&terms[ia]);
            for ib in ia..terms.len() {
                let g = terms[ib].adjoint().matmul(&eu);
                data.extend(basis.iter().map(|h| g.trace_product(h).re));
                gram_index.push((ia, ib));
            }
        }
        let gram = RealMap { rows: gram_index.len(), cols: d * d, data };
        let mut ops = Self {
            terms,
            pairs,
            gram,
            gram_index,
            m0: Vec::new(),
            m1: Vec::new(),
            m2: Vec::new(),
            z,
            var,
            half,
            full,
        };
        ops.tabulate_moments();
        Ok(ops)
    }

    fn channels(&self) -> usize {
        self.z.len()
    }

    /// Polynomial weights u_a(ΔY) of the Kraus terms.
    fn weights(&self, dy: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.terms.len());
        u.push(1.0);
        u.extend_from_slice(dy);
        for &(j, l) in &self.pairs {
            u.push(if j == l { 0.5 * (dy[j] * dy[j] - self.var[j]) } else { dy[j] * dy[l] });
        }
        u
    }

    fn tabulate_moments(&mut self) {
        let n = self.channels();
        let g = self.gram.rows;
        let (x, w) = crate::stats::gauss_hermite(MOMENT_NODES);
        let norm = 1.0 / libm::sqrt(core::f64::consts::PI);
        let mut m0 = vec![0.0; g];
        let mut m1 = vec![vec![0.0; g]; n];
        let mut m2 = vec![vec![0.0; g]; n * n];
        let mut idx = vec![0usize; n];
        let mut dy = vec![0.0; n];
        loop {
            let mut weight = 1.0;
            for j in 0..n {
                dy[j] = libm::sqrt(2.0 * self.var[j]) * x[idx[j]];
                weight *= w[idx[j]] * norm;
            }
            let u = self.weights(&dy);
            for (p, &(ia, ib)) in self.gram_index.iter().enumerate() {
                let mult = if ia == ib { 1.0 } else { 2.0 };
                let c = weight * mult * u[ia] * u[ib];
                m0[p] += c;
                for i in 0..n {
                    m1[i][p] += c * dy[i];
                    for k in 0..n {
                        m2[i * n + k][p] += c * dy[i] * dy[k];
                    }
                }
            }
            let mut j = 0;
            while j < n {
                idx[j] += 1;
                if idx[j] < MOMENT_NODES {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == n {
                break;
            }
        }
        self.m0 = m0;
        self.m1 = m1;
        self.m2 = m2;
    }

    /// Mean and lower Cholesky factor of the covariance of ΔY given the
    /// mid-step state.
    fn output_law(&self, rho_a: &Operator, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.channels();
        let tr = self.gram.apply(&hvec(rho_a));
        let z0 = dot(&self.m0, &tr);
        if !(z0 > 0.0) || !z0.is_finite() {
            return Err(Error::NonPositiveNormalization { t, c: z0 });
        }
        let mean: Vec<f64> = self.m1.iter().map(|c| dot(c, &tr) / z0).collect();
        let mut cov: Vec<f64> = (0..n * n).map(|ik| dot(&self.m2[ik], &tr) / z0 - mean[ik / n] * mean[ik % n]).collect();
        // Cholesky in place, lower triangle.
        for j in 0..n {
            let mut s = cov[j * n + j];
            for k in 0..j {
                s -= cov[j * n + k] * cov[j * n + k];
            }
            if !(s > 0.0) {
                return Err(Error::Contract(format!("output covariance lost positivity at t = {t}")));
            }
            let dj = libm::sqrt(s);
            cov[j * n + j] = dj;
            for i in j + 1..n {
                let mut s = cov[i * n + j];
                for k in 0..j {
                    s -= cov[i * n + k] * cov[j * n + k];
                }
                cov[i * n + j] = s / dj;
            }
            for k in j + 1..n {
                cov[j * n + k] = 0.0;
            }
        }
        Ok((mean, cov))
    }

    fn kraus(&self, dy: &[f64]) -> Operator {
        let mut mm = Operator::zeros(self.terms[0].dim());
        for (u, t) in self.weights(dy).iter().zip(&self.terms) {
            if *u != 0.0 {
                mm.axpy(C64::new(*u, 0.0), t);
            }
        }
        mm
    }

    fn means(&self, rho: &Operator) -> Vec<C64> {
        self.z.iter().map(|z| z.trace_product(rho)).collect()
    }
}

/// Operators of the explicit Milstein step of the linear filter.
struct LinearOps {
    b: Vec<Operator>,
    var: Vec<f64>,
    liouvillian: Superop,
}

impl LinearOps {
    fn new(m: &MeasurementModel, cell: usize, dt: f64) -> Self {
        let b = m.diffusive.iter().map(|c| c.z.scale(C64::new(1.0, 0.0) / c.f_at(cell))).collect();
        let var = m.diffusive.iter().map(|c| c.f_at(cell).norm_sqr() * dt).collect();
        Self { b, var, liouvillian: m.liouvillian(cell) }
    }

    /// 𝔅_j(φ) = B_jφ + φB_j†.
    fn b_map(&self, j: usize, phi: &Operator) -> Operator {
        let left = self.b[j].matmul(phi);
        let right = self.b[j].matmul(&phi.adjoint()).adjoint();
        left + right
    }

    fn step(&self, phi: &Operator, dt: f64, dy: &[f64]) -> Operator {
        let mut out = phi.clone();
        out.axpy(C64::new(dt, 0.0), &self.liouvillian.apply(phi));
        let first: Vec<Operator> = (0..self.b.len()).map(|j| self.b_map(j, phi)).collect();
        for (j, bj) in first.iter().enumerate() {
            out.axpy(C64::new(dy[j], 0.0), bj);
        }
        for j in 0..self.b.len() {
            for l in 0..self.b.len() {
                let w = 0.5 * (dy[j] * dy[l] - if j == l { self.var[j] } else { 0.0 });
                if w != 0.0 {
                    out.axpy(C64::new(w, 0.0), &self.b_map(l, &first[j]));
                }
            }
        }
        out
    }
}

/// Hermitizes and rescales to unit trace.
fn renormalize(mut x: Operator, t: f64) -> Result<Operator> {
    x.hermitize_in_place();
    let tr = x.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::NonPositiveNormalization { t, c: tr });
    }
    x.scale_in_place(C64::new(1.0 / tr, 0.0));
    Ok(x)
}

fn check_dy(m: &MeasurementModel, dy: &[f64]) -> Result<()> {
    if dy.len() != m.diffusive.len() {
        return Err(Error::DimensionMismatch { expected: m.diffusive.len(), found: dy.len() });
    }
    if dy.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("output increments must be finite".into()));
    }
    Ok(())
}

fn check_leakage(m: &MeasurementModel, rho: &Operator, t: f64) -> Result<()> {
    if m.leakage_levels == 0 {
        return Ok(());
    }
    let n = m.dim;
    let pop: f64 = (n.saturating_sub(m.leakage_levels)..n).map(|k| rho.get(k, k).re).sum();
    if pop > LEAKAGE_LIMIT {
        return Err(Error::Leakage { t, population: pop });
    }
    Ok(())
}

/// One step of the nonlinear diffusive filter driven by output increments dY,
/// renormalized and Hermitized.
pub fn diffusive_step(m: &MeasurementModel, rho: &StateMatrix, t: f64, dt: f64, dy: &[f64], tol: &Tolerances) -> Result<StateMatrix> {
    m.require(Mode::Diffusive)?;
    check_dy(m, dy)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let ops = StepOps::new(m, m.cell(t), dt)?;
    let mid = ops.half.apply(&rho.op).sandwich(&ops.kraus(dy));
    let out = renormalize(ops.half.apply(&mid), t + dt)?;
    let floor = spectral_floor(&out, tol)?;
    if floor < -tol.psd {
        return Err(Error::Positivity { t: t + dt, min_eigenvalue: floor });
    }
    Ok(StateMatrix { op: out, normalized: true })
}

/// Trajectory engine for diffusive detection.
pub struct DiffusiveEngine<'m> {
    model: &'m MeasurementModel,
    grid: TimeGrid,
    cfg: DiffusiveConfig,
    ops: Vec<StepOps>,
    cell_map: Vec<usize>,
}

impl<'m> DiffusiveEngine<'m> {
    pub fn new(model: &'m MeasurementModel, grid: TimeGrid, cfg: DiffusiveConfig) -> Result<Self> {
        model.validate()?;
        model.require(Mode::Diffusive)?;
        if !model.is_autonomous() && grid.refinement_of(&model.grid).is_none() {
            return Err(Error::InvalidParameter("simulation grid must refine the model schedule grid".into()));
        }
        let mut ops: Vec<StepOps> = Vec::new();
        let mut seen: Vec<(usize, usize)> = Vec::new();
        let mut cell_map = Vec::with_capacity(grid.steps);
        for i in 0..grid.steps {
            let mc = model.cell(0.5 * (grid.time(i) + grid.time(i + 1)));
            let seg = model.segment(mc);
            let idx = match seen.iter().find(|(s, _)| *s == seg) {
                Some((_, idx)) => *idx,
                None => {
                    ops.push(StepOps::new(model, mc, grid.dt())?);
                    seen.push((seg, ops.len() - 1));
                    ops.len() - 1
                }
            };
            cell_map.push(idx);
        }
        Ok(Self { model, grid, cfg, ops, cell_map })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Simulates the physical output law. To leading order dY_j =
    /// 2Re(f_j*⟨Z_j⟩)dt + dM_j with dM_j ~ N(0, |f_j|²dt); the innovation dM
    /// is centred on the exact conditional mean of the step.
    pub fn simulate<R: Rng + ?Sized>(&self, rho0: &StateMatrix, rng: &mut R) -> Result<(DiffusiveRecord, Option<OutputPath>)> {
        self.run(rho0, Source::Innovations(rng))
    }

    /// Runs the filter along a supplied output path.
    pub fn replay(&self, rho0: &StateMatrix, path: &OutputPath) -> Result<DiffusiveRecord> {
        if path.dy.len() != self.grid.steps {
            return Err(Error::DimensionMismatch { expected: self.grid.steps, found: path.dy.len() });
        }
        let src: Source<'_, rand_chacha::ChaCha8Rng> = Source::Path(path);
        Ok(self.run(rho0, src)?.0)
    }

    fn run<R: Rng + ?Sized>(&self, rho0: &StateMatrix, mut src: Source<'_, R>) -> Result<(DiffusiveRecord, Option<OutputPath>)> {
        rho0.op.check_dim(self.model.dim)?;
        let tol = self.cfg.tol;
        let nch = self.model.diffusive.len();
        let stride = self.cfg.snapshot_every.max(1);
        let mut rho = rho0.op.scale_real(1.0 / rho0.trace());
        let mut y = vec![0.0; nch];
        let mut mart = vec![0.0; nch];
        let mut dy = vec![0.0; nch];
        let mut dm = vec![0.0; nch];
        let mut path_dy = Vec::new();
        let mut path_dm = Vec::new();
        let mut snapshots = Vec::new();
        let mut clipped = 0usize;

        let snap = |i: usize, rho: &Operator, y: &[f64], mart: &[f64], ops: &StepOps| DiffusiveSnapshot {
            index: i,
            t: self.grid.time(i),
            state: self.cfg.record_states.then(|| rho.clone()),
            y: y.to_vec(),
            m: mart.to_vec(),
            z_mean: ops.means(rho),
            purity: purity(rho),
        };
        snapshots.push(snap(0, &rho, &y, &mart, &self.ops[self.cell_map[0]]));
        // The loop carries the state half a drift step past the grid point.
        let mut mid = renormalize(self.ops[self.cell_map[0]].half.apply(&rho), self.grid.t0)?;

        for i in 0..self.grid.steps {
            let t = self.grid.time(i);
            let ops = &self.ops[self.cell_map[i]];
            let (mean, chol) = ops.output_law(&mid, t)?;
            match &mut src {
                Source::Innovations(rng) => {
                    let g: Vec<f64> = (0..nch).map(|_| rng.sample(StandardNormal)).collect();
                    for j in 0..nch {
                        dm[j] = (0..=j).map(|k| chol[j * nch + k] * g[k]).sum();
                        dy[j] = mean[j] + dm[j];
                    }
                }
                Source::Path(p) => {
                    for j in 0..nch {
                        dy[j] = p.dy[i][j];
                        dm[j] = dy[j] - mean[j];
                    }
                }
            }
            for j in 0..nch {
                y[j] += dy[j];
                mart[j] += dm[j];
            }
            let kicked = mid.sandwich(&ops.kraus(&dy));
            let idx = i + 1;
            let is_snap = idx % stride == 0 || idx == self.grid.steps;
            let same_next = idx < self.grid.steps && self.cell_map[idx] == self.cell_map[i];
            let mut next = if is_snap || !same_next {
                renormalize(ops.half.apply(&kicked), t + self.grid.dt())?
            } else {
                renormalize(ops.full.apply(&kicked), t + self.grid.dt())?
            };
            let full_check = is_snap || (self.cfg.positivity_every > 0 && idx % self.cfg.positivity_every == 0);
            let diag_bad = (0..self.model.dim).any(|k| next.get(k, k).re < -tol.psd);
            if diag_bad || full_check {
                let floor = spectral_floor(&next, &tol)?;
                if floor < -tol.psd {
                    if self.cfg.clip_negative {
                        next = clip_to_psd(&next);
                        clipped += 1;
                    } else {
                        return Err(Error::Positivity { t: self.grid.time(idx), min_eigenvalue: floor });
                    }
                }
            }
            check_leakage(self.model, &next, self.grid.time(idx))?;
            if self.cfg.record_path {
                path_dy.push(dy.clone());
                path_dm.push(dm.clone());
            }
            if is_snap || !same_next {
                rho = next;
                if is_snap {
                    snapshots.push(snap(idx, &rho, &y, &mart, ops));
                }
                if idx < self.grid.steps {
                    mid = renormalize(self.ops[self.cell_map[idx]].half.apply(&rho), self.grid.time(idx))?;
                }
            } else {
                mid = next;
            }
        }
        let record = DiffusiveRecord { grid: self.grid, snapshots, clipped_steps: clipped, seed: 0, stream: 0 };
        let path = self.cfg.record_path.then_some(OutputPath { grid: self.grid, dy: path_dy, dm: path_dm, complex_pairs: self.model.complex_pairs });
        Ok((record, path))
    }
}

enum Source<'p, R: ?Sized> {
    Innovations(&'p mut R),
    Path(&'p OutputPath),
}

/// Convenience wrapper with default settings.
pub fn simulate_diffusive_trajectory<R: Rng + ?Sized>(
    m: &MeasurementModel,
    rho0: &StateMatrix,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<(DiffusiveRecord, OutputPath)> {
    let (rec, path) = DiffusiveEngine::new(m, *grid, DiffusiveConfig::default())?.simulate(rho0, rng)?;
    Ok((rec, path.expect("path recording is on by default")))
}

/// Linear filter along `path`. Returns (times, φ, c) every `stride` steps.
pub fn linear_diffusive_evolve(
    m: &MeasurementModel,
    phi0: &StateMatrix,
    path: &OutputPath,
    stride: usize,
) -> Result<(Vec<f64>, Vec<Operator>, Vec<f64>)> {
    m.require(Mode::Diffusive)?;
    phi0.op.check_dim(m.dim)?;
    let grid = path.grid;
    let dt = grid.dt();
    let stride = stride.max(1);
    let mut cache: Vec<(usize, LinearOps)> = Vec::new();
    let mut phi = phi0.op.clone();
    let (mut ts, mut phis, mut cs) = (vec![grid.t0], vec![phi.clone()], vec![phi.trace().re]);
    for i in 0..grid.steps {
        let t = grid.time(i);
        let cell = m.cell(0.5 * (t + grid.time(i + 1)));
        let seg = m.segment(cell);
        let pos = match cache.iter().position(|(s, _)| *s == seg) {
            Some(p) => p,
            None => {
                cache.push((seg, LinearOps::new(m, cell, dt)));
                cache.len() - 1
            }
        };
        check_dy(m, &path.dy[i])?;
        phi = cache[pos].1.step(&phi, dt, &path.dy[i]);
        let c = phi.trace().re;
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositiveNormalization { t: t + dt, c });
        }
        if (i + 1) % stride == 0 || i + 1 == grid.steps {
            ts.push(grid.time(i + 1));
            phis.push(phi.clone());
            cs.push(c);
        }
    }
    Ok((ts, phis, cs))
}

/// One Milstein step of the a-posteriori Schrödinger equation for diffusive
/// detection, renormalized. Requires a Hamiltonian ℒ₀.
pub fn pure_diffusive_step(m: &MeasurementModel, psi: &PureState, t: f64, dt: f64, dy: &[f64]) -> Result<PureState> {
    m.require(Mode::Diffusive)?;
    check_dy(m, dy)?;
    if !m.dissipators.is_empty() {
        return Err(Error::Contract("pure-state unravelling needs a Hamiltonian free dynamics".into()));
    }
    let cell = m.cell(t);
    let v = psi.amplitudes();
    let n = v.len();
    let chans: &[DiffusiveChannel] = &m.diffusive;
    let zs: Vec<Vec<C64>> = chans.iter().map(|c| c.z.apply(v)).collect();
    let means: Vec<C64> = zs.iter().map(|zv| inner(v, zv)).collect();
    let fs: Vec<C64> = chans.iter().map(|c| c.f_at(cell)).collect();

    // Drift −{iH + ½Σ[Z†Z − 2⟨Z†⟩Z + |⟨Z⟩|²]}ψ.
    let hv = m.hamiltonian_at(cell).apply(v);
    let mut out: Vec<C64> = (0..n).map(|k| v[k] - C64::new(0.0, dt) * hv[k]).collect();
    for (j, ch) in chans.iter().enumerate() {
        let zdz = ch.z.adjoint().apply(&zs[j]);
        let zm = means[j];
        for k in 0..n {
            out[k] -= (zdz[k] - zs[j][k] * zm.conj() * 2.0 + v[k] * zm.norm_sqr()) * (0.5 * dt);
        }
    }
    // b_j = (1/f_j)(Z_j − ⟨Z_j⟩)ψ, driven by the innovation increment.
    let b: Vec<Vec<C64>> = (0..chans.len()).map(|j| (0..n).map(|k| (zs[j][k] - v[k] * means[j]) / fs[j]).collect()).collect();
    let innov: Vec<f64> = (0..chans.len()).map(|j| dy[j] - 2.0 * (fs[j].conj() * means[j]).re * dt).collect();
    for j in 0..chans.len() {
        for k in 0..n {
            out[k] += b[j][k] * innov[j];
        }
    }
    // ½ΣΣ (b_l·∇)b_j (ΔM_jΔM_l − δ_jl|f_j|²dt).
    for j in 0..chans.len() {
        for l in 0..chans.len() {
            let w = 0.5 * (innov[j] * innov[l] - if j == l { fs[j].norm_sqr() * dt } else { 0.0 });
            if w == 0.0 {
                continue;
            }
            let zb = chans[j].z.apply(&b[l]);
            let dmean = inner(&b[l], &zs[j]) + inner(v, &zb);
            for k in 0..n {
                let d = (zb[k] - b[l][k] * means[j] - v[k] * dmean) / fs[j];
                out[k] += d * w;
            }
        }
    }
    PureState::new(out)
}

/// Replaces each diffusive channel Z_j by the pair (Z_j, 1), (Z_j, i).
pub fn complexify_channels(m: &MeasurementModel) -> Result<MeasurementModel> {
    m.require(Mode::Diffusive)?;
    let mut out = m.clone();
    out.diffusive = m
        .diffusive
        .iter()
        .flat_map(|c| [DiffusiveChannel::new(c.z.clone(), C64::new(1.0, 0.0)), DiffusiveChannel::new(c.z.clone(), C64::new(0.0, 1.0))])
        .collect();
    out.complex_pairs = true;
    Ok(out)
}

/// Exact expectation of the nonlinear step over its sampled output law, by
/// Gauss–Hermite quadrature (single-channel models only).
pub fn expected_step_single_channel(m: &MeasurementModel, rho: &StateMatrix, t: f64, dt: f64, nodes: usize) -> Result<Operator> {
    m.require(Mode::Diffusive)?;
    if m.diffusive.len() != 1 {
        return Err(Error::InvalidParameter("quadrature expectation supports one channel".into()));
    }
    let ops = StepOps::new(m, m.cell(t), dt)?;
    let mid = renormalize(ops.half.apply(&rho.op), t)?;
    let (mean, chol) = ops.output_law(&mid, t)?;
    let (x, w) = crate::stats::gauss_hermite(nodes);
    let sd = chol[0] * core::f64::consts::SQRT_2;
    let norm = 1.0 / libm::sqrt(core::f64::consts::PI);
    let mut acc = Operator::zeros(m.dim);
    for (xi, wi) in x.iter().zip(&w) {
        let kicked = mid.sandwich(&ops.kraus(&[mean[0] + sd * xi]));
        let step = renormalize(ops.half.apply(&kicked), t + dt)?;
        acc.axpy(C64::new(wi * norm, 0.0), &step);
    }
    Ok(acc)
}
