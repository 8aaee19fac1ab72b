//! Measurement models, Liouvillians and the a-priori master equation.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{spectral_floor, LinearMap, Operator, Propagator, StateMatrix, Superop, Tolerances};

/// Uniform grid t0 < t0 + Δ < … < t1 with `steps` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidParameter(format!("grid requires t0 < t1, got [{t0}, {t1}]")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn dt(&self) -> f64 {
        self.span() / self.steps as f64
    }

    /// Grid point i, exact at both ends.
    pub fn time(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.t1
        } else {
            self.t0 + self.span() * (i as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Index of the cell [t_i, t_{i+1}) containing t, clamped to the grid.
    pub fn cell_of(&self, t: f64) -> usize {
        let x = (t - self.t0) / self.dt();
        if !(x > 0.0) {
            return 0;
        }
        let mut i = libm::floor(x) as usize;
        // Guard against t sitting a rounding error below a grid point.
        if i < self.steps && self.time(i + 1) <= t {
            i += 1;
        }
        i.min(self.steps - 1)
    }

    /// Same span with each cell split into `factor` cells.
    pub fn refine(&self, factor: usize) -> Self {
        Self { t0: self.t0, t1: self.t1, steps: self.steps * factor.max(1) }
    }

    /// Grid with spacing as close as possible to `dt` (never coarser).
    pub fn with_dt(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        let n = libm::ceil((t1 - t0) / dt - 1e-9).max(1.0) as usize;
        Self::new(t0, t1, n)
    }

    /// If `self` refines `coarse` by an integer factor, returns it.
    pub fn refinement_of(&self, coarse: &TimeGrid) -> Option<usize> {
        let same = (self.t0 - coarse.t0).abs() <= 1e-12 * coarse.span() && (self.t1 - coarse.t1).abs() <= 1e-12 * coarse.span();
        if same && self.steps.is_multiple_of(coarse.steps) {
            Some(self.steps / coarse.steps)
        } else {
            None
        }
    }
}

/// Value that is either constant or piecewise-constant on the model grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    /// One value per grid cell.
    Piecewise(Vec<T>),
}

impl<T> Schedule<T> {
    pub fn at(&self, cell: usize) -> &T {
        match self {
            Self::Constant(v) => v,
            Self::Piecewise(v) => &v[cell.min(v.len() - 1)],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    pub fn values(&self) -> &[T] {
        match self {
            Self::Constant(v) => core::slice::from_ref(v),
            Self::Piecewise(v) => v,
        }
    }

    fn check_len(&self, steps: usize, what: &str) -> Result<()> {
        match self {
            Self::Piecewise(v) if v.len() != steps => Err(Error::InvalidParameter(format!(
                "{what} schedule has {} values for {steps} grid cells",
                v.len()
            ))),
            Self::Piecewise(v) if v.is_empty() => Err(Error::InvalidParameter(format!("{what} schedule is empty"))),
            _ => Ok(()),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Schedule<U> {
        match self {
            Self::Constant(v) => Schedule::Constant(f(v)),
            Self::Piecewise(v) => Schedule::Piecewise(v.iter().map(f).collect()),
        }
    }
}

/// Completely positive map 𝒥ρ = Σ_k K_k ρ K_k†.
#[derive(Clone, Debug, PartialEq)]
pub struct CountingChannel {
    pub kraus: Schedule<Vec<Operator>>,
    pub label: usize,
}

impl CountingChannel {
    pub fn new(label: usize, kraus: Vec<Operator>) -> Self {
        Self { kraus: Schedule::Constant(kraus), label }
    }

    pub fn single(label: usize, k: Operator) -> Self {
        Self::new(label, alloc::vec![k])
    }

    pub fn kraus_at(&self, cell: usize) -> &[Operator] {
        self.kraus.at(cell)
    }

    /// R = Σ K†K on the given cell.
    pub fn rate_operator(&self, cell: usize) -> Operator {
        let ks = self.kraus_at(cell);
        let mut r = Operator::zeros(ks[0].dim());
        for k in ks {
            r += &k.adjoint().matmul(k);
        }
        r
    }

    /// 𝒥ρ.
    pub fn apply(&self, rho: &Operator, cell: usize) -> Operator {
        let mut out = Operator::zeros(rho.dim());
        for k in self.kraus_at(cell) {
            out += &rho.sandwich(k);
        }
        out
    }

    /// Tr{𝒥ρ} = Tr{Rρ}.
    pub fn rate(&self, rho: &Operator, cell: usize) -> f64 {
        self.kraus_at(cell).iter().map(|k| k.matmul(rho).trace_product(&k.adjoint()).re).sum()
    }
}

/// Diffusive detector (Z_j, f_j): output dY = 2Re(f*⟨Z⟩)dt + dM, E dM² = |f|²dt.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusiveChannel {
    pub z: Operator,
    pub f: Schedule<C64>,
}

impl DiffusiveChannel {
    pub fn new(z: Operator, f: C64) -> Self {
        Self { z, f: Schedule::Constant(f) }
    }

    pub fn f_at(&self, cell: usize) -> C64 {
        *self.f.at(cell)
    }
}

/// Which detection family a model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Counting,
    Diffusive,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Counting => "counting",
            Self::Diffusive => "diffusive",
        }
    }
}

/// Smallest admissible |f_j(t)|.
pub const F_MIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub dim: usize,
    pub hamiltonian: Schedule<Operator>,
    /// Unobserved channels: part of ℒ₀, never recorded.
    pub dissipators: Vec<CountingChannel>,
    pub counting: Vec<CountingChannel>,
    pub diffusive: Vec<DiffusiveChannel>,
    pub grid: TimeGrid,
    /// Number of top basis levels whose population is monitored for
    /// truncation leakage (0 disables the monitor).
    pub leakage_levels: usize,
    /// Diffusive channels come in (Z, 1), (Z, i) pairs forming complex outputs.
    pub complex_pairs: bool,
}

impl MeasurementModel {
    /// Hamiltonian-only model with no channels.
    pub fn hamiltonian_only(h: Operator, grid: TimeGrid) -> Self {
        Self {
            dim: h.dim(),
            hamiltonian: Schedule::Constant(h),
            dissipators: Vec::new(),
            counting: Vec::new(),
            diffusive: Vec::new(),
            grid,
            leakage_levels: 0,
            complex_pairs: false,
        }
    }

    pub fn with_dissipator(mut self, ch: CountingChannel) -> Self {
        self.dissipators.push(ch);
        self
    }

    pub fn with_counting(mut self, ch: CountingChannel) -> Self {
        self.counting.push(ch);
        self
    }

    pub fn with_diffusive(mut self, ch: DiffusiveChannel) -> Self {
        self.diffusive.push(ch);
        self
    }

    /// Checks dimensions, schedule lengths, Hermiticity of H and |f| > 0.
    pub fn validate(&self) -> Result<()> {
        let steps = self.grid.steps;
        self.hamiltonian.check_len(steps, "hamiltonian")?;
        for h in self.hamiltonian.values() {
            h.check_dim(self.dim)?;
            let dev = h.hermiticity_deviation();
            if dev > 1e-12 * h.max_abs().max(1.0) {
                return Err(Error::NotHermitian { deviation: dev });
            }
        }
        for ch in self.dissipators.iter().chain(&self.counting) {
            ch.kraus.check_len(steps, "kraus")?;
            for ks in ch.kraus.values() {
                if ks.is_empty() {
                    return Err(Error::InvalidParameter(format!("channel {} has no Kraus factors", ch.label)));
                }
                for k in ks {
                    k.check_dim(self.dim)?;
                }
            }
        }
        for (j, ch) in self.diffusive.iter().enumerate() {
            ch.z.check_dim(self.dim)?;
            ch.f.check_len(steps, "f")?;
            for f in ch.f.values() {
                if !(f.norm() >= F_MIN) {
                    return Err(Error::InvalidParameter(format!("diffusive channel {j} has |f| = {} below {F_MIN}", f.norm())));
                }
            }
        }
        if self.complex_pairs && !self.diffusive.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter("complexified model needs an even number of diffusive channels".into()));
        }
        Ok(())
    }

    /// Detection family; errors when both families are present.
    pub fn mode(&self) -> Result<Mode> {
        match (self.counting.is_empty(), self.diffusive.is_empty()) {
            (_, true) => Ok(Mode::Counting),
            (true, false) => Ok(Mode::Diffusive),
            (false, false) => Err(Error::InvalidParameter("model mixes counting and diffusive detection".into())),
        }
    }

    pub fn require(&self, mode: Mode) -> Result<()> {
        let found = self.mode()?;
        if found == mode || (mode == Mode::Diffusive && self.counting.is_empty()) {
            Ok(())
        } else {
            Err(Error::ModeMismatch { required: mode.name(), found: found.name() })
        }
    }

    pub fn cell(&self, t: f64) -> usize {
        self.grid.cell_of(t)
    }

    /// True when all time-dependent data are constant.
    pub fn is_autonomous(&self) -> bool {
        self.hamiltonian.is_constant()
            && self.dissipators.iter().chain(&self.counting).all(|c| c.kraus.is_constant())
            && self.diffusive.iter().all(|c| c.f.is_constant())
    }

    /// Schedule segment that holds on `cell` (0 for autonomous models).
    pub fn segment(&self, cell: usize) -> usize {
        if self.is_autonomous() {
            0
        } else {
            cell
        }
    }

    pub fn hamiltonian_at(&self, cell: usize) -> &Operator {
        self.hamiltonian.at(cell)
    }

    /// ℒ₀: Hamiltonian part plus unobserved dissipators.
    pub fn free_superop(&self, cell: usize) -> Superop {
        let mut s = Superop::zero(self.dim);
        s.add_hamiltonian(self.hamiltonian_at(cell));
        for ch in &self.dissipators {
            for k in ch.kraus_at(cell) {
                s.add_dissipator(k);
            }
        }
        s
    }

    /// Full Liouvillian ℒ on the given cell.
    pub fn liouvillian(&self, cell: usize) -> Superop {
        let mut s = self.free_superop(cell);
        for ch in &self.counting {
            for k in ch.kraus_at(cell) {
                s.add_dissipator(k);
            }
        }
        for ch in &self.diffusive {
            s.add_dissipator(&ch.z);
        }
        s
    }

    /// No-count generator 𝒜 = ℒ₀ − ½Σ{R_j, ·} over observed channels.
    pub fn no_count_superop(&self, cell: usize) -> Result<Superop> {
        self.require(Mode::Counting)?;
        let mut s = self.free_superop(cell);
        for ch in &self.counting {
            let r = ch.rate_operator(cell);
            s.add_anticommutator(C64::new(-0.5, 0.0), &r);
        }
        Ok(s)
    }

    /// Total observed rate operator Σ_j R_j.
    pub fn total_rate_operator(&self, cell: usize) -> Operator {
        let mut r = Operator::zeros(self.dim);
        for ch in &self.counting {
            r += &ch.rate_operator(cell);
        }
        r
    }

    /// Operators appearing in ℒ₀ as unobserved Kraus factors.
    pub fn unobserved_kraus(&self, cell: usize) -> Vec<&Operator> {
        self.dissipators.iter().flat_map(|c| c.kraus_at(cell).iter()).collect()
    }
}

/// R_j(t) = Σ K†K.
pub fn rate_operator(ch: &CountingChannel, m: &MeasurementModel, t: f64) -> Operator {
    ch.rate_operator(m.cell(t))
}

/// ℒ(t)ρ.
pub fn liouvillian_apply(m: &MeasurementModel, rho: &Operator, t: f64) -> Result<Operator> {
    rho.check_dim(m.dim)?;
    Ok(m.liouvillian(m.cell(t)).apply(rho))
}

/// 𝒜(t)ρ = ℒ(t)ρ − Σ_j 𝒥_j(t)ρ over observed channels.
pub fn no_count_generator(m: &MeasurementModel, rho: &Operator, t: f64) -> Result<Operator> {
    rho.check_dim(m.dim)?;
    Ok(m.no_count_superop(m.cell(t))?.apply(rho))
}

/// Propagates x over [ta, tb] under a generator that is piecewise-constant on
/// the model grid.
pub fn propagate_piecewise(
    m: &MeasurementModel,
    x: &Operator,
    ta: f64,
    tb: f64,
    mut generator: impl FnMut(usize) -> Result<Superop>,
) -> Result<Operator> {
    let mut y = x.clone();
    let mut t = ta;
    while t < tb {
        let cell = m.cell(t);
        let end = m.grid.time(cell + 1).min(tb);
        let end = if end <= t { tb } else { end };
        let g = generator(cell)?;
        y = crate::hilbert::expm_propagate(&g, &y, end - t)?;
        t = end;
    }
    Ok(y)
}

/// Caches propagators keyed by (schedule segment, interval length).
pub(crate) struct PropagatorCache {
    entries: Vec<(usize, u64, Propagator)>,
}

impl PropagatorCache {
    pub(crate) fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub(crate) fn get(
        &mut self,
        segment: usize,
        dt: f64,
        build: impl FnOnce() -> Result<Superop>,
    ) -> Result<&Propagator> {
        let key = dt.to_bits();
        if let Some(pos) = self.entries.iter().position(|(s, d, _)| *s == segment && *d == key) {
            return Ok(&self.entries[pos].2);
        }
        let p = Propagator::new(&build()?, dt)?;
        if self.entries.len() >= 64 {
            self.entries.remove(0);
        }
        self.entries.push((segment, key, p));
        Ok(&self.entries.last().expect("just pushed").2)
    }
}

/// Propagates with cached per-segment propagators; splits at model cell boundaries.
pub(crate) fn propagate_cached(
    m: &MeasurementModel,
    cache: &mut PropagatorCache,
    x: &Operator,
    ta: f64,
    tb: f64,
    generator: &dyn Fn(usize) -> Result<Superop>,
) -> Result<Operator> {
    let mut y = x.clone();
    let mut t = ta;
    while t < tb {
        let cell = m.cell(t);
        let end = m.grid.time(cell + 1).min(tb);
        let end = if end <= t { tb } else { end };
        let p = cache.get(m.segment(cell), end - t, || generator(cell))?;
        y = p.apply(&y);
        t = end;
    }
    if !y.is_finite() {
        return Err(Error::NumericalOverflow { context: "piecewise propagation", t: tb });
    }
    Ok(y)
}

/// A-priori states σ(t) on `grid` from σ(t0) = ρ0, under the full Liouvillian.
pub fn master_evolve(m: &MeasurementModel, rho0: &StateMatrix, grid: &TimeGrid, tol: &Tolerances) -> Result<Vec<StateMatrix>> {
    rho0.op.check_dim(m.dim)?;
    if !rho0.normalized {
        return Err(Error::Contract("master_evolve needs a normalized initial state".into()));
    }
    let mut cache = PropagatorCache::new();
    let mut out = Vec::with_capacity(grid.steps + 1);
    let mut rho = rho0.op.clone();
    out.push(rho0.clone());
    let gen = |cell: usize| Ok(m.liouvillian(cell));
    for i in 0..grid.steps {
        let (ta, tb) = (grid.time(i), grid.time(i + 1));
        rho = propagate_cached(m, &mut cache, &rho, ta, tb, &gen)?;
        rho.hermitize_in_place();
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > tol.trace {
            return Err(Error::TraceDrift { t: tb, trace: tr });
        }
        let floor = spectral_floor(&rho, tol)?;
        if floor < -tol.psd * tr {
            return Err(Error::Positivity { t: tb, min_eigenvalue: floor });
        }
        out.push(StateMatrix { op: rho.clone(), normalized: true });
    }
    Ok(out)
}

/// Stationary state of ℒ on `cell`: normalized null vector of the superoperator.
pub fn stationary_state(m: &MeasurementModel, cell: usize) -> Result<Operator> {
    let n = m.dim;
    let l = m.liouvillian(cell).to_matrix();
    // Replace one equation by the trace condition and solve.
    let nn = n * n;
    let mut a = nalgebra::DMatrix::from_fn(nn, nn, |i, j| l.get(i, j));
    let mut b = nalgebra::DVector::from_element(nn, C64::new(0.0, 0.0));
    for j in 0..nn {
        a[(0, j)] = C64::new(0.0, 0.0);
    }
    for k in 0..n {
        a[(0, k * n + k)] = C64::new(1.0, 0.0);
    }
    b[0] = C64::new(1.0, 0.0);
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Contract("Liouvillian has no unique stationary state".into()))?;
    let mut rho = Operator::from_row_major(n, sol.iter().copied().collect())?;
    rho.hermitize_in_place();
    Ok(rho)
}
