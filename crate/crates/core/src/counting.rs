//! Counting detection: survival laws, jump sampling, the exact
//! alternation engine, the Itô forms used for verification and the linear
//! filter that carries exclusive probability densities.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hilbert::{spectral_floor, LinearMap, Operator, Propagator, PureState, StateMatrix, Superop, Tolerances};
use crate::model::{propagate_piecewise, MeasurementModel, Mode, TimeGrid};
use crate::rng::open01;

/// Ordered count events (t_k, j_k) on (t0, horizon].
#[derive(Clone, Debug, PartialEq)]
pub struct CountRealization {
    pub t0: f64,
    pub events: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl CountRealization {
    pub fn new(t0: f64, events: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        let mut prev = t0;
        for &(t, _) in &events {
            if !(t > prev) || t > horizon {
                return Err(Error::InvalidParameter(alloc::format!(
                    "event times must be strictly increasing in ({t0}, {horizon}], got {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(Self { t0, events, horizon })
    }

    pub fn empty(t0: f64, horizon: f64) -> Self {
        Self { t0, events: Vec::new(), horizon }
    }

    /// N_j(t) for each of `channels` channels.
    pub fn counts_at(&self, t: f64, channels: usize) -> Vec<u64> {
        let mut n = vec![0u64; channels];
        for &(s, j) in &self.events {
            if s <= t {
                n[j] += 1;
            }
        }
        n
    }
}

/// Propagates φ under the no-count semigroup over [t0, t1]; returns the
/// propagated operator and the survival probability Tr φ(t1) / Tr φ(t0).
pub fn no_jump_propagate(m: &MeasurementModel, phi: &StateMatrix, t0: f64, t1: f64) -> Result<(StateMatrix, f64)> {
    m.require(Mode::Counting)?;
    phi.op.check_dim(m.dim)?;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter("no_jump_propagate needs t1 ≥ t0".into()));
    }
    let out = propagate_piecewise(m, &phi.op, t0, t1, |cell| m.no_count_superop(cell))?;
    let tr0 = phi.trace();
    let s = out.trace().re / tr0;
    const SLACK: f64 = 1e-10;
    if !(-SLACK..=1.0 + SLACK).contains(&s) {
        return Err(Error::SurvivalOutOfRange { t0, t1, value: s });
    }
    let mut op = out;
    op.hermitize_in_place();
    Ok((StateMatrix::unnormalized(op), s.clamp(0.0, 1.0)))
}

/// 𝒥_jρ / Tr{𝒥_jρ}.
pub fn jump_apply(m: &MeasurementModel, rho: &StateMatrix, t: f64, j: usize, tol: &Tolerances) -> Result<StateMatrix> {
    m.require(Mode::Counting)?;
    let ch = m.counting.get(j).ok_or_else(|| Error::InvalidParameter(alloc::format!("no counting channel {j}")))?;
    let cell = m.cell(t);
    let jumped = ch.apply(&rho.op, cell);
    let rate = jumped.trace().re / rho.trace();
    if !(rate > tol.rate) {
        return Err(Error::ZeroProbabilityJump { t, channel: j, rate });
    }
    let mut op = jumped.scale_real(1.0 / jumped.trace().re);
    op.hermitize_in_place();
    Ok(StateMatrix { op, normalized: true })
}

/// Draws a channel from the rates Tr{𝒥_j ρ}.
fn choose_channel<R: Rng + ?Sized>(rates: &[f64], t: f64, tol: &Tolerances, rng: &mut R) -> Result<usize> {
    let total: f64 = rates.iter().sum();
    if !(total > tol.rate) {
        return Err(Error::NoDetectionRate { t });
    }
    let target = open01(rng) * total;
    let mut acc = 0.0;
    let mut chosen = rates.len() - 1;
    for (j, r) in rates.iter().enumerate() {
        acc += r;
        if target < acc {
            chosen = j;
            break;
        }
    }
    // Never land on a channel whose rate vanishes because of rounding in `acc`.
    while rates[chosen] <= tol.rate && chosen > 0 {
        chosen -= 1;
    }
    Ok(chosen)
}

/// First jump after t0 for survival target `u`.
///
/// Marches the model grid, then bisects inside the bracketing cell until the
/// bracket is below `tol.time_rel · (horizon − t0)`. Returns `None` when the
/// survival at the horizon still exceeds `u`.
pub fn sample_jump<R: Rng + ?Sized>(
    m: &MeasurementModel,
    rho: &StateMatrix,
    t0: f64,
    horizon: f64,
    u: f64,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<Option<(f64, usize, StateMatrix)>> {
    m.require(Mode::Counting)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter("survival target must lie in (0, 1)".into()));
    }
    if m.counting.is_empty() || horizon <= t0 {
        return Ok(None);
    }
    let resolution = tol.time_rel * (horizon - t0);
    let mut t = t0;
    let mut phi = rho.op.scale_real(1.0 / rho.trace());
    while t < horizon {
        let cell = m.cell(t);
        let end = m.grid.time(cell + 1).min(horizon);
        let end = if end <= t { horizon } else { end };
        let gen = m.no_count_superop(cell)?;
        let next = crate::hilbert::expm_propagate(&gen, &phi, end - t)?;
        if next.trace().re > u {
            phi = next;
            t = end;
            continue;
        }
        // Survival crosses u inside (t, end]: bisect on the frozen generator.
        let (mut lo, mut hi) = (t, end);
        let mut phi_lo = phi;
        let mut phi_hi = next;
        while hi - lo > resolution {
            let mid = 0.5 * (lo + hi);
            let phi_mid = crate::hilbert::expm_propagate(&gen, &phi_lo, mid - lo)?;
            if phi_mid.trace().re > u {
                lo = mid;
                phi_lo = phi_mid;
            } else {
                hi = mid;
                phi_hi = phi_mid;
            }
        }
        let tr = phi_hi.trace().re;
        let pre = phi_hi.scale_real(1.0 / tr);
        let rates: Vec<f64> = m.counting.iter().map(|ch| ch.rate(&pre, cell)).collect();
        let j = choose_channel(&rates, hi, tol, rng)?;
        let post = jump_apply(m, &StateMatrix { op: pre, normalized: true }, hi, j, tol)?;
        return Ok(Some((hi, j, post)));
    }
    Ok(None)
}

/// Engine settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountingConfig {
    /// Time scale τ of the linear filter (c jumps by τ·rate at each count).
    pub tau: f64,
    /// Snapshot every this many grid steps (the final time is always kept).
    pub snapshot_every: usize,
    /// Store density matrices in snapshots.
    pub record_states: bool,
    /// 2^substep_level quadrature substeps per grid cell for the compensator.
    pub substep_level: u32,
    /// Check positivity of every recorded snapshot.
    pub check_positivity: bool,
    pub tol: Tolerances,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self { tau: 1.0, snapshot_every: 1, record_states: true, substep_level: 2, check_positivity: true, tol: Tolerances::default() }
    }
}

/// Count event as recorded by the engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountEvent {
    pub t: f64,
    pub channel: usize,
    /// ln c(t) right after the jump.
    pub log_c: f64,
}

/// Engine output at a grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub t: f64,
    pub state: Option<Operator>,
    /// ln c(t), with c = Tr φ of the linear filter.
    pub log_c: f64,
    /// N_j(t).
    pub counts: Vec<u64>,
    /// ∫₀ᵗ ⟨R_j⟩_s ds.
    pub compensator: Vec<f64>,
}

impl Snapshot {
    pub fn c(&self) -> f64 {
        libm::exp(self.log_c)
    }

    /// Innovating martingale M_j(t) = N_j(t) − ∫⟨R_j⟩ds.
    pub fn martingale(&self) -> Vec<f64> {
        self.counts.iter().zip(&self.compensator).map(|(n, l)| *n as f64 - l).collect()
    }
}

/// One counting trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CountingRecord {
    pub grid: TimeGrid,
    pub events: Vec<CountEvent>,
    pub snapshots: Vec<Snapshot>,
    pub tau: f64,
    pub seed: u64,
    pub stream: u64,
}

impl CountingRecord {
    pub fn total_counts(&self) -> usize {
        self.events.len()
    }

    pub fn realization(&self) -> CountRealization {
        CountRealization { t0: self.grid.t0, events: self.events.iter().map(|e| (e.t, e.channel)).collect(), horizon: self.grid.t1 }
    }

    pub fn final_state(&self) -> Option<&Operator> {
        self.snapshots.last().and_then(|s| s.state.as_ref())
    }
}

struct CellCache {
    /// props[l] = exp((Δ/2^l)·𝒜).
    props: Vec<Propagator>,
    rate_ops: Vec<Operator>,
    model_cell: usize,
}

/// Exact alternation engine.
///
/// Jump times live on a dyadic lattice with 2^K ticks per grid cell, where
/// Δ/2^K ≤ tol.time_rel · span. Every advance is a product of cached
/// propagators exp((Δ/2^l)𝒜), so the waiting-time law is exact up to the
/// tick resolution and independent of the grid.
pub struct CountingEngine<'m> {
    model: &'m MeasurementModel,
    grid: TimeGrid,
    cfg: CountingConfig,
    levels: u32,
    cells: Vec<CellCache>,
    /// Engine cell → index into `cells`.
    cell_map: Vec<usize>,
}

impl<'m> CountingEngine<'m> {
    pub fn new(model: &'m MeasurementModel, grid: TimeGrid, cfg: CountingConfig) -> Result<Self> {
        model.validate()?;
        model.require(Mode::Counting)?;
        if !model.is_autonomous() && grid.refinement_of(&model.grid).is_none() {
            return Err(Error::InvalidParameter("simulation grid must refine the model schedule grid".into()));
        }
        if !(cfg.tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        let dt = grid.dt();
        let resolution = cfg.tol.time_rel * grid.span();
        let mut levels = libm::ceil(libm::log2(dt / resolution)).max(0.0) as u32;
        levels = levels.clamp(cfg.substep_level, 52);

        let mut cells: Vec<CellCache> = Vec::new();
        let mut seg_index: Vec<(usize, usize)> = Vec::new();
        let mut cell_map = Vec::with_capacity(grid.steps);
        for i in 0..grid.steps {
            let mid = 0.5 * (grid.time(i) + grid.time(i + 1));
            let mc = model.cell(mid);
            let seg = model.segment(mc);
            let idx = match seg_index.iter().find(|(s, _)| *s == seg) {
                Some((_, idx)) => *idx,
                None => {
                    let gen = model.no_count_superop(mc)?;
                    let props = level_propagators(&gen, dt, levels)?;
                    let rate_ops = model.counting.iter().map(|ch| ch.rate_operator(mc)).collect();
                    cells.push(CellCache { props, rate_ops, model_cell: mc });
                    seg_index.push((seg, cells.len() - 1));
                    cells.len() - 1
                }
            };
            cell_map.push(idx);
        }
        Ok(Self { model, grid, cfg, levels, cells, cell_map })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn config(&self) -> &CountingConfig {
        &self.cfg
    }

    /// Lattice ticks per grid cell (2^K).
    pub fn ticks_per_cell(&self) -> u64 {
        1u64 << self.levels
    }

    fn tick_time(&self, cell: usize, tick: u64) -> f64 {
        if tick >= self.ticks_per_cell() {
            self.grid.time(cell + 1)
        } else {
            self.grid.time(cell) + self.grid.dt() * (tick as f64 / self.ticks_per_cell() as f64)
        }
    }

    /// Advances φ by `ticks` lattice ticks with the greedy dyadic decomposition.
    fn advance(&self, cache: &CellCache, phi: &Operator, ticks: u64) -> Operator {
        let mut y = phi.clone();
        let mut rem = ticks;
        while rem > 0 {
            let bit = 63 - rem.leading_zeros();
            y = cache.props[(self.levels - bit) as usize].apply(&y);
            rem -= 1u64 << bit;
        }
        y
    }

    fn rates(&self, cache: &CellCache, rho: &Operator) -> Vec<f64> {
        cache.rate_ops.iter().map(|r| r.trace_product(rho).re).collect()
    }

    /// Runs one trajectory from the normalized state ρ0.
    pub fn simulate<R: Rng + ?Sized>(&self, rho0: &StateMatrix, rng: &mut R) -> Result<CountingRecord> {
        rho0.op.check_dim(self.model.dim)?;
        let tol = self.cfg.tol;
        let nch = self.model.counting.len();
        let tpc = self.ticks_per_cell();
        let sub_ticks = tpc >> self.cfg.substep_level;
        let stride = self.cfg.snapshot_every.max(1);

        let mut events = Vec::new();
        let mut snapshots = Vec::new();
        let mut counts = vec![0u64; nch];
        let mut comp = vec![0.0f64; nch];
        // φ is unnormalized since the last jump (trace = survival); ln c at that jump.
        let mut phi = rho0.op.scale_real(1.0 / rho0.trace());
        let mut log_c_jump = 0.0f64;
        let mut u = open01(rng);

        let snap = |i: usize, phi: &Operator, log_c_jump: f64, counts: &[u64], comp: &[f64]| -> Result<Snapshot> {
            let tr = phi.trace().re;
            let t = self.grid.time(i);
            if !(tr > 0.0) {
                return Err(Error::NonPositiveNormalization { t, c: tr });
            }
            let state = if self.cfg.record_states || self.cfg.check_positivity {
                let mut rho = phi.scale_real(1.0 / tr);
                rho.hermitize_in_place();
                if self.cfg.check_positivity {
                    let floor = spectral_floor(&rho, &tol)?;
                    if floor < -tol.psd {
                        return Err(Error::Positivity { t, min_eigenvalue: floor });
                    }
                }
                self.cfg.record_states.then_some(rho)
            } else {
                None
            };
            Ok(Snapshot { index: i, t, state, log_c: log_c_jump + libm::log(tr), counts: counts.to_vec(), compensator: comp.to_vec() })
        };

        snapshots.push(snap(0, &phi, log_c_jump, &counts, &comp)?);
        let mut rates_a: Vec<f64>;

        for cell in 0..self.grid.steps {
            let cache = &self.cells[self.cell_map[cell]];
            let mut pos: u64 = 0;
            let tr = phi.trace().re;
            rates_a = self.rates(cache, &phi).into_iter().map(|r| r / tr).collect();
            while pos < tpc {
                let boundary = ((pos / sub_ticks) + 1) * sub_ticks;
                let step = boundary - pos;
                let next = self.advance(cache, &phi, step);
                let tr_a = phi.trace().re;
                let tr_b = next.trace().re;
                if !tr_b.is_finite() {
                    return Err(Error::NumericalOverflow { context: "no-count propagation", t: self.tick_time(cell, boundary) });
                }
                if nch == 0 || tr_b > u {
                    if nch > 0 {
                        let rates_b: Vec<f64> = self.rates(cache, &next).into_iter().map(|r| r / tr_b).collect();
                        let h = self.grid.dt() * (step as f64 / tpc as f64);
                        accumulate_compensator(&mut comp, &rates_a, &rates_b, h, libm::log(tr_a / tr_b));
                        rates_a = rates_b;
                    }
                    phi = next;
                    pos = boundary;
                    continue;
                }
                // Crossing in (pos, boundary]: largest offset with survival > u.
                let mut off: u64 = 0;
                let mut phi_off = phi.clone();
                let mut bit = 63 - step.leading_zeros();
                loop {
                    let cand = off + (1u64 << bit);
                    if cand < step {
                        let trial = cache.props[(self.levels - bit) as usize].apply(&phi_off);
                        if trial.trace().re > u {
                            off = cand;
                            phi_off = trial;
                        }
                    }
                    if bit == 0 {
                        break;
                    }
                    bit -= 1;
                }
                let star = cache.props[self.levels as usize].apply(&phi_off);
                let jump_tick = pos + off + 1;
                let t_star = self.tick_time(cell, jump_tick);
                let tr_star = star.trace().re;
                let pre = star.scale_real(1.0 / tr_star);
                let rates_star = self.rates(cache, &pre);
                let h = self.grid.dt() * ((jump_tick - pos) as f64 / tpc as f64);
                accumulate_compensator(&mut comp, &rates_a, &rates_star, h, libm::log(tr_a / tr_star));

                let j = choose_channel(&rates_star, t_star, &tol, rng)?;
                let rate = rates_star[j];
                if !(rate > tol.rate) {
                    return Err(Error::ZeroProbabilityJump { t: t_star, channel: j, rate });
                }
                let mut post = self.model.counting[j].apply(&pre, cache.model_cell);
                post.scale_in_place(C64::new(1.0 / post.trace().re, 0.0));
                post.hermitize_in_place();
                log_c_jump += libm::log(tr_star) + libm::log(self.cfg.tau * rate);
                counts[j] += 1;
                events.push(CountEvent { t: t_star, channel: j, log_c: log_c_jump });
                rates_a = self.rates(cache, &post);
                phi = post;
                pos = jump_tick;
                u = open01(rng);
            }
            let i = cell + 1;
            if i % stride == 0 || i == self.grid.steps {
                snapshots.push(snap(i, &phi, log_c_jump, &counts, &comp)?);
            }
        }
        Ok(CountingRecord { grid: self.grid, events, snapshots, tau: self.cfg.tau, seed: 0, stream: 0 })
    }
}

/// Splits the exact total ∫Σ⟨R_j⟩ = ln(Tr φ_a / Tr φ_b) across channels in
/// proportion to trapezoid weights.
fn accumulate_compensator(comp: &mut [f64], ra: &[f64], rb: &[f64], h: f64, exact_total: f64) {
    let trap: Vec<f64> = ra.iter().zip(rb).map(|(a, b)| 0.5 * (a + b) * h).collect();
    let s: f64 = trap.iter().sum();
    if comp.len() == 1 {
        comp[0] += exact_total.max(0.0);
    } else if s > 0.0 && exact_total.is_finite() {
        for (c, w) in comp.iter_mut().zip(&trap) {
            *c += exact_total * w / s;
        }
    } else {
        for (c, w) in comp.iter_mut().zip(&trap) {
            *c += w;
        }
    }
}

fn level_propagators(gen: &Superop, dt: f64, levels: u32) -> Result<Vec<Propagator>> {
    (0..=levels).map(|l| Propagator::new(gen, libm::ldexp(dt, -(l as i32)))).collect()
}

/// Convenience wrapper: one trajectory on `grid` with default settings.
pub fn simulate_counting_trajectory<R: Rng + ?Sized>(
    m: &MeasurementModel,
    rho0: &StateMatrix,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<CountingRecord> {
    CountingEngine::new(m, *grid, CountingConfig::default())?.simulate(rho0, rng)
}

/// One explicit Euler step of the nonlinear counting filter, renormalized.
///
/// dρ = ℒρdt + Σ_j (𝒥_jρ/⟨R_j⟩ − ρ)(dN_j − ⟨R_j⟩dt).
pub fn nonlinear_counting_step(
    m: &MeasurementModel,
    rho: &StateMatrix,
    t: f64,
    dt: f64,
    dn: &[u8],
    tol: &Tolerances,
) -> Result<StateMatrix> {
    m.require(Mode::Counting)?;
    check_increments(dn, m.counting.len())?;
    let cell = m.cell(t);
    let mut out = rho.op.clone();
    out.axpy(C64::new(dt, 0.0), &m.liouvillian(cell).apply(&rho.op));
    for (j, ch) in m.counting.iter().enumerate() {
        let jr = ch.apply(&rho.op, cell);
        let r = jr.trace().re;
        let dm = dn[j] as f64 - r * dt;
        if dn[j] == 1 && !(r > tol.rate) {
            return Err(Error::ZeroProbabilityJump { t, channel: j, rate: r });
        }
        if r > tol.rate {
            let mut term = jr.scale_real(1.0 / r);
            term -= &rho.op;
            out.axpy(C64::new(dm, 0.0), &term);
        }
    }
    out.hermitize_in_place();
    StateMatrix::unnormalized(out).normalize(t + dt)
}

fn check_increments(dn: &[u8], channels: usize) -> Result<()> {
    if dn.len() != channels {
        return Err(Error::DimensionMismatch { expected: channels, found: dn.len() });
    }
    if dn.iter().any(|&x| x > 1) || dn.iter().filter(|&&x| x == 1).count() > 1 {
        return Err(Error::Contract("count increments must be 0/1 with at most one nonzero".into()));
    }
    Ok(())
}

/// Linear filter along a given realization: 𝒜-semigroup between events,
/// φ ← τ𝒥_jφ at events. Returns φ and c = Tr φ at the grid points.
pub fn linear_counting_evolve(
    m: &MeasurementModel,
    phi0: &StateMatrix,
    realization: &CountRealization,
    tau: f64,
    grid: &TimeGrid,
) -> Result<(Vec<Operator>, Vec<f64>)> {
    m.require(Mode::Counting)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let mut phi = phi0.op.clone();
    let mut t = grid.t0;
    let mut ev = realization.events.iter().peekable();
    let mut phis = Vec::with_capacity(grid.steps + 1);
    let mut cs = Vec::with_capacity(grid.steps + 1);
    let gen = |cell: usize| m.no_count_superop(cell);
    for i in 0..=grid.steps {
        let target = grid.time(i);
        while let Some(&&(te, j)) = ev.peek() {
            if te > target {
                break;
            }
            phi = propagate_piecewise(m, &phi, t, te, gen)?;
            let ch = m.counting.get(j).ok_or_else(|| Error::InvalidParameter(alloc::format!("no counting channel {j}")))?;
            phi = ch.apply(&phi, m.cell(te)).scale_real(tau);
            t = te;
            ev.next();
        }
        phi = propagate_piecewise(m, &phi, t, target, gen)?;
        t = target;
        let c = phi.trace().re;
        if !(c > 0.0) {
            return Err(Error::NonPositiveNormalization { t, c });
        }
        phis.push(phi.clone());
        cs.push(c);
    }
    Ok((phis, cs))
}

/// One Euler step of the a-posteriori Schrödinger equation for counting,
/// renormalized. Requires a Hamiltonian ℒ₀ and single-Kraus channels.
pub fn pure_counting_step(m: &MeasurementModel, psi: &PureState, t: f64, dt: f64, dn: &[u8], tol: &Tolerances) -> Result<PureState> {
    m.require(Mode::Counting)?;
    check_increments(dn, m.counting.len())?;
    if !m.dissipators.is_empty() {
        return Err(Error::Contract("pure-state unravelling needs a Hamiltonian free dynamics".into()));
    }
    let cell = m.cell(t);
    let v = psi.amplitudes();
    let h_psi = m.hamiltonian_at(cell).apply(v);
    let mut out: Vec<C64> = v.to_vec();
    for (o, hv) in out.iter_mut().zip(&h_psi) {
        *o += C64::new(0.0, -dt) * hv;
    }
    for (j, ch) in m.counting.iter().enumerate() {
        let ks = ch.kraus_at(cell);
        if ks.len() != 1 {
            return Err(Error::Contract("pure-state unravelling needs one Kraus factor per channel".into()));
        }
        let zv = ks[0].apply(v);
        let zz: f64 = zv.iter().map(|z| z.norm_sqr()).sum();
        let zdz_v = ks[0].adjoint().apply(&zv);
        for k in 0..v.len() {
            out[k] -= (zdz_v[k] - v[k] * zz) * (0.5 * dt);
        }
        if dn[j] == 1 {
            if !(zz > tol.rate) {
                return Err(Error::ZeroProbabilityJump { t, channel: j, rate: zz });
            }
            let s = 1.0 / libm::sqrt(zz);
            for k in 0..v.len() {
                out[k] += zv[k] * s - v[k];
            }
        }
    }
    PureState::new(out)
}

/// Survival Tr{exp((t−t0)𝒜)ρ} for an autonomous model (closed-form helper for tests).
pub fn survival(m: &MeasurementModel, rho: &StateMatrix, t0: f64, t1: f64) -> Result<f64> {
    Ok(no_jump_propagate(m, rho, t0, t1)?.1)
}

