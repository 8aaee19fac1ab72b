//! Run configuration: JSON schema, validation with field paths, and
//! construction of the model, initial state and grids.

use std::fmt;
use std::path::Path;

use aposteriori_core::charfun::{CharMode, TestFunction};
use aposteriori_core::hilbert::{Operator, PureState, StateMatrix, Tolerances};
use aposteriori_core::model::{CountingChannel, DiffusiveChannel, MeasurementModel, Mode, TimeGrid};
use aposteriori_core::oracles::{OscillatorParams, TwoLevelParams};
use aposteriori_core::scaling::EPSILON_SWEEP;
use aposteriori_core::C64;
use serde::{Deserialize, Serialize};

/// A configuration problem, located by a dotted field path.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

type CfgResult<T> = Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Counting,
    Diffusive,
    Master,
    Charfun,
    Limit,
    Validate,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Counting => "counting",
            RunMode::Diffusive => "diffusive",
            RunMode::Master => "master",
            RunMode::Charfun => "charfun",
            RunMode::Limit => "limit",
            RunMode::Validate => "validate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

/// A complex number written as `x` or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> C64 {
        match self {
            Complex::Real(x) => C64::new(x, 0.0),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for Complex {
    fn from(z: C64) -> Self {
        Complex::Pair([z.re, z.im])
    }
}

impl From<f64> for Complex {
    fn from(x: f64) -> Self {
        Complex::Real(x)
    }
}

/// Rows of complex entries.
pub type Matrix = Vec<Vec<Complex>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    #[default]
    Counting,
    Diffusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Two-level atom. Counting detection records σ₋ emissions at rate λ₁;
    /// diffusive detection observes Z = √λ₁σ₋ with amplitude `f`.
    TwoLevel {
        omega: f64,
        #[serde(default)]
        lambda_plus: f64,
        #[serde(default)]
        lambda_minus: f64,
        lambda_one: f64,
        #[serde(default)]
        rabi: f64,
        #[serde(default)]
        detection: Detection,
        #[serde(default = "unit_complex")]
        f: Complex,
    },
    /// Driven damped oscillator under heterodyne detection of ηa.
    Oscillator {
        omega: f64,
        #[serde(default = "zero_complex")]
        g: Complex,
        #[serde(default)]
        g_schedule: Option<Vec<Complex>>,
        lambda_down: f64,
        #[serde(default)]
        lambda_up: f64,
        eta: Complex,
        cutoff: usize,
    },
    Custom {
        dim: usize,
        hamiltonian: Matrix,
        #[serde(default)]
        dissipators: Vec<Matrix>,
        #[serde(default)]
        counting: Vec<Matrix>,
        #[serde(default)]
        diffusive: Vec<DiffusiveSpec>,
        #[serde(default)]
        complex_pairs: bool,
    },
}

fn unit_complex() -> Complex {
    Complex::Real(1.0)
}

fn zero_complex() -> Complex {
    Complex::Real(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusiveSpec {
    pub z: Matrix,
    pub f: Complex,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// Basis vector; index 0 is the excited level of the atom and the vacuum
    /// of the oscillator.
    Basis { index: usize },
    Coherent { alpha: Complex },
    #[default]
    MaximallyMixed,
    Pure { amplitudes: Vec<Complex> },
    Density { matrix: Matrix },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub herm: Option<f64>,
    pub trace: Option<f64>,
    pub psd: Option<f64>,
    pub time_rel: Option<f64>,
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfunSpec {
    /// Per channel, either one value (constant) or one value per grid cell.
    /// Complex values select the complexified form on paired models.
    pub k: Vec<Vec<Complex>>,
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    #[serde(default = "default_sweep")]
    pub epsilons: Vec<f64>,
    /// Constant test function, one value per diffusive channel.
    pub k: Vec<f64>,
    /// Time at which the generators are compared (defaults to the midpoint).
    #[serde(default)]
    pub t: Option<f64>,
    /// Simulate the scaled counting model at this ε and compare output
    /// moments with the diffusive predictions.
    #[serde(default)]
    pub simulate_epsilon: Option<f64>,
}

fn default_sweep() -> Vec<f64> {
    EPSILON_SWEEP.to_vec()
}

fn default_one() -> u64 {
    1
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub mode: Option<RunMode>,
    pub grid: GridSpec,
    /// Simulation step; must divide the grid cell.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_one")]
    pub n_trajectories: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Snapshot stride in grid cells.
    #[serde(default = "default_stride")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub initial_state: StateSpec,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default = "default_true")]
    pub record_states: bool,
    #[serde(default)]
    pub charfun: Option<CharfunSpec>,
    #[serde(default)]
    pub limit: Option<LimitSpec>,
}

/// Everything an engine needs, built from a validated configuration.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub mode: RunMode,
    pub model: MeasurementModel,
    pub rho0: StateMatrix,
    /// Report grid (model schedule grid).
    pub grid: TimeGrid,
    /// Simulation grid: the report grid refined by `refine`.
    pub sim_grid: TimeGrid,
    pub refine: usize,
    /// Engine snapshot stride in simulation steps.
    pub stride: usize,
    pub tol: Tolerances,
    pub oscillator: Option<OscillatorParams>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CfgResult<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError::new(json_path(text, &e), e))
    }

    pub fn load(path: &Path) -> CfgResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mode(&self) -> CfgResult<RunMode> {
        self.mode.ok_or_else(|| ConfigError::new("mode", "no mode given in the config or on the command line"))
    }

    pub fn tolerances(&self) -> CfgResult<Tolerances> {
        let mut t = Tolerances::default();
        let o = &self.tolerances;
        for (name, value, slot) in [
            ("herm", o.herm, &mut t.herm),
            ("trace", o.trace, &mut t.trace),
            ("psd", o.psd, &mut t.psd),
            ("time_rel", o.time_rel, &mut t.time_rel),
            ("rate", o.rate, &mut t.rate),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::new(format!("tolerances.{name}"), "must be positive and finite"));
                }
                *slot = v;
            }
        }
        Ok(t)
    }

    pub fn grid(&self) -> CfgResult<TimeGrid> {
        let g = &self.grid;
        if g.steps == 0 {
            return Err(ConfigError::new("grid.steps", "must be at least 1"));
        }
        if !(g.t0.is_finite() && g.t1.is_finite() && g.t1 > g.t0) {
            return Err(ConfigError::new("grid.t1", "must be finite and exceed grid.t0"));
        }
        TimeGrid::new(g.t0, g.t1, g.steps).map_err(|e| ConfigError::new("grid", e))
    }

    /// Validates the whole configuration and builds the run inputs.
    pub fn prepare(&self) -> CfgResult<Prepared> {
        let mode = self.mode()?;
        if self.n_trajectories < 1 {
            return Err(ConfigError::new("n_trajectories", "must be at least 1"));
        }
        if self.snapshot_every < 1 {
            return Err(ConfigError::new("snapshot_every", "must be at least 1"));
        }
        let grid = self.grid()?;
        let tol = self.tolerances()?;
        let refine = match self.dt {
            None => 1,
            Some(dt) => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(ConfigError::new("dt", "must be positive and finite"));
                }
                let cell = grid.dt();
                let r = (cell / dt).round();
                if r < 1.0 || (r * dt - cell).abs() > 1e-9 * cell {
                    return Err(ConfigError::new("dt", format!("{dt} does not divide the grid cell {cell}")));
                }
                r as usize
            }
        };
        let (model, oscillator) = self.build_model(grid)?;
        let rho0 = self.build_state(model.dim, &tol)?;
        self.check_mode(mode, &model)?;
        if let Some(spec) = &self.charfun {
            test_function(spec, &model, grid)?;
        }
        if mode == RunMode::Charfun && self.charfun.is_none() {
            return Err(ConfigError::new("charfun", "required in charfun mode"));
        }
        if mode == RunMode::Limit {
            let spec = self.limit.as_ref().ok_or_else(|| ConfigError::new("limit", "required in limit mode"))?;
            if spec.k.len() != model.diffusive.len() {
                return Err(ConfigError::new("limit.k", format!("needs {} values, one per diffusive channel", model.diffusive.len())));
            }
            if spec.epsilons.len() < 2 || spec.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(ConfigError::new("limit.epsilons", "needs at least two positive values"));
            }
            if let Some(t) = spec.t {
                if !(t >= grid.t0 && t <= grid.t1) {
                    return Err(ConfigError::new("limit.t", "must lie on the grid span"));
                }
            }
            if let Some(e) = spec.simulate_epsilon {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(ConfigError::new("limit.simulate_epsilon", "must be positive"));
                }
            }
        }
        let sim_grid = grid.refine(refine);
        Ok(Prepared { mode, model, rho0, grid, sim_grid, refine, stride: self.snapshot_every * refine, tol, oscillator })
    }

    fn check_mode(&self, mode: RunMode, m: &MeasurementModel) -> CfgResult<()> {
        let found = m.mode().map_err(|e| ConfigError::new("model", e))?;
        let need = match mode {
            RunMode::Counting => Some(Mode::Counting),
            RunMode::Diffusive | RunMode::Limit => Some(Mode::Diffusive),
            _ => None,
        };
        match need {
            Some(n) if n != found => {
                Err(ConfigError::new("model", format!("{} mode needs a {} model, got {}", mode.name(), n.name(), found.name())))
            }
            _ => Ok(()),
        }
    }

    fn build_model(&self, grid: TimeGrid) -> CfgResult<(MeasurementModel, Option<OscillatorParams>)> {
        let nonneg = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(format!("model.{name}"), "must be non-negative and finite"))
            }
        };
        match &self.model {
            ModelSpec::TwoLevel { omega, lambda_plus, lambda_minus, lambda_one, rabi, detection, f } => {
                nonneg("lambda_plus", *lambda_plus)?;
                nonneg("lambda_minus", *lambda_minus)?;
                nonneg("lambda_one", *lambda_one)?;
                if !omega.is_finite() || !rabi.is_finite() {
                    return Err(ConfigError::new("model.omega", "must be finite"));
                }
                let p = TwoLevelParams::new(*omega, *lambda_plus, *lambda_minus, *lambda_one).map_err(|e| ConfigError::new("model", e))?;
                let mut m = p.driven_model(grid, *rabi).map_err(|e| ConfigError::new("model", e))?;
                if *detection == Detection::Diffusive {
                    let f = f.value();
                    if f.norm() == 0.0 || !f.norm().is_finite() {
                        return Err(ConfigError::new("model.f", "must be non-zero"));
                    }
                    let z = m.counting.pop().expect("atom has one counting channel").kraus_at(0)[0].clone();
                    m = m.with_diffusive(DiffusiveChannel::new(z, f));
                }
                m.validate().map_err(|e| ConfigError::new("model", e))?;
                Ok((m, None))
            }
            ModelSpec::Oscillator { omega, g, g_schedule, lambda_down, lambda_up, eta, cutoff } => {
                nonneg("lambda_down", *lambda_down)?;
                nonneg("lambda_up", *lambda_up)?;
                if *cutoff < 4 {
                    return Err(ConfigError::new("model.cutoff", "must be at least 4"));
                }
                let mut p = OscillatorParams::new(*omega, g.value(), *lambda_down, *lambda_up, eta.value(), grid)
                    .map_err(|e| ConfigError::new("model", e))?;
                if let Some(s) = g_schedule {
                    if s.len() != grid.steps {
                        return Err(ConfigError::new("model.g_schedule", format!("needs {} values, got {}", grid.steps, s.len())));
                    }
                    p = p.with_g_schedule(s.iter().map(|z| z.value()).collect()).map_err(|e| ConfigError::new("model.g_schedule", e))?;
                }
                let m = p.model(*cutoff).map_err(|e| ConfigError::new("model", e))?;
                Ok((m, Some(p)))
            }
            ModelSpec::Custom { dim, hamiltonian, dissipators, counting, diffusive, complex_pairs } => {
                if *dim < 1 {
                    return Err(ConfigError::new("model.dim", "must be at least 1"));
                }
                let h = matrix(hamiltonian, *dim, "model.hamiltonian")?;
                let mut m = MeasurementModel::hamiltonian_only(h, grid);
                for (i, k) in dissipators.iter().enumerate() {
                    m = m.with_dissipator(CountingChannel::single(i, matrix(k, *dim, &format!("model.dissipators[{i}]"))?));
                }
                for (i, k) in counting.iter().enumerate() {
                    m = m.with_counting(CountingChannel::single(i, matrix(k, *dim, &format!("model.counting[{i}]"))?));
                }
                for (i, d) in diffusive.iter().enumerate() {
                    let z = matrix(&d.z, *dim, &format!("model.diffusive[{i}].z"))?;
                    if d.f.value().norm() == 0.0 {
                        return Err(ConfigError::new(format!("model.diffusive[{i}].f"), "must be non-zero"));
                    }
                    m = m.with_diffusive(DiffusiveChannel::new(z, d.f.value()));
                }
                if *complex_pairs && diffusive.len() % 2 != 0 {
                    return Err(ConfigError::new("model.complex_pairs", "needs an even number of diffusive channels"));
                }
                m.complex_pairs = *complex_pairs;
                m.validate().map_err(|e| ConfigError::new("model", e))?;
                Ok((m, None))
            }
        }
    }

    fn build_state(&self, dim: usize, tol: &Tolerances) -> CfgResult<StateMatrix> {
        let path = "initial_state";
        match &self.initial_state {
            StateSpec::Basis { index } => {
                if *index >= dim {
                    return Err(ConfigError::new("initial_state.index", format!("must be below the dimension {dim}")));
                }
                Ok(StateMatrix::pure(&PureState::basis(dim, *index)))
            }
            StateSpec::Coherent { alpha } => {
                if !matches!(self.model, ModelSpec::Oscillator { .. }) {
                    return Err(ConfigError::new(path, "coherent states need an oscillator model"));
                }
                Ok(StateMatrix::pure(&PureState::coherent(dim, alpha.value())))
            }
            StateSpec::MaximallyMixed => Ok(StateMatrix::maximally_mixed(dim)),
            StateSpec::Pure { amplitudes } => {
                if amplitudes.len() != dim {
                    return Err(ConfigError::new("initial_state.amplitudes", format!("needs {dim} entries")));
                }
                let psi = PureState::new(amplitudes.iter().map(|z| z.value()).collect())
                    .map_err(|e| ConfigError::new("initial_state.amplitudes", e))?;
                Ok(StateMatrix::pure(&psi))
            }
            StateSpec::Density { matrix: m } => {
                let op = matrix(m, dim, "initial_state.matrix")?;
                StateMatrix::density(op, tol).map_err(|e| ConfigError::new("initial_state.matrix", e))
            }
        }
    }
}

fn matrix(rows: &Matrix, dim: usize, path: &str) -> CfgResult<Operator> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ConfigError::new(path, format!("must be a {dim}×{dim} matrix")));
    }
    let data: Vec<C64> = rows.iter().flatten().map(|z| z.value()).collect();
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ConfigError::new(path, "entries must be finite"));
    }
    Operator::from_row_major(dim, data).map_err(|e| ConfigError::new(path, e))
}

/// Characteristic mode implied by the model and the test function values.
pub fn char_mode(m: &MeasurementModel, complex: bool) -> CharMode {
    if !m.counting.is_empty() {
        CharMode::Counting
    } else if complex {
        CharMode::Complexified
    } else {
        CharMode::Diffusive
    }
}

/// Builds the test function of `spec` on `grid`.
pub fn test_function(spec: &CharfunSpec, m: &MeasurementModel, grid: TimeGrid) -> CfgResult<TestFunction> {
    let complex = spec.k.iter().flatten().any(|z| matches!(z, Complex::Pair(_)));
    let expected = if complex {
        if !m.complex_pairs {
            return Err(ConfigError::new("charfun.k", "complex values need a model with paired channels"));
        }
        m.diffusive.len() / 2
    } else {
        m.counting.len() + m.diffusive.len()
    };
    if spec.k.len() != expected {
        return Err(ConfigError::new("charfun.k", format!("needs {expected} channel rows, got {}", spec.k.len())));
    }
    let mut rows = Vec::with_capacity(expected);
    for (j, row) in spec.k.iter().enumerate() {
        let vals: Vec<C64> = match row.len() {
            1 => vec![row[0].value(); grid.steps],
            n if n == grid.steps => row.iter().map(|z| z.value()).collect(),
            n => return Err(ConfigError::new(format!("charfun.k[{j}]"), format!("needs 1 or {} values, got {n}", grid.steps))),
        };
        rows.push(vals);
    }
    let tf = if complex {
        TestFunction::complex(grid, rows)
    } else {
        TestFunction::real(grid, rows.into_iter().map(|r| r.into_iter().map(|z| z.re).collect()).collect())
    };
    tf.map_err(|e| ConfigError::new("charfun.k", e))
}

/// Best-effort field path for a serde error: the innermost JSON key open at
/// the error position.
fn json_path(text: &str, e: &serde_json::Error) -> String {
    let (line, col) = (e.line(), e.column());
    if line == 0 {
        return "config".into();
    }
    let offset: usize = text.lines().take(line - 1).map(|l| l.len() + 1).sum::<usize>() + col.saturating_sub(1);
    let prefix = &text[..offset.min(text.len())];
    let mut stack: Vec<Option<String>> = Vec::new();
    let mut key: Option<String> = None;
    let mut chars = prefix.chars().peekable();
    let mut last_string: Option<String> = None;
    while let Some(ch) = chars.next() {
        match ch {
            '"' => {
                let mut s = String::new();
                while let Some(c) = chars.next() {
                    match c {
                        '\\' => {
                            chars.next();
                        }
                        '"' => break,
                        _ => s.push(c),
                    }
                }
                last_string = Some(s);
            }
            ':' => key = last_string.take(),
            '{' | '[' => {
                stack.push(key.take());
            }
            '}' | ']' => {
                stack.pop();
            }
            ',' => key = None,
            _ => {}
        }
    }
    let mut parts: Vec<String> = stack.into_iter().flatten().collect();
    if let Some(k) = key {
        parts.push(k);
    }
    if parts.is_empty() {
        "config".into()
    } else {
        parts.join(".")
    }
}
