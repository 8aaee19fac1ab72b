//! Seeded ensemble execution with trajectory-level parallelism and an
//! ordered reduction.

use aposteriori_core::counting::{CountingConfig, CountingEngine};
use aposteriori_core::diffusive::{DiffusiveConfig, DiffusiveEngine};
use aposteriori_core::hilbert::{StateMatrix, Tolerances};
use aposteriori_core::model::{master_evolve, MeasurementModel, Mode, TimeGrid};
use aposteriori_core::rng::trajectory_rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::RunError;
use crate::summary::{EnsembleSummary, SummaryAccumulator, TrajectoryRecord};

/// Trajectories simulated per parallel batch before the ordered reduction.
pub const BATCH: u64 = 256;

#[derive(Clone, Debug)]
pub struct EnsembleSpec<'a> {
    pub model: &'a MeasurementModel,
    pub rho0: &'a StateMatrix,
    pub grid: TimeGrid,
    /// Snapshot stride in simulation steps.
    pub stride: usize,
    pub tol: Tolerances,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub record_states: bool,
    /// Keep diffusive output paths on the records.
    pub keep_paths: bool,
    /// Compute the trace-distance-to-master curve.
    pub compare_master: bool,
}

enum Engine<'m> {
    Counting(CountingEngine<'m>),
    Diffusive(DiffusiveEngine<'m>),
}

impl Engine<'_> {
    fn run(&self, rho0: &StateMatrix, seed: u64, index: u64) -> Result<TrajectoryRecord, RunError> {
        let mut rng = trajectory_rng(seed, index);
        let wrap = |source| RunError::Engine { trajectory: index, source };
        match self {
            Engine::Counting(e) => {
                let mut record = e.simulate(rho0, &mut rng).map_err(wrap)?;
                record.seed = seed;
                record.stream = index;
                Ok(TrajectoryRecord::Counting { index, record })
            }
            Engine::Diffusive(e) => {
                let (mut record, path) = e.simulate(rho0, &mut rng).map_err(wrap)?;
                record.seed = seed;
                record.stream = index;
                Ok(TrajectoryRecord::Diffusive { index, record, path })
            }
        }
    }
}

/// Runs the ensemble of `spec`, feeding each record to `sink` in trajectory
/// order, and returns the summary.
pub fn run_spec<F>(spec: &EnsembleSpec<'_>, mut sink: F) -> Result<EnsembleSummary, RunError>
where
    F: FnMut(&TrajectoryRecord) -> Result<(), RunError>,
{
    let mode = spec.model.mode()?;
    let engine = match mode {
        Mode::Counting => Engine::Counting(CountingEngine::new(
            spec.model,
            spec.grid,
            CountingConfig {
                snapshot_every: spec.stride,
                record_states: spec.record_states,
                tol: spec.tol,
                ..CountingConfig::default()
            },
        )?),
        Mode::Diffusive => Engine::Diffusive(DiffusiveEngine::new(
            spec.model,
            spec.grid,
            DiffusiveConfig {
                snapshot_every: spec.stride,
                record_states: spec.record_states,
                record_path: spec.keep_paths,
                tol: spec.tol,
                ..DiffusiveConfig::default()
            },
        )?),
    };
    let master = if spec.compare_master && spec.record_states {
        Some(master_evolve(spec.model, spec.rho0, &spec.grid, &spec.tol)?)
    } else {
        None
    };
    let mut acc = SummaryAccumulator::new();
    let mut start = 0;
    while start < spec.n_trajectories {
        let end = (start + BATCH).min(spec.n_trajectories);
        let batch: Vec<Result<TrajectoryRecord, RunError>> =
            (start..end).into_par_iter().map(|i| engine.run(spec.rho0, spec.master_seed, i)).collect();
        for rec in batch {
            let rec = rec?;
            acc.push(&rec).map_err(RunError::Numerical)?;
            sink(&rec)?;
        }
        start = end;
    }
    Ok(acc.finish(master.as_deref())?)
}

/// Validates `cfg`, runs its counting or diffusive ensemble and streams the
/// records to `sink`.
pub fn run_ensemble<F>(cfg: &RunConfig, sink: F) -> Result<EnsembleSummary, RunError>
where
    F: FnMut(&TrajectoryRecord) -> Result<(), RunError>,
{
    let p = cfg.prepare()?;
    let spec = EnsembleSpec {
        model: &p.model,
        rho0: &p.rho0,
        grid: p.sim_grid,
        stride: p.stride,
        tol: p.tol,
        n_trajectories: cfg.n_trajectories,
        master_seed: cfg.master_seed,
        record_states: cfg.record_states,
        keep_paths: false,
        compare_master: true,
    };
    run_spec(&spec, sink)
}
