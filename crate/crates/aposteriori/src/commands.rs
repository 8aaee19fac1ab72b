//! The six run modes.

use std::fs;
use std::path::Path;

use aposteriori_core::charfun::{counting_functional, diffusive_functional, propagate_characteristic, CharAccumulator};
use aposteriori_core::hilbert::{LinearMap, Operator, StateMatrix};
use aposteriori_core::model::{master_evolve, TimeGrid};
use aposteriori_core::scaling::{generator_gap, predicted_output_moments, scale_counting_model, ScaledModel};
use aposteriori_core::stats::{fit_through_origin, Welford};
use aposteriori_core::{Error, C64};
use serde_json::{json, Map, Value};

use crate::config::{char_mode, test_function, Prepared, RunConfig, RunMode};
use crate::ensemble::{run_spec, EnsembleSpec};
use crate::error::RunError;
use crate::io::{write_json, write_summary, write_table, RecordWriter};
use crate::summary::{EnsembleSummary, TrajectoryRecord};

/// Step of the central differences that turn Φ into output moments.
pub const MOMENT_STEP: f64 = 1e-3;

/// Runs the configured mode, writing into `out`, and returns the lines to
/// print on stdout.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Vec<String>, RunError> {
    let p = cfg.prepare()?;
    match p.mode {
        RunMode::Validate => validate(&p),
        RunMode::Counting | RunMode::Diffusive => {
            fs::create_dir_all(out)?;
            let summary = trajectories(cfg, &p, out)?;
            Ok(vec![format!("{} trajectories written to {}", summary.n_trajectories, out.display())])
        }
        RunMode::Master => {
            fs::create_dir_all(out)?;
            let states = master_evolve(&p.model, &p.rho0, &p.sim_grid, &p.tol)?;
            let s = EnsembleSummary::from_master(&states, &p.sim_grid.times(), p.stride);
            write_summary(out, cfg.format, &s, meta(cfg, &p))?;
            Ok(vec![format!("master evolution over {} steps written to {}", p.sim_grid.steps, out.display())])
        }
        RunMode::Charfun => {
            fs::create_dir_all(out)?;
            charfun(cfg, &p, out)
        }
        RunMode::Limit => {
            fs::create_dir_all(out)?;
            limit(cfg, &p, out)
        }
    }
}

fn meta(cfg: &RunConfig, p: &Prepared) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("master_seed".into(), json!(cfg.master_seed));
    m.insert("t0".into(), json!(p.grid.t0));
    m.insert("t1".into(), json!(p.grid.t1));
    m.insert("grid_steps".into(), json!(p.grid.steps));
    m.insert("dt".into(), json!(p.sim_grid.dt()));
    m.insert("snapshot_every".into(), json!(cfg.snapshot_every));
    m
}

fn spec<'a>(cfg: &RunConfig, p: &'a Prepared) -> EnsembleSpec<'a> {
    EnsembleSpec {
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
    }
}

fn trajectories(cfg: &RunConfig, p: &Prepared, out: &Path) -> Result<EnsembleSummary, RunError> {
    let mut writer = RecordWriter::create(out, cfg.format)?;
    let summary = run_spec(&spec(cfg, p), |r| writer.write(r))?;
    writer.finish()?;
    write_summary(out, cfg.format, &summary, meta(cfg, p))?;
    Ok(summary)
}

/// Checks that the Liouvillian preserves the trace on every model cell.
fn validate(p: &Prepared) -> Result<Vec<String>, RunError> {
    let d = p.model.dim;
    let cells = if p.model.is_autonomous() { 1 } else { p.model.grid.steps };
    let mut worst: f64 = 0.0;
    for cell in 0..cells {
        let l = p.model.liouvillian(cell);
        for a in 0..d {
            for b in 0..d {
                worst = worst.max(l.apply(&Operator::unit(d, a, b)).trace().norm());
            }
        }
    }
    if worst > p.tol.trace {
        return Err(Error::Contract(format!("Liouvillian changes the trace by {worst:.3e}")).into());
    }
    let mode = p.model.mode()?;
    Ok(vec![format!("OK: {} model, dimension {d}, {} channels, trace defect {worst:.1e}", mode.name(), p.model.counting.len() + p.model.diffusive.len())])
}

fn charfun(cfg: &RunConfig, p: &Prepared, out: &Path) -> Result<Vec<String>, RunError> {
    let spec_k = cfg.charfun.as_ref().expect("checked by prepare");
    let tf = test_function(spec_k, &p.model, p.grid)?;
    let mode = char_mode(&p.model, tf.is_complex());
    let exact = propagate_characteristic(&p.model, &tf, &p.rho0, mode)?;
    let mut rows: Vec<Map<String, Value>> = exact
        .iter()
        .map(|r| row_phi("propagation", r.t, r.phi, None))
        .collect();
    let mut lines = vec![format!("Φ(t1) = {:.12} {:+.12}i", exact.last().map_or(0.0, |r| r.phi.re), exact.last().map_or(0.0, |r| r.phi.im))];
    if spec_k.monte_carlo {
        let mut acc = CharAccumulator::new(p.grid.steps + 1);
        let mut s = spec(cfg, p);
        s.record_states = false;
        s.compare_master = false;
        s.keep_paths = true;
        run_spec(&s, |r| {
            let v = match r {
                TrajectoryRecord::Counting { record, .. } => counting_functional(record, &tf),
                TrajectoryRecord::Diffusive { path, .. } => {
                    let path = path.as_ref().ok_or_else(|| RunError::Output("output path missing".into()))?;
                    diffusive_functional(path, &tf)?
                }
            };
            acc.push(&v)?;
            Ok(())
        })?;
        let mc = acc.finish(&p.grid)?;
        if let Some(last) = mc.last() {
            lines.push(format!(
                "Monte Carlo Φ(t1) = {:.6} {:+.6}i ± {:.1e} over {} trajectories",
                last.phi.re,
                last.phi.im,
                last.stderr.unwrap_or(0.0),
                acc.count()
            ));
        }
        rows.extend(mc.iter().map(|r| row_phi("monte_carlo", r.t, r.phi, r.stderr)));
    }
    write_table(out, "charfun", cfg.format, &rows)?;
    write_json(&out.join("run.json"), &Value::Object(meta(cfg, p)))?;
    Ok(lines)
}

fn row_phi(source: &str, t: f64, phi: C64, stderr: Option<f64>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("source".into(), json!(source));
    m.insert("t".into(), json!(t));
    m.insert("phi_re".into(), json!(phi.re));
    m.insert("phi_im".into(), json!(phi.im));
    m.insert("stderr".into(), stderr.map_or(Value::Null, |s| json!(s)));
    m
}

/// Per-time, per-channel statistics of Y^ε from a counting ensemble of the
/// scaled model.
pub fn simulate_scaled_outputs(
    scaled: &ScaledModel,
    rho0: &StateMatrix,
    sim_grid: TimeGrid,
    times: &[f64],
    n_trajectories: u64,
    master_seed: u64,
    tol: aposteriori_core::hilbert::Tolerances,
) -> Result<Vec<Vec<Welford>>, RunError> {
    scaled.check_count_cap(sim_grid.t0, sim_grid.t1)?;
    let nch = scaled.base.diffusive.len();
    let mut acc = vec![vec![Welford::new(); nch]; times.len()];
    let spec = EnsembleSpec {
        model: &scaled.counting,
        rho0,
        grid: sim_grid,
        stride: sim_grid.steps,
        tol,
        n_trajectories,
        master_seed,
        record_states: false,
        keep_paths: false,
        compare_master: false,
    };
    run_spec(&spec, |r| {
        if let TrajectoryRecord::Counting { record, .. } = r {
            for (a, y) in acc.iter_mut().zip(scaled.outputs(&record.events, times)) {
                for (w, v) in a.iter_mut().zip(y) {
                    w.push(v);
                }
            }
        }
        Ok(())
    })?;
    Ok(acc)
}

fn limit(cfg: &RunConfig, p: &Prepared, out: &Path) -> Result<Vec<String>, RunError> {
    let spec_l = cfg.limit.as_ref().expect("checked by prepare");
    let t = spec_l.t.unwrap_or(0.5 * (p.grid.t0 + p.grid.t1));
    let mut gaps = Vec::with_capacity(spec_l.epsilons.len());
    for &e in &spec_l.epsilons {
        gaps.push(generator_gap(&p.model, e, &spec_l.k, t)?);
    }
    let (slope, r2) = fit_through_origin(&spec_l.epsilons, &gaps);
    let rows: Vec<_> = spec_l
        .epsilons
        .iter()
        .zip(&gaps)
        .map(|(e, g)| {
            let mut m = Map::new();
            m.insert("epsilon".into(), json!(e));
            m.insert("gap".into(), json!(g));
            m
        })
        .collect();
    write_table(out, "limit", cfg.format, &rows)?;
    let mut lines = vec![format!("gap ≈ {slope:.6}·ε, R² = {r2:.6}")];
    let mut m = meta(cfg, p);
    m.insert("slope".into(), json!(slope));
    m.insert("r_squared".into(), json!(r2));

    if let Some(eps) = spec_l.simulate_epsilon {
        let scaled = scale_counting_model(&p.model, eps)?;
        let times = p.grid.times();
        let stats = simulate_scaled_outputs(&scaled, &p.rho0, p.sim_grid, &times, cfg.n_trajectories, cfg.master_seed, p.tol)?;
        let pred = predicted_output_moments(&p.model, &p.rho0, p.grid, MOMENT_STEP)?;
        let mut sim_rows = Vec::new();
        for ((t, st), pr) in times.iter().zip(&stats).zip(&pred) {
            for (j, (w, (mu, var))) in st.iter().zip(pr).enumerate() {
                let mut r = Map::new();
                r.insert("t".into(), json!(t));
                r.insert("channel".into(), json!(j));
                r.insert("y_mean".into(), json!(w.mean()));
                r.insert("y_se".into(), json!(w.std_error()));
                r.insert("y_var".into(), json!(w.variance()));
                r.insert("y_var_se".into(), json!(w.variance_std_error()));
                r.insert("pred_mean".into(), json!(mu));
                r.insert("pred_var".into(), json!(var));
                sim_rows.push(r);
            }
        }
        write_table(out, "limit_simulation", cfg.format, &sim_rows)?;
        m.insert("simulate_epsilon".into(), json!(eps));
        lines.push(format!("ε = {eps}: {} trajectories of the scaled counting model written", cfg.n_trajectories));
    }
    write_json(&out.join("run.json"), &Value::Object(m))?;
    Ok(lines)
}
