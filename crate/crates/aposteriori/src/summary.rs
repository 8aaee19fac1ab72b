//! Ensemble statistics: mean a-posteriori states, output moments and
//! martingale means with Monte Carlo standard errors.

use aposteriori_core::counting::CountingRecord;
use aposteriori_core::diffusive::{DiffusiveRecord, OutputPath};
use aposteriori_core::hilbert::{purity, trace_distance, Operator, StateMatrix};
use aposteriori_core::model::Mode;
use aposteriori_core::stats::{VecWelford, Welford};
use aposteriori_core::{Error, C64};

/// Largest admissible deviation of Tr(mean state) from 1.
pub const MEAN_TRACE_TOL: f64 = 1e-10;

/// One trajectory as produced by an engine, tagged with its stream index.
#[derive(Clone, Debug)]
pub enum TrajectoryRecord {
    Counting { index: u64, record: CountingRecord },
    Diffusive { index: u64, record: DiffusiveRecord, path: Option<OutputPath> },
}

impl TrajectoryRecord {
    pub fn index(&self) -> u64 {
        match self {
            TrajectoryRecord::Counting { index, .. } | TrajectoryRecord::Diffusive { index, .. } => *index,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            TrajectoryRecord::Counting { .. } => Mode::Counting,
            TrajectoryRecord::Diffusive { .. } => Mode::Diffusive,
        }
    }

    /// (index, t, state, purity, outputs, martingale) per snapshot.
    fn points(&self) -> Vec<PointSample<'_>> {
        match self {
            TrajectoryRecord::Counting { record, .. } => record
                .snapshots
                .iter()
                .map(|s| PointSample {
                    index: s.index,
                    t: s.t,
                    state: s.state.as_ref(),
                    purity: s.state.as_ref().map(purity),
                    outputs: s.counts.iter().map(|&n| n as f64).collect(),
                    martingale: s.martingale(),
                })
                .collect(),
            TrajectoryRecord::Diffusive { record, .. } => record
                .snapshots
                .iter()
                .map(|s| PointSample {
                    index: s.index,
                    t: s.t,
                    state: s.state.as_ref(),
                    purity: Some(s.purity),
                    outputs: s.y.clone(),
                    martingale: s.m.clone(),
                })
                .collect(),
        }
    }

    pub fn total_counts(&self) -> Option<usize> {
        match self {
            TrajectoryRecord::Counting { record, .. } => Some(record.total_counts()),
            TrajectoryRecord::Diffusive { .. } => None,
        }
    }
}

struct PointSample<'a> {
    index: usize,
    t: f64,
    state: Option<&'a Operator>,
    purity: Option<f64>,
    outputs: Vec<f64>,
    martingale: Vec<f64>,
}

/// Running mean and co-moment matrix of a real vector.
#[derive(Clone, Debug)]
pub struct CovarianceAccumulator {
    n: u64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(len: usize) -> Self {
        Self { n: 0, mean: vec![0.0; len], comoment: vec![0.0; len * len] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let d = self.mean.len();
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / self.n as f64;
        }
        for (row, di) in self.comoment.chunks_exact_mut(d).zip(&delta) {
            for ((c, xj), mj) in row.iter_mut().zip(x).zip(&self.mean) {
                *c += di * (xj - mj);
            }
        }
    }

    /// Unbiased covariance matrix, row-major.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.mean.len();
        let div = if self.n < 2 { f64::INFINITY } else { (self.n - 1) as f64 };
        (0..d).map(|i| (0..d).map(|j| self.comoment[i * d + j] / div).collect()).collect()
    }
}

#[derive(Clone, Debug)]
struct PointAcc {
    index: usize,
    t: f64,
    state: Option<VecWelford>,
    purity: Welford,
    outputs: Vec<Welford>,
    cov: CovarianceAccumulator,
    martingale: VecWelford,
}

/// Statistics at one snapshot time.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryPoint {
    /// Simulation-grid step index.
    pub index: usize,
    pub t: f64,
    pub mean_state: Option<Operator>,
    /// Entrywise standard errors of the real and imaginary parts, row-major.
    pub state_se_re: Vec<f64>,
    pub state_se_im: Vec<f64>,
    pub purity_mean: Option<f64>,
    pub purity_se: Option<f64>,
    pub output_mean: Vec<f64>,
    pub output_se: Vec<f64>,
    pub output_var: Vec<f64>,
    pub output_var_se: Vec<f64>,
    pub output_cov: Vec<Vec<f64>>,
    pub martingale_mean: Vec<f64>,
    pub martingale_se: Vec<f64>,
    pub trace_distance_to_master: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub mode: &'static str,
    pub n_trajectories: u64,
    pub dim: usize,
    pub points: Vec<SummaryPoint>,
    /// Fraction of counting trajectories without any count.
    pub zero_count_fraction: Option<f64>,
}

/// Streaming reducer over trajectory records. Records must be pushed in a
/// fixed order for bit-identical results.
#[derive(Clone, Debug, Default)]
pub struct SummaryAccumulator {
    mode: Option<Mode>,
    dim: usize,
    n: u64,
    zero_counts: u64,
    points: Vec<PointAcc>,
}

impl SummaryAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, rec: &TrajectoryRecord) -> Result<(), Error> {
        let samples = rec.points();
        match self.mode {
            None => {
                self.mode = Some(rec.mode());
                self.dim = samples.iter().find_map(|s| s.state.map(|x| x.dim())).unwrap_or(0);
                self.points = samples
                    .iter()
                    .map(|s| PointAcc {
                        index: s.index,
                        t: s.t,
                        state: s.state.map(|x| VecWelford::new(2 * x.dim() * x.dim())),
                        purity: Welford::new(),
                        outputs: vec![Welford::new(); s.outputs.len()],
                        cov: CovarianceAccumulator::new(s.outputs.len()),
                        martingale: VecWelford::new(s.martingale.len()),
                    })
                    .collect();
            }
            Some(m) if m != rec.mode() => {
                return Err(Error::ModeMismatch { required: m.name(), found: rec.mode().name() });
            }
            Some(_) => {}
        }
        if samples.len() != self.points.len() {
            return Err(Error::Contract(format!(
                "trajectory {} has {} snapshots, expected {}",
                rec.index(),
                samples.len(),
                self.points.len()
            )));
        }
        for (acc, s) in self.points.iter_mut().zip(&samples) {
            if acc.index != s.index {
                return Err(Error::Contract(format!("trajectory {} snapshot grid differs", rec.index())));
            }
            match (&mut acc.state, s.state) {
                (Some(w), Some(x)) => {
                    let flat: Vec<f64> = x.as_slice().iter().flat_map(|z| [z.re, z.im]).collect();
                    w.push(&flat);
                }
                (None, None) => {}
                _ => return Err(Error::Contract(format!("trajectory {} state recording differs", rec.index()))),
            }
            if let Some(p) = s.purity {
                acc.purity.push(p);
            }
            for (w, x) in acc.outputs.iter_mut().zip(&s.outputs) {
                w.push(*x);
            }
            acc.cov.push(&s.outputs);
            acc.martingale.push(&s.martingale);
        }
        if rec.total_counts() == Some(0) {
            self.zero_counts += 1;
        }
        self.n += 1;
        Ok(())
    }

    /// Final statistics. `master` holds the a-priori states on the
    /// simulation grid, indexed by step.
    pub fn finish(self, master: Option<&[StateMatrix]>) -> Result<EnsembleSummary, Error> {
        let mode = self.mode.ok_or(Error::EmptyEnsemble)?;
        let dim = self.dim;
        let mut points = Vec::with_capacity(self.points.len());
        for acc in self.points {
            let (mean_state, se_re, se_im) = match &acc.state {
                Some(w) => {
                    let means = w.means();
                    let ses = w.std_errors();
                    let data: Vec<C64> = means.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
                    let op = Operator::from_row_major(dim, data)?;
                    let tr = op.trace().re;
                    if (tr - 1.0).abs() > MEAN_TRACE_TOL {
                        return Err(Error::TraceDrift { t: acc.t, trace: tr });
                    }
                    let re = ses.iter().step_by(2).copied().collect();
                    let im = ses.iter().skip(1).step_by(2).copied().collect();
                    (Some(op), re, im)
                }
                None => (None, Vec::new(), Vec::new()),
            };
            let trace_distance_to_master = match (&mean_state, master) {
                (Some(op), Some(ms)) => ms.get(acc.index).map(|s| trace_distance(op, &s.op)),
                _ => None,
            };
            let has_purity = acc.purity.n > 0;
            points.push(SummaryPoint {
                index: acc.index,
                t: acc.t,
                mean_state,
                state_se_re: se_re,
                state_se_im: se_im,
                purity_mean: has_purity.then(|| acc.purity.mean()),
                purity_se: has_purity.then(|| acc.purity.std_error()),
                output_mean: acc.outputs.iter().map(|w| w.mean()).collect(),
                output_se: acc.outputs.iter().map(|w| w.std_error()).collect(),
                output_var: acc.outputs.iter().map(|w| w.variance()).collect(),
                output_var_se: acc.outputs.iter().map(|w| w.variance_std_error()).collect(),
                output_cov: acc.cov.covariance(),
                martingale_mean: acc.martingale.means(),
                martingale_se: acc.martingale.std_errors(),
                trace_distance_to_master,
            });
        }
        let zero_count_fraction = (mode == Mode::Counting).then(|| self.zero_counts as f64 / self.n as f64);
        Ok(EnsembleSummary { mode: mode.name(), n_trajectories: self.n, dim, points, zero_count_fraction })
    }
}

/// Summarizes a homogeneous set of records.
pub fn summarize_ensemble(records: &[TrajectoryRecord], master: Option<&[StateMatrix]>) -> Result<EnsembleSummary, Error> {
    let mut acc = SummaryAccumulator::new();
    for r in records {
        acc.push(r)?;
    }
    acc.finish(master)
}

impl EnsembleSummary {
    /// Summary of a master-equation run: the a-priori states themselves, at
    /// every `stride`-th step and the final one.
    pub fn from_master(states: &[StateMatrix], times: &[f64], stride: usize) -> Self {
        let last = states.len().saturating_sub(1);
        let dim = states.first().map_or(0, |s| s.dim());
        let points = states
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride.max(1) == 0 || *i == last)
            .map(|(i, s)| SummaryPoint {
                index: i,
                t: times[i],
                mean_state: Some(s.op.clone()),
                state_se_re: vec![0.0; dim * dim],
                state_se_im: vec![0.0; dim * dim],
                purity_mean: Some(purity(&s.op)),
                purity_se: Some(0.0),
                output_mean: Vec::new(),
                output_se: Vec::new(),
                output_var: Vec::new(),
                output_var_se: Vec::new(),
                output_cov: Vec::new(),
                martingale_mean: Vec::new(),
                martingale_se: Vec::new(),
                trace_distance_to_master: Some(0.0),
            })
            .collect();
        Self { mode: "master", n_trajectories: 0, dim, points, zero_count_fraction: None }
    }

    /// Largest |mean − master| / se over all state entries and points, with
    /// entries whose standard error vanishes compared against `floor`.
    pub fn worst_master_z(&self, master: &[StateMatrix], floor: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.points {
            let (Some(mean), Some(ms)) = (&p.mean_state, master.get(p.index)) else { continue };
            for (k, (a, b)) in mean.as_slice().iter().zip(ms.op.as_slice()).enumerate() {
                let d = a - b;
                worst = worst.max(d.re.abs() / p.state_se_re[k].max(floor));
                worst = worst.max(d.im.abs() / p.state_se_im[k].max(floor));
            }
        }
        worst
    }

    /// Largest |E[M_j]| / se over all points and channels (zero-se entries
    /// compared against `floor`).
    pub fn worst_martingale_z(&self, floor: f64) -> f64 {
        self.points
            .iter()
            .flat_map(|p| p.martingale_mean.iter().zip(&p.martingale_se))
            .map(|(m, s)| m.abs() / s.max(floor))
            .fold(0.0, f64::max)
    }
}
