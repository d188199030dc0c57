//! Experiment harness: runs (method × condition × seed) cells, aggregates
//! over seeds, fits scaling laws and writes CSV, JSON and SVG.
//!
//! Every filter starts at the true initial state. With `warm_start` it also
//! gets the true initial velocity (K-GMRF Ω₀, the KF velocity, the
//! alpha-beta rate). Errors are one-step predictions: `errors[t]` compares
//! the estimate after consuming frame t with the truth at frame t + 1.

mod experiments;
mod fit;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::{
    spd_log_at, sym_coords, AlphaBetaSo3, AlphaBetaSpd, CvKalman, Damping, EuclEma, EuclEmaSo3, KgmrfConfig,
    KgmrfSo3, KgmrfState, KgmrfTracker, RiemEma, RiemEmaSo3, So3KgmrfState, TangentKf, TangentKfSo3,
    TangentKfState, Tracker,
};
use crate::geometry::{angular_error_deg_spd2, geodesic_error_deg_so3, OrbitState};
use crate::linalg::{RotMat, SkewMat, SymMat};
use crate::synth::{So3Dataset, SpdDataset};

pub use experiments::*;
pub use fit::{expdecay_fit, linear_fit, loglog_fit, Fit};
pub use report::{fmt_g, summary_json, write_csv, write_summary_json, write_svg_lineplot, csv_string, svg_string};

/// Per-frame errors are capped here; a failed or non-finite step pins the
/// rest of the run to the cap.
pub const ERROR_CAP_DEG: f64 = 180.0;
/// Fraction of frames skipped before the mean error.
pub const BURN_IN: f64 = 0.10;
/// Fraction of frames, at the end, averaged for the steady-state error.
pub const STEADY_TAIL: f64 = 0.25;

pub const TEST_SEEDS: [u64; 5] = [5, 6, 7, 8, 9];
pub const TUNE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kgmrf,
    RiemEma,
    EuclEma,
    TangentKf,
    AlphaBeta,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Kgmrf, Method::RiemEma, Method::EuclEma, Method::TangentKf, Method::AlphaBeta];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kgmrf => "kgmrf",
            Method::RiemEma => "riem_ema",
            Method::EuclEma => "eucl_ema",
            Method::TangentKf => "tangent_kf",
            Method::AlphaBeta => "alpha_beta",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Hyperparameters for the SPD experiments. EMA weights are the fraction
/// moved towards the observation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpdParams {
    pub eta: f64,
    pub gamma: f64,
    /// Averaging rate of the tracked damping reference; 0 selects absolute
    /// damping.
    pub rho: f64,
    pub obs_smoothing: Option<f64>,
    pub ema_weight: f64,
    pub kf_q: f64,
    pub kf_r: f64,
    pub ab_alpha: f64,
    pub ab_beta: f64,
}

impl Default for SpdParams {
    fn default() -> Self {
        SpdParams {
            eta: 0.05,
            gamma: 0.95,
            rho: 0.01,
            obs_smoothing: None,
            ema_weight: 0.8,
            kf_q: 0.005,
            kf_r: 0.1,
            ab_alpha: 0.4,
            ab_beta: 0.1,
        }
    }
}

impl SpdParams {
    pub fn kgmrf_config(&self, sigma2: f64) -> KgmrfConfig {
        let damping = if self.rho > 0.0 { Damping::Tracked { rho: self.rho } } else { Damping::Absolute };
        let mut cfg = KgmrfConfig::new(self.eta, self.gamma, sigma2).with_damping(damping);
        cfg.obs_smoothing = self.obs_smoothing;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct So3Params {
    pub kg_alpha: f64,
    pub kg_beta: f64,
    pub kg_gamma: f64,
    pub ema_weight: f64,
    pub kf_q: f64,
    pub kf_r: f64,
    pub ab_alpha: f64,
    pub ab_beta: f64,
}

impl Default for So3Params {
    fn default() -> Self {
        So3Params {
            kg_alpha: 0.5,
            kg_beta: 0.05,
            kg_gamma: 0.98,
            ema_weight: 0.8,
            kf_q: 0.005,
            kf_r: 0.1,
            ab_alpha: 0.5,
            ab_beta: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub warm_start: bool,
    /// Record wall-clock time per cell. Off by default so outputs stay
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seeds: TEST_SEEDS.to_vec(), jobs: 1, warm_start: true, timing: false }
    }
}

impl RunOptions {
    pub fn validate_test(&self) -> Result<()> {
        check_seeds(&self.seeds, &TEST_SEEDS, "evaluation")
    }
}

pub fn check_seeds(seeds: &[u64], allowed: &[u64], what: &str) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidParam(format!("{what} needs at least one seed")));
    }
    match seeds.iter().find(|s| !allowed.contains(s)) {
        Some(s) => Err(Error::InvalidParam(format!("seed {s} is not allowed for {what}; use {allowed:?}"))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterRun {
    pub method: String,
    pub seed: u64,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub steady_error: f64,
    pub runtime_s: Option<f64>,
    pub diverged: bool,
}

impl FilterRun {
    pub fn from_errors(method: &str, seed: u64, errors: Vec<f64>, diverged: bool) -> FilterRun {
        let (mean_error, steady_error) = summarize(&errors);
        FilterRun { method: method.to_string(), seed, errors, mean_error, steady_error, runtime_s: None, diverged }
    }
}

/// (mean after burn-in, mean of the last quarter).
pub fn summarize(errors: &[f64]) -> (f64, f64) {
    let n = errors.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let burn = ((n as f64 * BURN_IN) as usize).min(n - 1);
    let tail = n - ((n as f64 * STEADY_TAIL) as usize).max(1);
    (mean(&errors[burn..]), mean(&errors[tail..]))
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn drive<T, F>(tracker: &mut T, obs: &[T::Obs], mask: &[bool], mut err: F) -> (Vec<f64>, bool)
where
    T: Tracker + ?Sized,
    F: FnMut(usize, &T::Est) -> f64,
{
    let mut errors = Vec::with_capacity(obs.len());
    let mut diverged = false;
    for t in 0..obs.len() {
        if diverged {
            errors.push(ERROR_CAP_DEG);
            continue;
        }
        let o = if mask[t] { Some(&obs[t]) } else { None };
        let e = match tracker.step(o) {
            Ok(()) => err(t, &tracker.estimate()),
            Err(_) => f64::NAN,
        };
        if e.is_finite() {
            errors.push(e.min(ERROR_CAP_DEG));
        } else {
            diverged = true;
            errors.push(ERROR_CAP_DEG);
        }
    }
    (errors, diverged)
}

pub type SpdTracker = Box<dyn Tracker<Obs = SymMat, Est = SymMat>>;
pub type So3Tracker = Box<dyn Tracker<Obs = RotMat, Est = RotMat>>;

/// Builds a tracker for an SPD dataset, starting at the true initial state.
pub fn spd_tracker(method: Method, params: &SpdParams, ds: &SpdDataset, warm_start: bool) -> Result<SpdTracker> {
    let s0 = &ds.traj.states[0];
    let m0 = s0.m().clone();
    let n = m0.dim();
    let next = ds.traj.states.get(1).map(|s| s.m().clone()).unwrap_or_else(|| m0.clone());
    Ok(match method {
        Method::Kgmrf => {
            let cfg = params.kgmrf_config(ds.sigma2);
            cfg.validate()?;
            Box::new(KgmrfTracker::new(kgmrf_initial_state(s0, &ds.traj.velocities, warm_start), cfg))
        }
        Method::RiemEma => Box::new(RiemEma { m: m0, beta: params.ema_weight }),
        Method::EuclEma => Box::new(EuclEma { m: m0, beta: params.ema_weight }),
        Method::TangentKf => {
            let vel = if warm_start { Some(sym_coords(spd_log_at(&m0, &next)?.mat())) } else { None };
            let kf = CvKalman::new(n * (n + 1) / 2, params.kf_q, params.kf_r, vel);
            Box::new(TangentKf { state: TangentKfState { m: m0, kf, clamped: false } })
        }
        Method::AlphaBeta => {
            let x = m0.mat().as_slice().to_vec();
            let v = if warm_start {
                next.mat().as_slice().iter().zip(&x).map(|(a, b)| a - b).collect()
            } else {
                vec![0.0; x.len()]
            };
            Box::new(AlphaBetaSpd { x, v, n, alpha: params.ab_alpha, beta: params.ab_beta })
        }
    })
}

pub fn kgmrf_initial_state(s0: &OrbitState, velocities: &[SkewMat], warm_start: bool) -> KgmrfState {
    match (warm_start, velocities.first()) {
        (true, Some(w)) => KgmrfState::with_velocity(s0.clone(), w.clone()),
        _ => KgmrfState::new(s0.clone()),
    }
}

pub fn so3_tracker(method: Method, params: &So3Params, ds: &So3Dataset, warm_start: bool) -> So3Tracker {
    let r0 = ds.traj.states[0].clone();
    let w0 = match (warm_start, ds.traj.velocities.first()) {
        (true, Some(w)) => w.clone(),
        _ => SkewMat::zeros(3),
    };
    match method {
        Method::Kgmrf => Box::new(KgmrfSo3 {
            state: So3KgmrfState { r: r0, omega: w0 },
            alpha: params.kg_alpha,
            beta: params.kg_beta,
            gamma: params.kg_gamma,
        }),
        Method::RiemEma => Box::new(RiemEmaSo3 { r: r0, beta: params.ema_weight }),
        Method::EuclEma => Box::new(EuclEmaSo3 { x: r0.mat().clone(), beta: params.ema_weight }),
        Method::TangentKf => {
            let vel = w0.vee3().to_vec();
            Box::new(TangentKfSo3 { r: r0, kf: CvKalman::new(3, params.kf_q, params.kf_r, Some(vel)) })
        }
        Method::AlphaBeta => {
            let x = r0.mat().as_slice().to_vec();
            let v = if warm_start {
                let r1 = r0.compose(&w0.exp());
                r1.mat().as_slice().iter().zip(&x).map(|(a, b)| a - b).collect()
            } else {
                vec![0.0; 9]
            };
            Box::new(AlphaBetaSo3 { x, v, alpha: params.ab_alpha, beta: params.ab_beta })
        }
    }
}

/// Steps a tracker through an SPD dataset.
pub fn run_tracking_spd(label: &str, seed: u64, tracker: &mut dyn Tracker<Obs = SymMat, Est = SymMat>, ds: &SpdDataset) -> FilterRun {
    let truth = &ds.traj.states;
    let (errors, diverged) = drive(tracker, &ds.obs, &ds.mask, |t, est| spd_error_deg(est, truth[t + 1].m()));
    FilterRun::from_errors(label, seed, errors, diverged)
}

pub fn run_tracking_so3(label: &str, seed: u64, tracker: &mut dyn Tracker<Obs = RotMat, Est = RotMat>, ds: &So3Dataset) -> FilterRun {
    let truth = &ds.traj.states;
    let (errors, diverged) = drive(tracker, &ds.obs, &ds.mask, |t, est| geodesic_error_deg_so3(est, &truth[t + 1]));
    FilterRun::from_errors(label, seed, errors, diverged)
}

/// Principal-axis angle for 2×2. Larger matrices have no single axis, so
/// the AIRM distance ‖log(A^{-1/2}BA^{-1/2})‖_F is reported, in degrees.
pub fn spd_error_deg(est: &SymMat, truth: &SymMat) -> f64 {
    if est.dim() == 2 {
        return angular_error_deg_spd2(est, truth);
    }
    match spd_log_at(truth, est) {
        Ok(l) => l.frob_norm().to_degrees(),
        Err(_) => f64::NAN,
    }
}

/// Runs `f` over `cells` on a pool of `jobs` threads; the output order is
/// the input order whatever the scheduling.
pub fn run_ordered<C, R, F>(jobs: usize, cells: &[C], f: F) -> Result<Vec<R>>
where
    C: Sync,
    R: Send,
    F: Fn(&C) -> Result<R> + Sync + Send,
{
    if jobs <= 1 {
        return cells.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(f).collect())
}

/// Wraps a run with optional wall-clock timing.
pub fn timed(timing: bool, f: impl FnOnce() -> Result<FilterRun>) -> Result<FilterRun> {
    let start = Instant::now();
    let mut run = f()?;
    if timing {
        run.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(run)
}

/// One row of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub param_value: f64,
    pub method: String,
    pub seed: u64,
    pub mean_error: f64,
    pub steady_error: f64,
    pub runtime_s: Option<f64>,
    pub diverged: bool,
}

/// Which per-run summary the aggregate arrays are built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mean,
    Steady,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Steady => "steady",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesStats {
    pub method: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedFit {
    pub method: String,
    /// "linear" or "loglog".
    pub kind: String,
    #[serde(flatten)]
    pub fit: Fit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub name: String,
    pub param: String,
    pub values: Vec<f64>,
    pub metric: Metric,
    pub series: Vec<SeriesStats>,
    pub fits: Vec<NamedFit>,
    pub kappa_fit: Option<(f64, f64)>,
    #[serde(skip)]
    pub cells: Vec<Cell>,
}

impl SweepResult {
    /// Aggregates cells (already in canonical order) into per-method
    /// mean/std arrays over seeds.
    pub fn from_cells(name: &str, param: &str, values: &[f64], methods: &[String], metric: Metric, cells: Vec<Cell>) -> SweepResult {
        let series = methods
            .iter()
            .map(|m| {
                let mut mean_v = Vec::with_capacity(values.len());
                let mut std_v = Vec::with_capacity(values.len());
                for &v in values {
                    let xs: Vec<f64> = cells
                        .iter()
                        .filter(|c| &c.method == m && c.param_value == v)
                        .map(|c| match metric {
                            Metric::Mean => c.mean_error,
                            Metric::Steady => c.steady_error,
                        })
                        .collect();
                    mean_v.push(mean(&xs));
                    std_v.push(sample_std(&xs));
                }
                SeriesStats { method: m.clone(), mean: mean_v, std: std_v }
            })
            .collect();
        SweepResult {
            name: name.to_string(),
            param: param.to_string(),
            values: values.to_vec(),
            metric,
            series,
            fits: Vec::new(),
            kappa_fit: None,
            cells,
        }
    }

    pub fn series(&self, method: &str) -> Option<&SeriesStats> {
        self.series.iter().find(|s| s.method == method)
    }

    pub fn fit(&self, method: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.method == method).map(|f| &f.fit)
    }

    pub fn add_fit(&mut self, method: &str, kind: &str) {
        let Some(s) = self.series(method) else { return };
        let fit = match kind {
            "loglog" => loglog_fit(&self.values, &s.mean),
            _ => linear_fit(&self.values, &s.mean),
        };
        self.fits.push(NamedFit { method: method.to_string(), kind: kind.to_string(), fit });
    }
}
