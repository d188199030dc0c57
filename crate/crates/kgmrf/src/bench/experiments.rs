//! The experiment suite.

use serde::Serialize;

use super::{
    expdecay_fit, kgmrf_initial_state, run_ordered, run_tracking_so3, run_tracking_spd, so3_tracker, spd_tracker, timed,
    Cell, FilterRun, Method, Metric, RunOptions, So3Params, SpdParams, SweepResult, TUNE_SEEDS,
};
use crate::error::{Error, Result};
use crate::filters::{char_root_modulus, kappa_max, Damping, EuclEma, KgmrfConfig, KgmrfState, KgmrfTracker, Tracker};
use crate::geometry::Spectrum;
use crate::linalg::{RotMat, SymMat};
use crate::synth::{
    so3_dataset, spd2_dataset, spd2_trajectory, spd_observations, varying_velocity_trajectory, Rng, Spd2Protocol,
    SpdDataset, SpdTrajectory, SO3_DEFAULT_HORIZON, SO3_DEFAULT_SIGMA_R,
};

pub const OMEGA_GRID: [f64; 6] = [0.03, 0.05, 0.08, 0.10, 0.15, 0.20];
pub const DROPOUT_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const DELTA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.3, 0.5, 1.0];
pub const M_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
pub const ABLATION_CONDITIONS: [f64; 2] = [0.0, 0.2];

fn method_names(methods: &[Method]) -> Vec<String> {
    methods.iter().map(|m| m.name().to_string()).collect()
}

fn to_cell(value: f64, run: FilterRun) -> Cell {
    Cell {
        param_value: value,
        method: run.method,
        seed: run.seed,
        mean_error: run.mean_error,
        steady_error: run.steady_error,
        runtime_s: run.runtime_s,
        diverged: run.diverged,
    }
}

/// Canonical cell order: parameter value, then method, then seed.
fn grid<M: Copy>(values: &[f64], methods: &[M], seeds: &[u64]) -> Vec<(f64, M, u64)> {
    let mut out = Vec::with_capacity(values.len() * methods.len() * seeds.len());
    for &v in values {
        for &m in methods {
            for &s in seeds {
                out.push((v, m, s));
            }
        }
    }
    out
}

pub fn run_spd_cell(method: Method, params: &SpdParams, proto: &Spd2Protocol, seed: u64, opts: &RunOptions) -> Result<FilterRun> {
    timed(opts.timing, || {
        let ds = spd2_dataset(proto, seed)?;
        let mut tr = spd_tracker(method, params, &ds, opts.warm_start)?;
        Ok(run_tracking_spd(method.name(), seed, tr.as_mut(), &ds))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct So3Setup {
    pub sigma_r: f64,
    pub horizon: usize,
}

impl Default for So3Setup {
    fn default() -> Self {
        So3Setup { sigma_r: SO3_DEFAULT_SIGMA_R, horizon: SO3_DEFAULT_HORIZON }
    }
}

pub fn run_so3_cell(method: Method, params: &So3Params, setup: &So3Setup, p: f64, seed: u64, opts: &RunOptions) -> Result<FilterRun> {
    timed(opts.timing, || {
        let ds = so3_dataset(setup.sigma_r, setup.horizon, p, seed)?;
        let mut tr = so3_tracker(method, params, &ds, opts.warm_start);
        Ok(run_tracking_so3(method.name(), seed, tr.as_mut(), &ds))
    })
}

/// SPD(2) tracking across angular velocities, all methods. Aggregates are
/// steady-state errors; both EMA columns get a linear fit against ω.
pub fn omega_sweep(proto: &Spd2Protocol, params: &SpdParams, omegas: &[f64], opts: &RunOptions) -> Result<SweepResult> {
    opts.validate_test()?;
    let methods = Method::ALL;
    let cells = grid(omegas, &methods, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(w, m, s)| {
        let p = Spd2Protocol { omega: w, ..proto.clone() };
        run_spd_cell(m, params, &p, s, opts).map(|r| to_cell(w, r))
    })?;
    let mut res = SweepResult::from_cells("omega_sweep", "omega", omegas, &method_names(&methods), Metric::Steady, runs);
    res.add_fit("riem_ema", "linear");
    res.add_fit("eucl_ema", "linear");
    Ok(res)
}

/// SO(3) tracking across dropout rates, all methods, mean error.
pub fn dropout_sweep(setup: &So3Setup, params: &So3Params, rates: &[f64], opts: &RunOptions) -> Result<SweepResult> {
    opts.validate_test()?;
    let methods = Method::ALL;
    let cells = grid(rates, &methods, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(p, m, s)| run_so3_cell(m, params, setup, p, s, opts).map(|r| to_cell(p, r)))?;
    Ok(SweepResult::from_cells("dropout_sweep", "dropout_p", rates, &method_names(&methods), Metric::Mean, runs))
}

/// Setup for the spectral-gap sweep: Λ(δ) = diag(1 + δ, 1) under heavy
/// noise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapSetup {
    pub omega: f64,
    pub sigma2: f64,
    pub m_dof: u32,
    pub horizon: usize,
    pub params: SpdParams,
}

impl Default for GapSetup {
    fn default() -> Self {
        GapSetup {
            omega: 0.03,
            sigma2: 4.0,
            m_dof: 8,
            horizon: 400,
            params: SpdParams { eta: 0.01, gamma: 1.0, ..SpdParams::default() },
        }
    }
}

pub fn spectral_gap_sweep(setup: &GapSetup, deltas: &[f64], opts: &RunOptions) -> Result<SweepResult> {
    opts.validate_test()?;
    let methods = [Method::Kgmrf, Method::RiemEma];
    let cells = grid(deltas, &methods, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(d, m, s)| {
        let proto = Spd2Protocol {
            spectrum: vec![1.0 + d, 1.0],
            omega: setup.omega,
            sigma2: setup.sigma2,
            m_dof: setup.m_dof,
            horizon: setup.horizon,
            dropout_p: 0.0,
        };
        run_spd_cell(m, &setup.params, &proto, s, opts).map(|r| to_cell(d, r))
    })?;
    Ok(SweepResult::from_cells("spectral_gap", "delta", deltas, &method_names(&methods), Metric::Steady, runs))
}

/// Ablation rows: the full filter, without momentum (a first-order step
/// with the EMA weight as gain), without the intrinsic preconditioner, and
/// without both (which is the Euclidean EMA).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ablation {
    Full,
    NoMomentum,
    NoManifold,
    NoBoth,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoMomentum, Ablation::NoManifold, Ablation::NoBoth];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoMomentum => "no_momentum",
            Ablation::NoManifold => "no_manifold",
            Ablation::NoBoth => "no_both",
        }
    }
}

pub fn ablation_tracker(row: Ablation, params: &SpdParams, ds: &SpdDataset, warm_start: bool) -> Result<Box<dyn Tracker<Obs = SymMat, Est = SymMat>>> {
    let mut cfg = params.kgmrf_config(ds.sigma2);
    cfg.first_order_gain = params.ema_weight;
    match row {
        Ablation::Full => {}
        Ablation::NoMomentum => cfg.momentum_enabled = false,
        Ablation::NoManifold => cfg.intrinsic_enabled = false,
        Ablation::NoBoth => return Ok(Box::new(EuclEma { m: ds.traj.states[0].m().clone(), beta: params.ema_weight })),
    }
    cfg.validate()?;
    let state = kgmrf_initial_state(&ds.traj.states[0], &ds.traj.velocities, warm_start && cfg.momentum_enabled);
    Ok(Box::new(KgmrfTracker::new(state, cfg)))
}

/// The ablation rows on SPD(2) at the given dropout rates.
pub fn ablation_grid(proto: &Spd2Protocol, params: &SpdParams, rates: &[f64], opts: &RunOptions) -> Result<SweepResult> {
    opts.validate_test()?;
    let rows = Ablation::ALL;
    let cells = grid(rates, &rows, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(p, row, s)| {
        timed(opts.timing, || {
            let ds = spd2_dataset(&Spd2Protocol { dropout_p: p, ..proto.clone() }, s)?;
            let mut tr = ablation_tracker(row, params, &ds, opts.warm_start)?;
            Ok(run_tracking_spd(row.name(), s, tr.as_mut(), &ds))
        })
        .map(|r| to_cell(p, r))
    })?;
    let names: Vec<String> = rows.iter().map(|r| r.name().to_string()).collect();
    Ok(SweepResult::from_cells("ablation", "dropout_p", rates, &names, Metric::Steady, runs))
}

/// Noise-free observations: each frame sees exactly M* + σ²I.
pub fn noiseless_dataset(traj: SpdTrajectory, sigma2: f64) -> SpdDataset {
    let horizon = traj.velocities.len();
    let obs = traj.states[..horizon].iter().map(|s| s.m().add_identity(sigma2)).collect();
    SpdDataset { traj, obs, mask: vec![true; horizon], sigma2 }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MasterSetup {
    pub proto: Spd2Protocol,
    pub params: SpdParams,
    pub m_grid: Vec<f64>,
    pub budgets: Vec<f64>,
    pub n_changes: usize,
    /// Initial angular offset of the transient run, degrees.
    pub transient_offset_deg: f64,
    pub transient_horizon: usize,
    /// Relative error at which the transient fit window ends.
    pub transient_floor: f64,
}

impl Default for MasterSetup {
    fn default() -> Self {
        MasterSetup {
            proto: Spd2Protocol::default(),
            params: SpdParams::default(),
            m_grid: M_GRID.to_vec(),
            budgets: vec![0.0, 0.02, 0.04, 0.06, 0.08, 0.10],
            n_changes: 4,
            transient_offset_deg: 30.0,
            transient_horizon: 200,
            transient_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MasterValidation {
    pub m_sweep: SweepResult,
    pub v_sweep: SweepResult,
    pub transient: SweepResult,
}

/// The three scaling checks: error against the Wishart degrees of freedom
/// (log-log), against the velocity variation budget (linear), and the
/// exponential decay of a noiseless transient.
pub fn master_validation(setup: &MasterSetup, opts: &RunOptions) -> Result<MasterValidation> {
    opts.validate_test()?;
    let kg = [Method::Kgmrf];
    let names = method_names(&kg);

    let cells = grid(&setup.m_grid, &kg, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(m, meth, s)| {
        let p = Spd2Protocol { m_dof: m as u32, ..setup.proto.clone() };
        run_spd_cell(meth, &setup.params, &p, s, opts).map(|r| to_cell(m, r))
    })?;
    let mut m_sweep = SweepResult::from_cells("m_sweep", "m_dof", &setup.m_grid, &names, Metric::Mean, runs);
    m_sweep.add_fit("kgmrf", "loglog");

    let spec = setup.proto.validate()?;
    let cells = grid(&setup.budgets, &kg, &opts.seeds);
    let runs = run_ordered(opts.jobs, &cells, |&(b, meth, s)| {
        timed(opts.timing, || {
            let mut rng = Rng::new(s, "spd/velocity-jumps");
            let traj = varying_velocity_trajectory(&spec, setup.proto.omega, b, setup.n_changes, setup.proto.horizon, &mut rng)?;
            let obs = spd_observations(&traj, setup.proto.sigma2, setup.proto.m_dof, s)?;
            let mask = vec![true; obs.len()];
            let ds = SpdDataset { traj, obs, mask, sigma2: setup.proto.sigma2 };
            let mut tr = spd_tracker(meth, &setup.params, &ds, opts.warm_start)?;
            Ok(run_tracking_spd(meth.name(), s, tr.as_mut(), &ds))
        })
        .map(|r| to_cell(b, r))
    })?;
    let mut v_sweep = SweepResult::from_cells("v_omega_sweep", "v_omega", &setup.budgets, &names, Metric::Mean, runs);
    v_sweep.add_fit("kgmrf", "linear");

    let transient = transient_run(setup, opts.seeds.first().copied().unwrap_or(0))?;
    Ok(MasterValidation { m_sweep, v_sweep, transient })
}

/// Static noiseless target, filter started `transient_offset_deg` away with
/// zero velocity and absolute damping. The decay fit covers the frames
/// before the error falls below `transient_floor` times its start.
pub fn transient_run(setup: &MasterSetup, seed: u64) -> Result<SweepResult> {
    let proto = Spd2Protocol { omega: 0.0, horizon: setup.transient_horizon, ..setup.proto.clone() };
    let ds = noiseless_dataset(spd2_trajectory(&proto)?, proto.sigma2);
    let offset = RotMat::planar(setup.transient_offset_deg.to_radians());
    let start = ds.traj.states[0].rotated(&offset);
    let cfg = KgmrfConfig::new(setup.params.eta, setup.params.gamma, proto.sigma2);
    cfg.validate()?;
    let mut tr = KgmrfTracker::new(KgmrfState::new(start), cfg);
    let run = run_tracking_spd("kgmrf", seed, &mut tr, &ds);
    let e0 = run.errors[0].max(f64::MIN_POSITIVE);
    let end = run
        .errors
        .iter()
        .position(|&e| e < setup.transient_floor * e0)
        .unwrap_or(run.errors.len())
        .max(3);
    let ts: Vec<f64> = (0..end).map(|t| t as f64).collect();
    let errs = &run.errors[..end];
    let cells = ts
        .iter()
        .zip(errs)
        .map(|(&t, &e)| Cell {
            param_value: t,
            method: "kgmrf".into(),
            seed,
            mean_error: e,
            steady_error: e,
            runtime_s: None,
            diverged: run.diverged,
        })
        .collect();
    let mut res = SweepResult::from_cells("transient", "t", &ts, &["kgmrf".to_string()], Metric::Mean, cells);
    res.kappa_fit = Some(expdecay_fit(&ts, errs));
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilitySetup {
    pub spectrum: Vec<f64>,
    pub sigma2: f64,
    pub initial_offset_deg: f64,
    pub horizon: usize,
}

impl Default for StabilitySetup {
    fn default() -> Self {
        StabilitySetup { spectrum: vec![2.0, 0.5], sigma2: 0.1, initial_offset_deg: 1.0, horizon: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityMap {
    pub etas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub kappa_max: f64,
    /// `[gamma index][eta index]`.
    pub empirical: Vec<Vec<bool>>,
    pub predicted: Vec<Vec<bool>>,
    pub root_modulus: Vec<Vec<f64>>,
    pub final_error: Vec<Vec<f64>>,
    /// Cells with a predicted neighbour of the other class.
    pub boundary: Vec<Vec<bool>>,
    pub agreement_outside_band: f64,
}

impl StabilityMap {
    pub fn divergent_cells(&self) -> usize {
        self.empirical.iter().flatten().filter(|c| !**c).count()
    }
}

/// `n` values evenly spaced in (0, eta_max].
pub fn eta_grid(eta_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| eta_max * (k + 1) as f64 / n as f64).collect()
}

/// `n` values evenly spaced in [0.05, 1.95].
pub fn gamma_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|k| 0.05 + 1.9 * k as f64 / (n - 1) as f64).collect()
}

/// Runs absolute-damped K-GMRF from a small offset on a static noiseless
/// target for every (η, γ) and classifies convergence: the final error is
/// below half the initial and the error never exceeds ten times it.
pub fn stability_map(setup: &StabilitySetup, etas: &[f64], gammas: &[f64], jobs: usize) -> Result<StabilityMap> {
    let spec = Spectrum::new(&setup.spectrum)?;
    let km = kappa_max(&spec, setup.sigma2, crate::geometry::DEFAULT_EPS, true);
    let proto = Spd2Protocol {
        spectrum: setup.spectrum.clone(),
        omega: 0.0,
        sigma2: setup.sigma2,
        m_dof: 1,
        horizon: setup.horizon,
        dropout_p: 0.0,
    };
    let ds = noiseless_dataset(spd2_trajectory(&proto)?, setup.sigma2);
    let start = ds.traj.states[0].rotated(&RotMat::planar(setup.initial_offset_deg.to_radians()));
    let cells: Vec<(usize, usize)> = (0..gammas.len()).flat_map(|g| (0..etas.len()).map(move |e| (g, e))).collect();
    let outcomes = run_ordered(jobs, &cells, |&(g, e)| {
        let cfg = KgmrfConfig::new(etas[e], gammas[g], setup.sigma2).with_damping(Damping::Absolute);
        cfg.validate()?;
        let mut tr = KgmrfTracker::new(KgmrfState::new(start.clone()), cfg);
        let run = run_tracking_spd("kgmrf", 0, &mut tr, &ds);
        let init = setup.initial_offset_deg;
        let last = *run.errors.last().unwrap_or(&f64::NAN);
        let peak = run.errors.iter().copied().fold(0.0, f64::max);
        let ok = !run.diverged && last < 0.5 * init && peak <= 10.0 * init;
        Ok((ok, last))
    })?;

    let (ng, ne) = (gammas.len(), etas.len());
    let mut empirical = vec![vec![false; ne]; ng];
    let mut final_error = vec![vec![0.0; ne]; ng];
    let mut predicted = vec![vec![false; ne]; ng];
    let mut root_modulus = vec![vec![0.0; ne]; ng];
    for (k, &(g, e)) in cells.iter().enumerate() {
        empirical[g][e] = outcomes[k].0;
        final_error[g][e] = outcomes[k].1;
        let r = char_root_modulus(etas[e], gammas[g], km);
        root_modulus[g][e] = r;
        predicted[g][e] = r < 1.0;
    }
    let mut boundary = vec![vec![false; ne]; ng];
    let (mut agree, mut total) = (0usize, 0usize);
    for g in 0..ng {
        for e in 0..ne {
            let mut near = false;
            for (dg, de) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (gg, ee) = (g as i64 + dg, e as i64 + de);
                if gg >= 0 && ee >= 0 && (gg as usize) < ng && (ee as usize) < ne && predicted[gg as usize][ee as usize] != predicted[g][e] {
                    near = true;
                }
            }
            boundary[g][e] = near;
            if !near {
                total += 1;
                agree += (empirical[g][e] == predicted[g][e]) as usize;
            }
        }
    }
    let agreement_outside_band = if total == 0 { 1.0 } else { agree as f64 / total as f64 };
    Ok(StabilityMap {
        etas: etas.to_vec(),
        gammas: gammas.to_vec(),
        kappa_max: km,
        empirical,
        predicted,
        root_modulus,
        final_error,
        boundary,
        agreement_outside_band,
    })
}

/// Stability map as CSV rows `eta,gamma,root_modulus,predicted,empirical,boundary,final_error`.
pub fn stability_csv(map: &StabilityMap) -> String {
    use super::fmt_g;
    let mut out = String::from("eta,gamma,root_modulus,predicted_stable,empirical_converged,boundary,final_error\n");
    for (g, &gamma) in map.gammas.iter().enumerate() {
        for (e, &eta) in map.etas.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_g(eta),
                fmt_g(gamma),
                fmt_g(map.root_modulus[g][e]),
                map.predicted[g][e] as u8,
                map.empirical[g][e] as u8,
                map.boundary[g][e] as u8,
                fmt_g(map.final_error[g][e])
            ));
        }
    }
    out
}

/// Grid-searches each method's hyperparameters on the tuning seeds,
/// minimising the mean error on one SPD protocol.
pub fn tune_spd(proto: &Spd2Protocol, base: &SpdParams, seeds: &[u64], jobs: usize) -> Result<SpdParams> {
    super::check_seeds(seeds, &TUNE_SEEDS, "tuning")?;
    let opts = RunOptions { seeds: seeds.to_vec(), jobs, warm_start: true, timing: false };
    let score = |m: Method, p: &SpdParams| -> Result<f64> {
        let runs = run_ordered(opts.jobs, &opts.seeds, |&s| run_spd_cell(m, p, proto, s, &opts))?;
        Ok(super::mean(&runs.iter().map(|r| r.mean_error).collect::<Vec<_>>()))
    };
    let mut best = base.clone();

    let mut kg: Vec<SpdParams> = Vec::new();
    for eta in [0.01, 0.05, 0.1] {
        for gamma in [0.9, 0.95, 0.98, 1.0] {
            kg.push(SpdParams { eta, gamma, ..base.clone() });
        }
    }
    let (p, _) = argmin(&kg, |p| score(Method::Kgmrf, p))?;
    best.eta = p.eta;
    best.gamma = p.gamma;

    let ema: Vec<SpdParams> = [0.6, 0.7, 0.8, 0.9].iter().map(|&b| SpdParams { ema_weight: b, ..base.clone() }).collect();
    best.ema_weight = argmin(&ema, |p| score(Method::RiemEma, p))?.0.ema_weight;

    let mut kf = Vec::new();
    for q in [0.001, 0.005, 0.01] {
        for r in [0.05, 0.1, 0.2] {
            kf.push(SpdParams { kf_q: q, kf_r: r, ..base.clone() });
        }
    }
    let p = argmin(&kf, |p| score(Method::TangentKf, p))?.0;
    best.kf_q = p.kf_q;
    best.kf_r = p.kf_r;

    let mut ab = Vec::new();
    for a in [0.3, 0.4, 0.5, 0.6] {
        for b in [0.05, 0.1, 0.15] {
            ab.push(SpdParams { ab_alpha: a, ab_beta: b, ..base.clone() });
        }
    }
    let p = argmin(&ab, |p| score(Method::AlphaBeta, p))?.0;
    best.ab_alpha = p.ab_alpha;
    best.ab_beta = p.ab_beta;
    Ok(best)
}

/// The same grids on the SO(3) protocol at one dropout rate.
pub fn tune_so3(setup: &So3Setup, p_drop: f64, base: &So3Params, seeds: &[u64], jobs: usize) -> Result<So3Params> {
    super::check_seeds(seeds, &TUNE_SEEDS, "tuning")?;
    let opts = RunOptions { seeds: seeds.to_vec(), jobs, warm_start: true, timing: false };
    let score = |m: Method, p: &So3Params| -> Result<f64> {
        let runs = run_ordered(opts.jobs, &opts.seeds, |&s| run_so3_cell(m, p, setup, p_drop, s, &opts))?;
        Ok(super::mean(&runs.iter().map(|r| r.mean_error).collect::<Vec<_>>()))
    };
    let mut best = base.clone();

    let mut kg = Vec::new();
    for b in [0.01, 0.05, 0.1] {
        for g in [0.9, 0.95, 0.98, 1.0] {
            kg.push(So3Params { kg_beta: b, kg_gamma: g, ..base.clone() });
        }
    }
    let p = argmin(&kg, |p| score(Method::Kgmrf, p))?.0;
    best.kg_beta = p.kg_beta;
    best.kg_gamma = p.kg_gamma;

    let ema: Vec<So3Params> = [0.6, 0.7, 0.8, 0.9].iter().map(|&b| So3Params { ema_weight: b, ..base.clone() }).collect();
    best.ema_weight = argmin(&ema, |p| score(Method::RiemEma, p))?.0.ema_weight;

    let mut kf = Vec::new();
    for q in [0.001, 0.005, 0.01] {
        for r in [0.05, 0.1, 0.2] {
            kf.push(So3Params { kf_q: q, kf_r: r, ..base.clone() });
        }
    }
    let p = argmin(&kf, |p| score(Method::TangentKf, p))?.0;
    best.kf_q = p.kf_q;
    best.kf_r = p.kf_r;

    let mut ab = Vec::new();
    for a in [0.3, 0.4, 0.5, 0.6] {
        for b in [0.05, 0.1, 0.15] {
            ab.push(So3Params { ab_alpha: a, ab_beta: b, ..base.clone() });
        }
    }
    let p = argmin(&ab, |p| score(Method::AlphaBeta, p))?.0;
    best.ab_alpha = p.ab_alpha;
    best.ab_beta = p.ab_beta;
    Ok(best)
}

/// First minimiser; ties keep the earlier candidate.
fn argmin<T: Clone>(cands: &[T], mut f: impl FnMut(&T) -> Result<f64>) -> Result<(T, f64)> {
    let mut best: Option<(T, f64)> = None;
    for c in cands {
        let v = f(c)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if best.as_ref().map_or(true, |(_, b)| v < *b) {
            best = Some((c.clone(), v));
        }
    }
    best.ok_or_else(|| Error::InvalidParam("empty tuning grid".into()))
}

/// K-GMRF damped towards the trajectory's true velocity at every frame.
pub fn oracle_tracker(ds: &SpdDataset, cfg: KgmrfConfig, warm_start: bool) -> KgmrfTracker {
    let state = kgmrf_initial_state(&ds.traj.states[0], &ds.traj.velocities, warm_start);
    let mut tr = KgmrfTracker::new(state, cfg.with_damping(Damping::Oracle));
    tr.reference = Some(ds.traj.velocities.clone());
    tr
}
