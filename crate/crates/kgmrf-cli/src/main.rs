use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kgmrf::bench::{
    ablation_grid, dropout_sweep, eta_grid, fmt_g, gamma_grid, master_validation, omega_sweep, spectral_gap_sweep,
    stability_csv, stability_map, summary_json, svg_string, tune_so3, tune_spd, csv_string, GapSetup, MasterSetup,
    RunOptions, So3Params, So3Setup, SpdParams, StabilitySetup, SweepResult, ABLATION_CONDITIONS, DELTA_GRID,
    DROPOUT_GRID, OMEGA_GRID, TUNE_SEEDS,
};
use kgmrf::region_cov::{load_otb_dir, read_pnm, summarize_track, track_csv, track_sequence, TrackConfig};
use kgmrf::synth::Spd2Protocol;

mod config;

use config::{keys_help, load_config, parse_seeds, Overrides};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or paths. Exit 2.
    Usage(String),
    /// Parameters or results rejected. Exit 1.
    Failed(String),
}

impl From<kgmrf::Error> for CliError {
    fn from(e: kgmrf::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "kgmrf", version, about = "Geometric tracking experiments: sweeps, validation checks and a region-covariance tracker")]
#[command(after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Flat `key = value` config file; flags win over its values [default: none]
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Comma-separated evaluation seeds, a subset of 5..9 [default: 5,6,7,8,9]
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    /// Worker threads [default: 1]
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Re-tune hyperparameters on seeds 0..4 before evaluating [default: off]
    #[arg(long)]
    tune: bool,
    /// Record per-cell wall-clock time; makes output non-reproducible [default: off]
    #[arg(long)]
    timing: bool,
    /// K-GMRF step size [default: 0.05; spectral-gap 0.01]
    #[arg(long)]
    eta: Option<f64>,
    /// K-GMRF damping; for stability-map, the single gamma column [default: 0.95; spectral-gap 1.0; stability-map full grid]
    #[arg(long)]
    gamma: Option<f64>,
    /// Stability map: largest eta on the grid [default: 4]
    #[arg(long)]
    eta_max: Option<f64>,
    /// Any config key, as KEY=VALUE; repeatable [default: none]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// SPD(2) tracking error of all methods across angular velocities
    EllipseSweep(Common),
    /// SO(3) tracking error of all methods across dropout rates
    So3Dropout(Common),
    /// K-GMRF vs Riemannian EMA across eigenvalue gaps under heavy noise
    SpectralGap(Common),
    /// Momentum and preconditioner ablations with and without dropout
    Ablation(Common),
    /// Error scaling in m, velocity variation and the initial transient
    MasterValidate(Common),
    /// Empirical vs predicted stability over an (eta, gamma) grid
    StabilityMap(Common),
    /// Region-covariance tracking on an OTB-format sequence directory
    OtbTrack {
        /// Sequence directory with img/ frames (.ppm/.pgm) and groundtruth_rect.txt
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical identities, invariants and determinism checks
    Selftest(Common),
}

/// Everything a subcommand needs, resolved from defaults, file and flags.
struct RunConfig {
    out: PathBuf,
    opts: RunOptions,
    tune: bool,
    emit_csv: bool,
    emit_json: bool,
    emit_svg: bool,
    ov: Overrides,
}

impl RunConfig {
    fn resolve(c: &Common) -> CliResult<RunConfig> {
        let mut ov = match &c.config {
            Some(p) => load_config(p)?,
            None => Overrides::default(),
        };
        for kv in &c.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            ov.insert(k.trim(), v.trim().to_string())?;
        }
        if let Some(o) = &c.out {
            ov.insert("out", o.display().to_string())?;
        }
        if let Some(s) = &c.seeds {
            ov.insert("seeds", s.clone())?;
        }
        if let Some(j) = c.jobs {
            ov.insert("jobs", j.to_string())?;
        }
        if c.tune {
            ov.insert("tune", "true".into())?;
        }
        if c.timing {
            ov.insert("timing", "true".into())?;
        }
        if let Some(v) = c.eta {
            ov.insert("eta", v.to_string())?;
        }
        if let Some(v) = c.gamma {
            ov.insert("gamma", v.to_string())?;
        }
        if let Some(v) = c.eta_max {
            ov.insert("eta_max", v.to_string())?;
        }

        let mut opts = RunOptions::default();
        if let Some(s) = ov.raw("seeds") {
            opts.seeds = parse_seeds(s)?;
        }
        ov.apply("jobs", &mut opts.jobs)?;
        ov.apply("timing", &mut opts.timing)?;
        ov.apply("warm_start", &mut opts.warm_start)?;
        if opts.jobs == 0 {
            return Err(CliError::Usage("jobs must be >= 1".into()));
        }
        opts.validate_test()?;

        let mut rc = RunConfig {
            out: PathBuf::from("out"),
            opts,
            tune: false,
            emit_csv: true,
            emit_json: true,
            emit_svg: true,
            ov,
        };
        rc.ov.apply("out", &mut rc.out)?;
        rc.ov.apply("tune", &mut rc.tune)?;
        rc.ov.apply("emit_csv", &mut rc.emit_csv)?;
        rc.ov.apply("emit_json", &mut rc.emit_json)?;
        rc.ov.apply("emit_svg", &mut rc.emit_svg)?;
        Ok(rc)
    }

    fn spd_params(&self, mut p: SpdParams) -> CliResult<SpdParams> {
        let ov = &self.ov;
        ov.apply("eta", &mut p.eta)?;
        ov.apply("gamma", &mut p.gamma)?;
        ov.apply("rho", &mut p.rho)?;
        if let Some(s) = ov.optional_f64("obs_smoothing")? {
            p.obs_smoothing = s;
        }
        ov.apply("ema_weight", &mut p.ema_weight)?;
        ov.apply("kf_q", &mut p.kf_q)?;
        ov.apply("kf_r", &mut p.kf_r)?;
        ov.apply("ab_alpha", &mut p.ab_alpha)?;
        ov.apply("ab_beta", &mut p.ab_beta)?;
        Ok(p)
    }

    fn so3_params(&self) -> CliResult<So3Params> {
        let mut p = So3Params::default();
        let ov = &self.ov;
        ov.apply("so3_alpha", &mut p.kg_alpha)?;
        ov.apply("so3_beta", &mut p.kg_beta)?;
        ov.apply("so3_gamma", &mut p.kg_gamma)?;
        ov.apply("so3_ema_weight", &mut p.ema_weight)?;
        ov.apply("so3_kf_q", &mut p.kf_q)?;
        ov.apply("so3_kf_r", &mut p.kf_r)?;
        ov.apply("so3_ab_alpha", &mut p.ab_alpha)?;
        ov.apply("so3_ab_beta", &mut p.ab_beta)?;
        Ok(p)
    }

    fn so3_setup(&self) -> CliResult<So3Setup> {
        let mut s = So3Setup::default();
        self.ov.apply("so3_sigma_r", &mut s.sigma_r)?;
        self.ov.apply("so3_horizon", &mut s.horizon)?;
        Ok(s)
    }

    fn spd_proto(&self) -> CliResult<Spd2Protocol> {
        let mut p = Spd2Protocol::default();
        self.ov.apply("omega", &mut p.omega)?;
        self.ov.apply("sigma2", &mut p.sigma2)?;
        self.ov.apply("m_dof", &mut p.m_dof)?;
        self.ov.apply("horizon", &mut p.horizon)?;
        p.validate()?;
        Ok(p)
    }

    fn prepare_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Failed(format!("cannot create output directory {}: {e}", self.out.display())))
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn emit(&self, cmd: &str, sweeps: &[&SweepResult], extra: serde_json::Value) -> CliResult<()> {
        self.prepare_out()?;
        for s in sweeps {
            if self.emit_csv {
                self.write(&format!("{}.csv", s.name), &csv_string(s))?;
            }
            if self.emit_svg {
                self.write(&format!("{}.svg", s.name), &svg_string(s))?;
            }
        }
        if self.emit_json {
            self.write(&format!("summary-{cmd}.json"), &summary_json(sweeps, Some(extra)))?;
        }
        Ok(())
    }
}

fn print_sweep(res: &SweepResult) {
    println!("{} ({} error, deg, mean ± std over seeds)", res.name, res.metric.name());
    print!("{:>12}", res.param);
    for s in &res.series {
        print!(" {:>20}", s.method);
    }
    println!();
    for (k, v) in res.values.iter().enumerate() {
        print!("{:>12}", fmt_g(*v));
        for s in &res.series {
            print!(" {:>20}", format!("{} ± {}", fmt_g(round3(s.mean[k])), fmt_g(round3(s.std[k]))));
        }
        println!();
    }
    for f in &res.fits {
        println!("{} fit ({}): slope {}, R² {}", f.method, f.kind, fmt_g(f.fit.slope), fmt_g(f.fit.r2));
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn tuned_spd(rc: &RunConfig, proto: &Spd2Protocol, base: SpdParams) -> CliResult<SpdParams> {
    if !rc.tune {
        return Ok(base);
    }
    let p = tune_spd(proto, &base, &TUNE_SEEDS, rc.opts.jobs)?;
    println!(
        "tuned on seeds 0..4: eta {} gamma {} ema_weight {} kf_q {} kf_r {} ab_alpha {} ab_beta {}",
        p.eta, p.gamma, p.ema_weight, p.kf_q, p.kf_r, p.ab_alpha, p.ab_beta
    );
    Ok(p)
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn ellipse_sweep(rc: &RunConfig) -> CliResult<()> {
    let proto = rc.spd_proto()?;
    let params = tuned_spd(rc, &proto, rc.spd_params(SpdParams::default())?)?;
    let res = omega_sweep(&proto, &params, &OMEGA_GRID, &rc.opts)?;
    print_sweep(&res);
    rc.emit("ellipse-sweep", &[&res], json!({"params": to_json(&params), "protocol": to_json(&proto)}))
}

fn so3_dropout(rc: &RunConfig) -> CliResult<()> {
    let setup = rc.so3_setup()?;
    let mut params = rc.so3_params()?;
    if rc.tune {
        params = tune_so3(&setup, 0.2, &params, &TUNE_SEEDS, rc.opts.jobs)?;
        println!(
            "tuned on seeds 0..4: so3_beta {} so3_gamma {} so3_ema_weight {} so3_kf_q {} so3_kf_r {} so3_ab_alpha {} so3_ab_beta {}",
            params.kg_beta, params.kg_gamma, params.ema_weight, params.kf_q, params.kf_r, params.ab_alpha, params.ab_beta
        );
    }
    let res = dropout_sweep(&setup, &params, &DROPOUT_GRID, &rc.opts)?;
    print_sweep(&res);
    rc.emit("so3-dropout", &[&res], json!({"params": to_json(&params), "setup": to_json(&setup)}))
}

fn spectral_gap(rc: &RunConfig) -> CliResult<()> {
    let mut setup = GapSetup::default();
    rc.ov.apply("gap_omega", &mut setup.omega)?;
    rc.ov.apply("gap_sigma2", &mut setup.sigma2)?;
    rc.ov.apply("m_dof", &mut setup.m_dof)?;
    rc.ov.apply("horizon", &mut setup.horizon)?;
    setup.params = rc.spd_params(setup.params.clone())?;
    if rc.tune {
        let proto = Spd2Protocol {
            spectrum: vec![1.3, 1.0],
            omega: setup.omega,
            sigma2: setup.sigma2,
            m_dof: setup.m_dof,
            horizon: setup.horizon,
            dropout_p: 0.0,
        };
        setup.params = tuned_spd(rc, &proto, setup.params.clone())?;
    }
    let res = spectral_gap_sweep(&setup, &DELTA_GRID, &rc.opts)?;
    print_sweep(&res);
    let ratios: Vec<f64> = match (res.series("riem_ema"), res.series("kgmrf")) {
        (Some(e), Some(k)) => e.mean.iter().zip(&k.mean).map(|(a, b)| a / b).collect(),
        _ => Vec::new(),
    };
    println!("ema / kgmrf: {}", ratios.iter().map(|r| fmt_g(round3(*r))).collect::<Vec<_>>().join(" "));
    rc.emit("spectral-gap", &[&res], json!({"setup": to_json(&setup), "ema_over_kgmrf": ratios}))
}

fn ablation(rc: &RunConfig) -> CliResult<()> {
    let proto = rc.spd_proto()?;
    let params = tuned_spd(rc, &proto, rc.spd_params(SpdParams::default())?)?;
    let res = ablation_grid(&proto, &params, &ABLATION_CONDITIONS, &rc.opts)?;
    print_sweep(&res);
    rc.emit("ablation", &[&res], json!({"params": to_json(&params), "protocol": to_json(&proto)}))
}

fn master_validate(rc: &RunConfig) -> CliResult<()> {
    let mut setup = MasterSetup { proto: rc.spd_proto()?, ..MasterSetup::default() };
    setup.params = tuned_spd(rc, &setup.proto, rc.spd_params(SpdParams::default())?)?;
    let mv = master_validation(&setup, &rc.opts)?;
    print_sweep(&mv.m_sweep);
    print_sweep(&mv.v_sweep);
    if let Some((k, r2)) = mv.transient.kappa_fit {
        println!("transient: kappa {}, R² {}, {} frames fitted", fmt_g(k), fmt_g(r2), mv.transient.values.len());
    }
    rc.emit("master-validate", &[&mv.m_sweep, &mv.v_sweep, &mv.transient], json!({"setup": to_json(&setup)}))
}

fn stability(rc: &RunConfig) -> CliResult<()> {
    let mut eta_max = 4.0;
    let mut n = 20usize;
    rc.ov.apply("eta_max", &mut eta_max)?;
    rc.ov.apply("grid", &mut n)?;
    if !(eta_max > 0.0) || n == 0 {
        return Err(CliError::Failed("eta_max must be > 0 and grid >= 1".into()));
    }
    // here --gamma picks a single column instead of the filter's damping
    let gamma = match rc.ov.optional_f64("stability_gamma")? {
        Some(g) => g,
        None => rc.ov.get::<f64>("gamma")?,
    };
    let gammas = match gamma {
        Some(g) => vec![g],
        None => gamma_grid(n),
    };
    let setup = StabilitySetup::default();
    let map = stability_map(&setup, &eta_grid(eta_max, n), &gammas, rc.opts.jobs)?;
    let cells = map.etas.len() * map.gammas.len();
    println!("kappa_max {}", fmt_g(map.kappa_max));
    println!("divergent cells: {} of {}", map.divergent_cells(), cells);
    println!("agreement with root-modulus prediction outside the boundary band: {}", fmt_g(map.agreement_outside_band));
    rc.prepare_out()?;
    if rc.emit_csv {
        rc.write("stability_map.csv", &stability_csv(&map))?;
    }
    if rc.emit_json {
        let extra = json!({
            "stability": {
                "setup": to_json(&setup),
                "kappa_max": map.kappa_max,
                "cells": cells,
                "divergent_cells": map.divergent_cells(),
                "agreement_outside_band": map.agreement_outside_band,
            }
        });
        rc.write("summary-stability-map.json", &summary_json(&[], Some(extra)))?;
    }
    Ok(())
}

fn otb_track(rc: &RunConfig, dir: &Path) -> CliResult<()> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("dataset directory {} not found", dir.display())));
    }
    let (paths, gt) = load_otb_dir(dir)?;
    let frames = paths.iter().map(|p| read_pnm(p)).collect::<Result<Vec<_>, _>>()?;
    let p = rc.spd_params(SpdParams::default())?;
    let mut cfg = TrackConfig { eta: p.eta, gamma: p.gamma, rho: p.rho, ..TrackConfig::default() };
    rc.ov.apply("track_stride", &mut cfg.stride)?;
    rc.ov.apply("track_lost_threshold", &mut cfg.lost_threshold)?;
    rc.ov.apply("track_sigma2_rel", &mut cfg.sigma2_rel)?;
    let track = track_sequence(&frames, gt[0], Some(&gt), &cfg)?;
    let summary = summarize_track(&track);
    println!(
        "{} frames, mean IoU {}, success rate {}, lost {}",
        summary.frames,
        fmt_g(summary.mean_iou),
        fmt_g(summary.success_rate),
        summary.lost_frames
    );
    rc.prepare_out()?;
    if rc.emit_csv {
        rc.write("track.csv", &track_csv(&track))?;
    }
    if rc.emit_json {
        rc.write("summary-otb-track.json", &summary_json(&[], Some(json!({"track": to_json(&summary), "config": to_json(&cfg)}))))?;
    }
    Ok(())
}

fn selftest(rc: &RunConfig) -> CliResult<()> {
    let checks = kgmrf::selftest::run_all()?;
    let report = kgmrf::selftest::report(&checks);
    print!("{report}");
    rc.prepare_out()?;
    rc.write("selftest.txt", &report)?;
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(CliError::Failed("selftest failures".into()))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.cmd {
        Cmd::EllipseSweep(c) => ellipse_sweep(&RunConfig::resolve(c)?),
        Cmd::So3Dropout(c) => so3_dropout(&RunConfig::resolve(c)?),
        Cmd::SpectralGap(c) => spectral_gap(&RunConfig::resolve(c)?),
        Cmd::Ablation(c) => ablation(&RunConfig::resolve(c)?),
        Cmd::MasterValidate(c) => master_validate(&RunConfig::resolve(c)?),
        Cmd::StabilityMap(c) => stability(&RunConfig::resolve(c)?),
        Cmd::OtbTrack { dir, common } => otb_track(&RunConfig::resolve(common)?, dir),
        Cmd::Selftest(c) => selftest(&RunConfig::resolve(c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
