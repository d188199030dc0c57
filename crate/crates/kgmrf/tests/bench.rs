use kgmrf::bench::*;
use kgmrf::synth::Spd2Protocol;

fn short() -> Spd2Protocol {
    Spd2Protocol { horizon: 80, ..Spd2Protocol::default() }
}

fn two_seeds() -> RunOptions {
    RunOptions { seeds: vec![5, 6], ..RunOptions::default() }
}

#[test]
fn tuning_seeds_are_rejected_for_evaluation() {
    let opts = RunOptions { seeds: vec![4, 5], ..RunOptions::default() };
    assert!(omega_sweep(&short(), &SpdParams::default(), &[0.08], &opts).is_err());
    assert!(tune_spd(&short(), &SpdParams::default(), &[5], 1).is_err());
}

#[test]
fn csv_layout() {
    let res = omega_sweep(&short(), &SpdParams::default(), &[0.05, 0.1], &two_seeds()).unwrap();
    let csv = csv_string(&res);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sweep_param,param_value,method,seed,mean_error,steady_error,runtime_s");
    // 2 values x 5 methods x 2 seeds
    assert_eq!(lines.len(), 1 + 20);
    assert!(lines[1].starts_with("omega,0.05,kgmrf,5,"));
    assert!(lines[2].starts_with("omega,0.05,kgmrf,6,"));
    assert!(lines.iter().skip(1).all(|l| l.ends_with(",NA")));
    assert!(!csv.contains('\r'));
}

#[test]
fn timing_fills_runtime_column() {
    let opts = RunOptions { timing: true, ..two_seeds() };
    let res = omega_sweep(&short(), &SpdParams::default(), &[0.05], &opts).unwrap();
    assert!(csv_string(&res).lines().skip(1).all(|l| !l.ends_with(",NA")));
}

#[test]
fn summary_is_versioned_and_nulls_non_finite() {
    let mut res = omega_sweep(&short(), &SpdParams::default(), &[0.05], &two_seeds()).unwrap();
    res.series[0].mean[0] = f64::NAN;
    let v: serde_json::Value = serde_json::from_str(&summary_json(&[&res], None)).unwrap();
    assert_eq!(v["schema"], 1);
    assert!(v["sweeps"][0]["series"][0]["mean"][0].is_null());
    assert_eq!(v["sweeps"][0]["metric"], "steady");
}

#[test]
fn svg_canvas() {
    let res = omega_sweep(&short(), &SpdParams::default(), &[0.05, 0.1], &two_seeds()).unwrap();
    let svg = svg_string(&res);
    assert!(svg.contains(r#"viewBox="0 0 800 500""#));
    assert_eq!(svg.matches("<polyline").count(), 5);
    assert!(!svg.contains("@font-face") && !svg.contains("href"));
}

#[test]
fn std_is_over_seeds() {
    let res = omega_sweep(&short(), &SpdParams::default(), &[0.08], &two_seeds()).unwrap();
    let cells: Vec<f64> = res.cells.iter().filter(|c| c.method == "riem_ema").map(|c| c.steady_error).collect();
    let s = res.series("riem_ema").unwrap();
    assert!((s.mean[0] - mean(&cells)).abs() < 1e-12);
    assert!((s.std[0] - sample_std(&cells)).abs() < 1e-12);
}

#[test]
fn divergent_cells_are_capped_not_dropped() {
    let params = SpdParams { eta: 50.0, gamma: 0.05, rho: 0.0, ..SpdParams::default() };
    let res = omega_sweep(&short(), &params, &[0.08], &two_seeds()).unwrap();
    let kg: Vec<&Cell> = res.cells.iter().filter(|c| c.method == "kgmrf").collect();
    assert_eq!(kg.len(), 2);
    assert!(kg.iter().all(|c| c.mean_error <= ERROR_CAP_DEG && c.mean_error.is_finite()));
}

#[test]
fn ablation_without_both_is_the_euclidean_ema() {
    let proto = short();
    let abl = ablation_grid(&proto, &SpdParams::default(), &[0.0], &two_seeds()).unwrap();
    let sweep = omega_sweep(&proto, &SpdParams::default(), &[proto.omega], &two_seeds()).unwrap();
    let a: Vec<f64> = abl.cells.iter().filter(|c| c.method == "no_both").map(|c| c.steady_error).collect();
    let b: Vec<f64> = sweep.cells.iter().filter(|c| c.method == "eucl_ema").map(|c| c.steady_error).collect();
    assert_eq!(a, b);
}

#[test]
fn momentum_matters() {
    let abl = ablation_grid(&Spd2Protocol::default(), &SpdParams::default(), &[0.0], &two_seeds()).unwrap();
    let full = abl.series("full").unwrap().mean[0];
    let no_mom = abl.series("no_momentum").unwrap().mean[0];
    assert!(no_mom >= 5.0 * full, "{no_mom} vs {full}");
}

#[test]
fn stability_map_small_grid() {
    let map = stability_map(&StabilitySetup::default(), &eta_grid(0.5, 5), &[1.99], 1).unwrap();
    assert!(map.divergent_cells() >= 1);
    let map = stability_map(&StabilitySetup::default(), &[0.01], &[0.95], 1).unwrap();
    assert!(map.empirical[0][0] && map.predicted[0][0]);
}

#[test]
fn grids_are_ordered() {
    assert_eq!(eta_grid(1.0, 4), vec![0.25, 0.5, 0.75, 1.0]);
    let g = gamma_grid(20);
    assert_eq!(g.len(), 20);
    assert!(g.windows(2).all(|w| w[0] < w[1]) && g[0] > 0.0 && g[19] < 2.0);
}
