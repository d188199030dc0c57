//! Property checks that need no data: the numerical identities behind the
//! filter plus a few determinism and round-trip checks. The CLI's
//! `selftest` prints one line per check.

use crate::bench::{
    fmt_g, loglog_fit, noiseless_dataset, omega_sweep, oracle_tracker, run_tracking_spd, summarize, Fit, RunOptions,
    SpdParams, TEST_SEEDS,
};
use crate::error::Result;
use crate::filters::{kgmrf_step, stability_check, KgmrfConfig, KgmrfState};
use crate::geometry::{
    curvature_closed_form, directional_d2v, directional_dv, torque, NoiseModel, OrbitState, Spectrum, FD_STEP,
};
use crate::linalg::{expm_skew, frob_inner, logm_rot, Mat, RotMat, SkewMat, SymMat};
use crate::region_cov::{brute_force_covariance, build_features, decode_pnm, encode_pnm, iou, region_covariance, BBox, Image};
use crate::synth::{spd2_dataset, spd2_trajectory, wishart_obs, Rng, Spd2Protocol};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_skew(rng: &mut Rng, d: usize, scale: f64) -> SkewMat {
    SkewMat::new(&Mat::from_fn(d, |_, _| scale * rng.gaussian()))
}

fn random_rotation(rng: &mut Rng, d: usize) -> RotMat {
    expm_skew(&random_skew(rng, d, 1.0))
}

/// Strictly decreasing spectrum in [0.2, 3.2] with gaps of at least 0.1.
fn random_spectrum(rng: &mut Rng, d: usize) -> Spectrum {
    let mut v: Vec<f64> = Vec::with_capacity(d);
    let mut x = rng.uniform_in(0.2, 0.8);
    for _ in 0..d {
        v.push(x);
        x += rng.uniform_in(0.1, 1.2);
    }
    v.reverse();
    Spectrum::new(&v).expect("gaps are positive")
}

/// Largest relative mismatch between the central-difference derivative of
/// the Wishart NLL along exp(tw)·M·exp(tw)ᵀ and −⟨(m/2)τ, w⟩_F, over random
/// (M, C, w) in d = 2 and 3.
pub fn gradient_consistency(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed, "selftest/gradient");
    let mut worst: f64 = 0.0;
    for k in 0..cases {
        let d = 2 + k % 2;
        let spec = random_spectrum(&mut rng, d);
        let state = OrbitState::from_rotation(&spec, &random_rotation(&mut rng, d));
        let noise = NoiseModel::new(rng.uniform_in(0.05, 1.0), 1 + (rng.next_u64() % 16) as u32)?;
        let truth = OrbitState::from_rotation(&spec, &random_rotation(&mut rng, d));
        let c = wishart_obs(&mut rng, &truth.m().add_identity(noise.sigma2), 4)?;
        let w = random_skew(&mut rng, d, 1.0);
        let fd = directional_dv(&state, &c, &noise, &w, FD_STEP)?;
        let tau = torque(&state, &c, &noise)?;
        let an = -0.5 * noise.m_dof as f64 * frob_inner(tau.mat(), w.mat());
        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Largest relative mismatch between the second difference of the
/// population NLL (C = M* + σ²I) at M* and twice the quadratic
/// coefficient (m/4)Σ w_ij²(λ_i − λ_j)²/((λ_i + σ²)(λ_j + σ²)).
pub fn curvature_consistency(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed, "selftest/curvature");
    let mut worst: f64 = 0.0;
    for k in 0..cases {
        let d = 2 + k % 2;
        let spec = random_spectrum(&mut rng, d);
        let q = random_rotation(&mut rng, d);
        let state = OrbitState::from_rotation(&spec, &q);
        let noise = NoiseModel::new(rng.uniform_in(0.05, 1.0), 8)?;
        let c = state.m().add_identity(noise.sigma2);
        // unit direction, so the second difference is not lost in roundoff
        let w = random_skew(&mut rng, d, 1.0);
        let w = w.scale(1.0 / w.frob_norm());
        let fd = directional_d2v(&state, &c, &noise, &w, 1e-4)?;
        // the closed form reads w in the eigenbasis of M*
        let w_eig = SkewMat::new(&q.transpose().congruence(w.mat()));
        let closed = 2.0 * curvature_closed_form(&spec, noise.sigma2, noise.m_dof, &w_eig);
        worst = worst.max((fd - closed).abs() / closed.abs().max(1e-12));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorqueStats {
    /// Largest |mean| / standard error over entries and m values.
    pub max_z: f64,
    pub m_values: Vec<f64>,
    pub variances: Vec<f64>,
    pub fit: Fit,
}

/// Monte-Carlo torque at the truth: the mean should vanish and E‖τ‖²
/// should fall as 1/m.
pub fn torque_statistics(samples: usize, seed: u64) -> Result<TorqueStats> {
    let spec = Spectrum::new(&[2.0, 0.5])?;
    let state = OrbitState::from_rotation(&spec, &RotMat::planar(0.3));
    let m_values = vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let mut variances = Vec::new();
    let mut max_z: f64 = 0.0;
    for &m in &m_values {
        let noise = NoiseModel::new(0.1, m as u32)?;
        let s = state.m().add_identity(noise.sigma2);
        let mut rng = Rng::new(seed, &format!("selftest/torque/{m}"));
        let (mut sum, mut sum2, mut sq) = (0.0, 0.0, 0.0);
        for _ in 0..samples {
            let c = wishart_obs(&mut rng, &s, m as u32)?;
            let t = torque(&state, &c, &noise)?;
            let x = t[(0, 1)];
            sum += x;
            sum2 += x * x;
            sq += t.frob_norm().powi(2);
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = (sum2 - n * mean * mean) / (n - 1.0);
        max_z = max_z.max(mean.abs() / (var / n).sqrt());
        variances.push(sq / n);
    }
    let fit = loglog_fit(&m_values, &variances);
    Ok(TorqueStats { max_z, m_values, variances, fit })
}

/// Largest eigenvalue drift of the drift step before and after re-snapping
/// over `steps` noisy K-GMRF steps on a 3×3 orbit.
pub fn orbit_drift(steps: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = Rng::new(seed, "selftest/orbit");
    let spec = Spectrum::new(&[3.0, 1.5, 0.5])?;
    let cfg = KgmrfConfig::new(0.05, 0.95, 0.1);
    let mut truth = OrbitState::base(&spec);
    let mut state = KgmrfState::new(truth.clone());
    let w = SkewMat::new(&Mat::from_rows(&[&[0.0, -0.05, 0.02], &[0.05, 0.0, -0.03], &[-0.02, 0.03, 0.0]]));
    let step = expm_skew(&w);
    let (mut raw, mut snapped) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        let c = wishart_obs(&mut rng, &truth.m().add_identity(0.1), 8)?;
        state = kgmrf_step(&state, &cfg, Some(&c))?;
        raw = raw.max(state.raw_drift);
        snapped = snapped.max(state.snapped_drift);
        truth = truth.rotated(&step);
    }
    Ok((raw, snapped))
}

/// Steady-state error of the oracle-damped filter on the noiseless
/// ω = 0.08 ellipse.
pub fn zero_lag_error(eta: f64, gamma: f64) -> Result<f64> {
    let proto = Spd2Protocol::default();
    let ds = noiseless_dataset(spd2_trajectory(&proto)?, proto.sigma2);
    let mut tr = oracle_tracker(&ds, KgmrfConfig::new(eta, gamma, proto.sigma2), true);
    Ok(run_tracking_spd("kgmrf", 0, &mut tr, &ds).steady_error)
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Every check, in a fixed order. Output text is a pure function of the
/// build.
pub fn run_all() -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let g = gradient_consistency(200, 1)?;
    out.push(check("gradient_consistency", g <= 1e-5, format!("max rel err {}", fmt_g(g))));

    let c = curvature_consistency(50, 2)?;
    out.push(check("curvature_closed_form", c <= 1e-4, format!("max rel err {}", fmt_g(c))));

    let t = torque_statistics(4000, 3)?;
    out.push(check(
        "torque_unbiased_and_1_over_m",
        t.max_z <= 3.0 && (-1.1..=-0.9).contains(&t.fit.slope),
        format!("max |z| {}, variance slope {}", fmt_g(t.max_z), fmt_g(t.fit.slope)),
    ));

    let (raw, snapped) = orbit_drift(1000, 4)?;
    out.push(check(
        "orbit_invariance",
        raw <= 1e-8 && snapped <= 1e-8,
        format!("drift before snap {}, after {}", fmt_g(raw), fmt_g(snapped)),
    ));

    let z = zero_lag_error(0.05, 0.95)?;
    out.push(check("oracle_zero_lag", z < 0.1, format!("steady error {} deg", fmt_g(z))));

    let bound: f64 = 2.0 * (2.0 - 0.95) / 10.0;
    out.push(check(
        "stability_domain",
        stability_check(0.01, 0.95, 1.0) && !stability_check(bound * 1.0001, 0.95, 10.0) && !stability_check(0.1, 2.0, 1.0),
        format!("bound at gamma 0.95, kappa 10: {}", fmt_g(bound)),
    ));

    let mut rng = Rng::new(5, "selftest/lie");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = random_skew(&mut rng, 3, 0.5);
        let back = logm_rot(&expm_skew(&w))?;
        worst = worst.max((back.mat() - w.mat()).max_abs());
    }
    out.push(check("exp_log_round_trip", worst < 1e-12, format!("max err {}", fmt_g(worst))));

    let mut rng = Rng::new(6, "selftest/wishart");
    let s = SymMat::new(&Mat::from_rows(&[&[2.1, 0.3], &[0.3, 0.6]]));
    let n = 20000;
    let mut acc = Mat::zeros(2);
    for _ in 0..n {
        acc = &acc + wishart_obs(&mut rng, &s, 8)?.mat();
    }
    let mean_err = (&acc.scale(1.0 / n as f64) - s.mat()).max_abs();
    out.push(check("wishart_mean", mean_err < 0.02, format!("max entry err {}", fmt_g(mean_err))));

    let mut rng = Rng::new(7, "selftest/image");
    let data = (0..32 * 24 * 3).map(|_| (rng.next_u64() % 256) as u8).collect();
    let img = Image::new(32, 24, 3, data)?;
    let round = decode_pnm(&encode_pnm(&img))? == img;
    let feat = build_features(&img);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = (rng.next_u64() % 30) as i64;
        let y = (rng.next_u64() % 22) as i64;
        let b = BBox::new(x, y, 2 + (rng.next_u64() % (30 - x as u64)) as i64, 2 + (rng.next_u64() % (22 - y as u64)) as i64);
        let a = region_covariance(&feat, &b, 0.0)?;
        worst = worst.max((a.mat() - brute_force_covariance(&feat, &b)?.mat()).max_abs());
    }
    out.push(check("pnm_round_trip", round, String::new()));
    out.push(check("integral_covariance", worst <= 1e-6, format!("max abs diff {}", fmt_g(worst))));
    let q = iou(&BBox::new(0, 0, 2, 2), &BBox::new(1, 1, 2, 2));
    out.push(check("iou", (q - 1.0 / 7.0).abs() < 1e-15, format!("overlap case {}", fmt_g(q))));

    let ds = spd2_dataset(&Spd2Protocol::default(), 5)?;
    let ds2 = spd2_dataset(&Spd2Protocol::default(), 5)?;
    let same = ds.obs == ds2.obs && ds.mask == ds2.mask;
    out.push(check("generator_determinism", same, String::new()));

    let opts1 = RunOptions { seeds: TEST_SEEDS[..2].to_vec(), jobs: 1, ..RunOptions::default() };
    let opts4 = RunOptions { jobs: 4, ..opts1.clone() };
    let proto = Spd2Protocol { horizon: 100, ..Spd2Protocol::default() };
    let a = omega_sweep(&proto, &SpdParams::default(), &[0.05, 0.1], &opts1)?;
    let b = omega_sweep(&proto, &SpdParams::default(), &[0.05, 0.1], &opts4)?;
    out.push(check("jobs_invariance", crate::bench::csv_string(&a) == crate::bench::csv_string(&b), String::new()));

    let (m, s) = summarize(&[0.0; 40]);
    out.push(check("zero_series_summary", m == 0.0 && s == 0.0, String::new()));
    Ok(out)
}

pub fn report(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            s.push_str(&format!("{tag} {}\n", c.name));
        } else {
            s.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
        }
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    s.push_str(&format!("{passed}/{} checks passed\n", checks.len()));
    s
}
