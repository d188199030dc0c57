//! Seeded generators: trajectories on the orbit and on SO(3), Wishart and
//! rotation observations, dropout masks.
//!
//! Randomness comes from ChaCha8 keyed by the seed, with the stream number
//! taken from a hash of a purpose label. Two labels never share a stream, so
//! e.g. changing the dropout rate leaves the observation noise untouched.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{OrbitState, Spectrum};
use crate::linalg::{expm_skew, sym_eig, Mat, RotMat, SkewMat, SymMat};

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic random stream for a (seed, label) pair.
pub struct Rng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64, label: &str) -> Rng {
        let mut s = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(fnv1a(label));
        Rng { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller; the second variate is cached.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

pub fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian()).collect()
}

/// C = (1/m) Σ v vᵀ with v = U·diag(√λ)·z, z standard normal.
pub fn wishart_obs(rng: &mut Rng, s_star: &SymMat, m_dof: u32) -> Result<SymMat> {
    if m_dof == 0 {
        return Err(Error::InvalidParam("m_dof must be >= 1".into()));
    }
    let e = sym_eig(s_star)?;
    let min = *e.values.last().unwrap();
    if min < -1e-12 * (1.0 + e.values[0].abs()) {
        return Err(Error::NotPsd(min));
    }
    let n = s_star.dim();
    let l = Mat::from_fn(n, |i, k| e.vectors[(i, k)] * e.values[k].max(0.0).sqrt());
    let mut c = Mat::zeros(n);
    let mut v = vec![0.0; n];
    for _ in 0..m_dof {
        let z = gaussian(rng, n);
        for i in 0..n {
            v[i] = (0..n).map(|k| l[(i, k)] * z[k]).sum();
        }
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] += v[i] * v[j];
            }
        }
    }
    Ok(SymMat::new(&c.scale(1.0 / m_dof as f64)))
}

/// present[t] is false with probability p.
pub fn dropout_mask(rng: &mut Rng, horizon: usize, p: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("dropout probability must be in [0, 1), got {p}")));
    }
    Ok((0..horizon).map(|_| rng.uniform() >= p).collect())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Spd2Protocol {
    pub spectrum: Vec<f64>,
    pub omega: f64,
    pub sigma2: f64,
    pub m_dof: u32,
    pub horizon: usize,
    pub dropout_p: f64,
}

impl Default for Spd2Protocol {
    fn default() -> Self {
        Spd2Protocol { spectrum: vec![2.0, 0.5], omega: 0.08, sigma2: 0.1, m_dof: 8, horizon: 400, dropout_p: 0.0 }
    }
}

impl Spd2Protocol {
    pub fn validate(&self) -> Result<Spectrum> {
        if self.horizon < 1 {
            return Err(Error::InvalidParam("horizon must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidParam(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidParam("omega must be finite".into()));
        }
        Spectrum::new(&self.spectrum)
    }
}

/// Ground truth on the orbit: states[t + 1] = exp(Ω_t)·states[t]·exp(Ω_t)ᵀ.
/// `states` holds horizon + 1 points.
#[derive(Clone, Debug)]
pub struct SpdTrajectory {
    pub states: Vec<OrbitState>,
    pub velocities: Vec<SkewMat>,
    pub total_variation: f64,
}

/// Ground truth on SO(3): states[t + 1] = states[t]·exp(Ω_t).
#[derive(Clone, Debug)]
pub struct So3Trajectory {
    pub states: Vec<RotMat>,
    pub velocities: Vec<SkewMat>,
    pub total_variation: f64,
}

fn total_variation(v: &[SkewMat]) -> f64 {
    v.windows(2).map(|w| w[1].sub(&w[0]).frob_norm()).sum()
}

fn spd_from_velocities(start: OrbitState, velocities: Vec<SkewMat>) -> SpdTrajectory {
    let mut states = Vec::with_capacity(velocities.len() + 1);
    states.push(start);
    for w in &velocities {
        let next = states.last().unwrap().rotated(&expm_skew(w));
        states.push(next);
    }
    let total_variation = total_variation(&velocities);
    SpdTrajectory { states, velocities, total_variation }
}

/// Constant rotation at ω rad/step, starting from Λ.
pub fn spd2_trajectory(proto: &Spd2Protocol) -> Result<SpdTrajectory> {
    let spec = proto.validate()?;
    let w = SkewMat::generator(spec.dim(), 0, 1, proto.omega);
    Ok(spd_from_velocities(OrbitState::base(&spec), vec![w; proto.horizon]))
}

/// Constant base velocity with `n_changes` equally spaced jumps, each of
/// Frobenius norm budget/n_changes in a random direction.
pub fn varying_velocity_trajectory(
    spectrum: &Spectrum,
    base_omega: f64,
    v_omega_budget: f64,
    n_changes: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<SpdTrajectory> {
    if horizon < 1 || !(v_omega_budget >= 0.0) {
        return Err(Error::InvalidParam("need horizon >= 1 and a nonnegative budget".into()));
    }
    let d = spectrum.dim();
    let mut w = SkewMat::generator(d, 0, 1, base_omega);
    let jumps: Vec<usize> = if n_changes == 0 || v_omega_budget == 0.0 {
        Vec::new()
    } else {
        (1..=n_changes).map(|k| k * horizon / (n_changes + 1)).collect()
    };
    let size = if jumps.is_empty() { 0.0 } else { v_omega_budget / jumps.len() as f64 };
    let mut velocities = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if jumps.contains(&t) && t > 0 {
            let dir = SkewMat::new(&Mat::from_fn(d, |_, _| rng.gaussian()));
            let dir = dir.scale(1.0 / dir.frob_norm().max(1e-300));
            w = w.add(&dir.scale(size));
        }
        velocities.push(w.clone());
    }
    Ok(spd_from_velocities(OrbitState::base(spectrum), velocities))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct So3Protocol {
    pub amplitudes: [f64; 3],
    pub frequencies: [f64; 3],
    pub phases: [f64; 3],
    pub sigma_r: f64,
    pub horizon: usize,
    pub dropout_p: f64,
}

pub const SO3_AMPLITUDE_RANGE: (f64, f64) = (0.05, 0.15);
pub const SO3_FREQUENCY_RANGE: (f64, f64) = (0.01, 0.05);
pub const SO3_DEFAULT_SIGMA_R: f64 = 0.05;
pub const SO3_DEFAULT_HORIZON: usize = 200;

impl So3Protocol {
    /// Draws amplitudes, frequencies and phases uniformly from their ranges.
    pub fn sample(rng: &mut Rng, sigma_r: f64, horizon: usize, dropout_p: f64) -> So3Protocol {
        let mut a = [0.0; 3];
        let mut f = [0.0; 3];
        let mut ph = [0.0; 3];
        for k in 0..3 {
            a[k] = rng.uniform_in(SO3_AMPLITUDE_RANGE.0, SO3_AMPLITUDE_RANGE.1);
            f[k] = rng.uniform_in(SO3_FREQUENCY_RANGE.0, SO3_FREQUENCY_RANGE.1);
            ph[k] = rng.uniform_in(0.0, 2.0 * PI);
        }
        So3Protocol { amplitudes: a, frequencies: f, phases: ph, sigma_r, horizon, dropout_p }
    }
}

/// Ω_t = Σ a_k sin(2π f_k t + φ_k) E_k, composed on the right from the identity.
pub fn so3_trajectory(proto: &So3Protocol) -> So3Trajectory {
    let mut velocities = Vec::with_capacity(proto.horizon);
    for t in 0..proto.horizon {
        let mut v = [0.0; 3];
        for k in 0..3 {
            v[k] = proto.amplitudes[k] * (2.0 * PI * proto.frequencies[k] * t as f64 + proto.phases[k]).sin();
        }
        velocities.push(SkewMat::hat3(v));
    }
    let mut states = Vec::with_capacity(proto.horizon + 1);
    states.push(RotMat::identity(3));
    for w in &velocities {
        let next = states.last().unwrap().compose(&expm_skew(w));
        states.push(next);
    }
    let total_variation = total_variation(&velocities);
    So3Trajectory { states, velocities, total_variation }
}

/// R̃ = R·exp(ε), ε ~ N(0, σ²I₃).
pub fn so3_observation(rng: &mut Rng, r_true: &RotMat, sigma_r: f64) -> RotMat {
    let e = [rng.gaussian() * sigma_r, rng.gaussian() * sigma_r, rng.gaussian() * sigma_r];
    r_true.compose(&expm_skew(&SkewMat::hat3(e)))
}

/// Trajectory, one observation per frame (drawn even when masked) and the
/// dropout mask.
#[derive(Clone, Debug)]
pub struct SpdDataset {
    pub traj: SpdTrajectory,
    pub obs: Vec<SymMat>,
    pub mask: Vec<bool>,
    pub sigma2: f64,
}

#[derive(Clone, Debug)]
pub struct So3Dataset {
    pub proto: So3Protocol,
    pub traj: So3Trajectory,
    pub obs: Vec<RotMat>,
    pub mask: Vec<bool>,
}

/// Wishart observations of states[0..horizon] for any trajectory.
pub fn spd_observations(traj: &SpdTrajectory, sigma2: f64, m_dof: u32, seed: u64) -> Result<Vec<SymMat>> {
    let mut rng = Rng::new(seed, "spd/obs");
    let horizon = traj.velocities.len();
    traj.states[..horizon]
        .iter()
        .map(|s| wishart_obs(&mut rng, &s.m().add_identity(sigma2), m_dof))
        .collect()
}

pub fn spd2_dataset(proto: &Spd2Protocol, seed: u64) -> Result<SpdDataset> {
    let traj = spd2_trajectory(proto)?;
    let obs = spd_observations(&traj, proto.sigma2, proto.m_dof, seed)?;
    let mask = dropout_mask(&mut Rng::new(seed, "spd/dropout"), proto.horizon, proto.dropout_p)?;
    Ok(SpdDataset { traj, obs, mask, sigma2: proto.sigma2 })
}

pub fn so3_dataset(sigma_r: f64, horizon: usize, dropout_p: f64, seed: u64) -> Result<So3Dataset> {
    let proto = So3Protocol::sample(&mut Rng::new(seed, "so3/params"), sigma_r, horizon, dropout_p);
    let traj = so3_trajectory(&proto);
    let mut rng = Rng::new(seed, "so3/obs");
    let obs = traj.states[..horizon].iter().map(|r| so3_observation(&mut rng, r, sigma_r)).collect();
    let mask = dropout_mask(&mut Rng::new(seed, "so3/dropout"), horizon, dropout_p)?;
    Ok(So3Dataset { proto, traj, obs, mask })
}

fn push_mat(out: &mut String, m: &Mat) {
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            let _ = write!(out, ",{:e}", m[(i, j)]);
        }
    }
}

fn mat_header(out: &mut String, prefix: &str, n: usize) {
    for i in 0..n {
        for j in 0..n {
            let _ = write!(out, ",{prefix}{i}{j}");
        }
    }
}

/// One frame per row: `t,present,truth_ij…,omega_ij…,obs_ij…`, entries in
/// row-major order, shortest round-trip scientific notation.
pub fn spd_frames_text(ds: &SpdDataset) -> String {
    let n = ds.traj.states[0].dim();
    let mut out = String::from("t,present");
    mat_header(&mut out, "truth_", n);
    mat_header(&mut out, "omega_", n);
    mat_header(&mut out, "obs_", n);
    out.push('\n');
    for t in 0..ds.obs.len() {
        let _ = write!(out, "{t},{}", ds.mask[t] as u8);
        push_mat(&mut out, ds.traj.states[t].m().mat());
        push_mat(&mut out, ds.traj.velocities[t].mat());
        push_mat(&mut out, ds.obs[t].mat());
        out.push('\n');
    }
    out
}

pub fn so3_frames_text(ds: &So3Dataset) -> String {
    let mut out = String::from("t,present");
    mat_header(&mut out, "truth_", 3);
    mat_header(&mut out, "omega_", 3);
    mat_header(&mut out, "obs_", 3);
    out.push('\n');
    for t in 0..ds.obs.len() {
        let _ = write!(out, "{t},{}", ds.mask[t] as u8);
        push_mat(&mut out, ds.traj.states[t].mat());
        push_mat(&mut out, ds.traj.velocities[t].mat());
        push_mat(&mut out, ds.obs[t].mat());
        out.push('\n');
    }
    out
}
