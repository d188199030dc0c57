//! The trackers: K-GMRF on the orbit and on SO(3), plus Riemannian and
//! Euclidean EMA, a tangent-space Kalman filter and an alpha-beta filter.
//!
//! Every tracker reports a one-step prediction: after consuming the
//! observation of frame t, `estimate()` is its guess for frame t + 1.

use crate::error::{Error, Result};
use crate::geometry::{inertia_inverse, torque, NoiseModel, OrbitState, Spectrum, DEFAULT_EPS};
use crate::linalg::{expm_skew, logm_rot, polar_project, Mat, RotMat, SkewMat, SymMat};

/// Smallest eigenvalue allowed after a retraction or before a log.
pub const EIG_CLAMP: f64 = 1e-9;

/// What the velocity damping pulls towards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    /// Ω' = (1 − γ)Ω + ηΔΩ, damping the absolute velocity.
    Absolute,
    /// Damps the deviation from a slow average of the filter's own velocity,
    /// Ω_ref' = (1 − ρ)Ω_ref + ρΩ'.
    Tracked { rho: f64 },
    /// Damps the deviation from a reference velocity the caller sets on the
    /// state before each step. Needs the true velocity; test use only.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgmrfConfig {
    pub eta: f64,
    pub gamma: f64,
    pub eps: f64,
    pub sigma2: f64,
    pub momentum_enabled: bool,
    pub intrinsic_enabled: bool,
    pub damping: Damping,
    /// Step gain used when momentum is disabled.
    pub first_order_gain: f64,
    /// Retention weight of an optional running average of the observations.
    pub obs_smoothing: Option<f64>,
}

impl KgmrfConfig {
    pub fn new(eta: f64, gamma: f64, sigma2: f64) -> KgmrfConfig {
        KgmrfConfig {
            eta,
            gamma,
            eps: DEFAULT_EPS,
            sigma2,
            momentum_enabled: true,
            intrinsic_enabled: true,
            damping: Damping::Absolute,
            first_order_gain: 0.2,
            obs_smoothing: None,
        }
    }

    pub fn with_damping(mut self, damping: Damping) -> KgmrfConfig {
        self.damping = damping;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParam(format!("eta must be > 0, got {}", self.eta)));
        }
        // γ up to 2 is allowed so the stability map can probe past γ = 1
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(Error::InvalidParam(format!("gamma must be in (0, 2), got {}", self.gamma)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParam(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidParam(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if let Damping::Tracked { rho } = self.damping {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidParam(format!("rho must be in [0, 1], got {rho}")));
            }
        }
        if let Some(b) = self.obs_smoothing {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParam(format!("observation smoothing must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgmrfState {
    pub m: OrbitState,
    pub omega: SkewMat,
    pub omega_ref: SkewMat,
    pub smoothed_obs: Option<SymMat>,
    /// Eigenvalue drift of the last drift step before and after re-snapping.
    pub raw_drift: f64,
    pub snapped_drift: f64,
}

impl KgmrfState {
    pub fn new(m: OrbitState) -> KgmrfState {
        let d = m.dim();
        KgmrfState {
            m,
            omega: SkewMat::zeros(d),
            omega_ref: SkewMat::zeros(d),
            smoothed_obs: None,
            raw_drift: 0.0,
            snapped_drift: 0.0,
        }
    }

    /// Starts with a known velocity, also used as the initial reference.
    pub fn with_velocity(m: OrbitState, omega: SkewMat) -> KgmrfState {
        let mut s = KgmrfState::new(m);
        s.omega_ref = omega.clone();
        s.omega = omega;
        s
    }
}

/// One kick-drift-measure step.
pub fn kgmrf_step(state: &KgmrfState, cfg: &KgmrfConfig, obs: Option<&SymMat>) -> Result<KgmrfState> {
    let noise = NoiseModel { sigma2: cfg.sigma2, m_dof: 1 };
    let mut smoothed_obs = state.smoothed_obs.clone();
    let c = match (obs, cfg.obs_smoothing) {
        (Some(c), Some(b)) => {
            let s = match &state.smoothed_obs {
                Some(prev) => SymMat::new(&(&prev.mat().scale(b) + &c.mat().scale(1.0 - b))),
                None => c.clone(),
            };
            smoothed_obs = Some(s.clone());
            Some(s)
        }
        (Some(c), None) => Some(c.clone()),
        (None, _) => None,
    };

    let tau = match &c {
        Some(c) => torque(&state.m, c, &noise)?,
        None => SkewMat::zeros(state.m.dim()),
    };
    let kick = if cfg.intrinsic_enabled { inertia_inverse(&state.m, &noise, cfg.eps, &tau) } else { tau };

    let mut omega_ref = state.omega_ref.clone();
    let omega = if cfg.momentum_enabled {
        let reference = match cfg.damping {
            Damping::Absolute => SkewMat::zeros(state.m.dim()),
            _ => state.omega_ref.clone(),
        };
        let dev = state.omega.sub(&reference).scale(1.0 - cfg.gamma);
        let om = reference.add(&dev).add(&kick.scale(cfg.eta));
        if let Damping::Tracked { rho } = cfg.damping {
            omega_ref = omega_ref.scale(1.0 - rho).add(&om.scale(rho));
        }
        om
    } else {
        kick.scale(cfg.first_order_gain)
    };

    let r = expm_skew(&omega);
    let raw = SymMat::new(&r.congruence(state.m.m().mat()));
    let (m, raw_drift) = OrbitState::snap(state.m.spectrum(), &raw)?;
    let snapped = crate::linalg::sym_eig(m.m())?;
    let snapped_drift = crate::geometry::spectral_drift(&snapped.values, m.spectrum().values());
    Ok(KgmrfState { m, omega, omega_ref, smoothed_obs, raw_drift, snapped_drift })
}

/// True iff 0 < γ < 2 and 0 < η < 2(2 − γ)/κ_max.
pub fn stability_check(eta: f64, gamma: f64, kappa_max: f64) -> bool {
    gamma > 0.0 && gamma < 2.0 && eta > 0.0 && eta < 2.0 * (2.0 - gamma) / kappa_max
}

/// Largest per-pair coefficient of the linearized error dynamics: the
/// whitened stiffness (λ_i − λ_j)²/(d_i d_j) times the preconditioner.
pub fn kappa_max(spec: &Spectrum, sigma2: f64, eps: f64, intrinsic: bool) -> f64 {
    let lam = spec.values();
    let mut k: f64 = 0.0;
    for i in 0..lam.len() {
        for j in i + 1..lam.len() {
            let g2 = (lam[i] - lam[j]).powi(2);
            let dd = (lam[i] + sigma2) * (lam[j] + sigma2);
            let pre = if intrinsic { dd / (g2 + eps) } else { 1.0 };
            k = k.max(g2 / dd * pre);
        }
    }
    k
}

/// Roots of r² − (2 − γ − ηκ)r + (1 − γ); the largest modulus.
pub fn char_root_modulus(eta: f64, gamma: f64, kappa: f64) -> f64 {
    let b = 2.0 - gamma - eta * kappa;
    let c = 1.0 - gamma;
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((b + s) / 2.0).abs().max(((b - s) / 2.0).abs())
    } else {
        c.abs().sqrt()
    }
}

/// Point on the AIRM geodesic from `m` towards `c` at fraction β:
/// M^{1/2}(M^{-1/2}CM^{-1/2})^β M^{1/2}.
pub fn riem_ema_step(m: &SymMat, c: &SymMat, beta: f64) -> Result<SymMat> {
    let half = m.map_eigen(|x| x.max(EIG_CLAMP).sqrt())?;
    let ihalf = m.map_eigen(|x| 1.0 / x.max(EIG_CLAMP).sqrt())?;
    let inner = SymMat::new(&ihalf.congruence(c.mat()));
    let pw = inner.map_eigen(|x| if beta == 0.0 { 1.0 } else { x.max(0.0).powf(beta) })?;
    Ok(SymMat::new(&half.congruence(pw.mat())))
}

/// βC + (1 − β)M
pub fn eucl_ema_step(m: &SymMat, c: &SymMat, beta: f64) -> SymMat {
    SymMat::new(&(&c.mat().scale(beta) + &m.mat().scale(1.0 - beta)))
}

/// One constant-velocity Kalman filter per tangent coordinate. Position is
/// measured relative to the current prediction, so it restarts at zero
/// after every retraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CvKalman {
    pub q: f64,
    pub r: f64,
    pub vel: Vec<f64>,
    /// Per coordinate (P_xx, P_xv, P_vv).
    pub cov: Vec<[f64; 3]>,
}

impl CvKalman {
    pub fn new(dim: usize, q: f64, r: f64, vel: Option<Vec<f64>>) -> CvKalman {
        CvKalman { q, r, vel: vel.unwrap_or_else(|| vec![0.0; dim]), cov: vec![[r, 0.0, r]; dim] }
    }

    /// Measurement update with innovation `z` (coordinates relative to the
    /// prediction). Returns the corrected position offsets.
    pub fn update(&mut self, z: &[f64]) -> Vec<f64> {
        let mut pos = vec![0.0; z.len()];
        for k in 0..z.len() {
            let [pxx, pxv, pvv] = self.cov[k];
            let s = pxx + self.r;
            let (kx, kv) = if s.is_finite() && s > 0.0 { (pxx / s, pxv / s) } else { (0.0, 0.0) };
            pos[k] = kx * z[k];
            self.vel[k] += kv * z[k];
            self.cov[k] = [(1.0 - kx) * pxx, (1.0 - kx) * pxv, pvv - kv * pxv];
        }
        pos
    }

    /// Time update of the covariance: F P Fᵀ + diag(0, q) with F = [[1,1],[0,1]].
    pub fn predict_cov(&mut self) {
        for p in &mut self.cov {
            let [pxx, pxv, pvv] = *p;
            *p = [pxx + 2.0 * pxv + pvv, pxv + pvv, pvv + self.q];
        }
    }
}

/// Upper-triangle coordinates of a symmetric matrix.
pub fn sym_coords(a: &Mat) -> Vec<f64> {
    let n = a.dim();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn sym_from_coords(n: usize, v: &[f64]) -> SymMat {
    let mut m = Mat::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    SymMat::new(&m)
}

/// Whitened log map: log(M^{-1/2} C M^{-1/2}).
pub fn spd_log_at(m: &SymMat, c: &SymMat) -> Result<SymMat> {
    let ihalf = m.map_eigen(|x| 1.0 / x.max(EIG_CLAMP).sqrt())?;
    SymMat::new(&ihalf.congruence(c.mat())).map_eigen(|x| x.max(EIG_CLAMP).ln())
}

/// Whitened exponential map: M^{1/2} exp(X) M^{1/2}. Flags when a clamp
/// was needed.
pub fn spd_exp_at(m: &SymMat, x: &SymMat) -> Result<(SymMat, bool)> {
    let half = m.map_eigen(|v| v.max(EIG_CLAMP).sqrt())?;
    let out = SymMat::new(&half.congruence(x.map_eigen(f64::exp)?.mat()));
    let min = out.min_eig()?;
    if min < EIG_CLAMP {
        return Ok((out.map_eigen(|v| v.max(EIG_CLAMP))?, true));
    }
    Ok((out, false))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentKfState {
    pub m: SymMat,
    pub kf: CvKalman,
    pub clamped: bool,
}

/// Tangent-space constant-velocity Kalman filter on SPD(d).
pub fn tangent_kf_step(state: &TangentKfState, c: Option<&SymMat>) -> Result<TangentKfState> {
    let n = state.m.dim();
    let mut kf = state.kf.clone();
    let mut clamped = false;
    let mut m = state.m.clone();
    if let Some(c) = c {
        let z = sym_coords(spd_log_at(&m, c)?.mat());
        let pos = kf.update(&z);
        let (mm, fl) = spd_exp_at(&m, &sym_from_coords(n, &pos))?;
        m = mm;
        clamped |= fl;
    }
    let (mm, fl) = spd_exp_at(&m, &sym_from_coords(n, &kf.vel))?;
    kf.predict_cov();
    clamped |= fl;
    Ok(TangentKfState { m: mm, kf, clamped })
}

/// x' = x + α(z − x) + v, v' = v + β(z − x); on dropout x' = x + v.
pub fn alpha_beta_step(x: &[f64], v: &[f64], z: Option<&[f64]>, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    match z {
        Some(z) => {
            let xn = (0..x.len()).map(|k| x[k] + alpha * (z[k] - x[k]) + v[k]).collect();
            let vn = (0..x.len()).map(|k| v[k] + beta * (z[k] - x[k])).collect();
            (xn, vn)
        }
        None => ((0..x.len()).map(|k| x[k] + v[k]).collect(), v.to_vec()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct So3KgmrfState {
    pub r: RotMat,
    pub omega: SkewMat,
}

/// ξ = log(R̂ᵀR̃); Ω' = γΩ + βξ; R' = R̂·exp(αξ + Ω'). A missing observation
/// or one at the branch cut gives ξ = 0.
pub fn kgmrf_so3_step(state: &So3KgmrfState, obs: Option<&RotMat>, alpha: f64, beta: f64, gamma: f64) -> So3KgmrfState {
    let xi = obs
        .and_then(|o| logm_rot(&state.r.transpose().compose(o)).ok())
        .unwrap_or_else(|| SkewMat::zeros(state.r.dim()));
    let omega = state.omega.scale(gamma).add(&xi.scale(beta));
    let r = state.r.compose(&expm_skew(&xi.scale(alpha).add(&omega)));
    So3KgmrfState { r, omega }
}

/// A tracker with a common step interface.
pub trait Tracker: Send {
    type Obs;
    type Est;
    fn step(&mut self, obs: Option<&Self::Obs>) -> Result<()>;
    fn estimate(&self) -> Self::Est;
}

pub struct KgmrfTracker {
    pub state: KgmrfState,
    pub cfg: KgmrfConfig,
    /// Per-frame reference velocities, copied into the state before each
    /// step when damping is `Oracle`.
    pub reference: Option<Vec<SkewMat>>,
    pub frame: usize,
}

impl KgmrfTracker {
    pub fn new(state: KgmrfState, cfg: KgmrfConfig) -> KgmrfTracker {
        KgmrfTracker { state, cfg, reference: None, frame: 0 }
    }
}

impl Tracker for KgmrfTracker {
    type Obs = SymMat;
    type Est = SymMat;
    fn step(&mut self, obs: Option<&SymMat>) -> Result<()> {
        if let (Damping::Oracle, Some(refs)) = (self.cfg.damping, &self.reference) {
            if let Some(w) = refs.get(self.frame) {
                self.state.omega_ref = w.clone();
            }
        }
        self.state = kgmrf_step(&self.state, &self.cfg, obs)?;
        self.frame += 1;
        Ok(())
    }
    fn estimate(&self) -> SymMat {
        self.state.m.m().clone()
    }
}

pub struct RiemEma {
    pub m: SymMat,
    pub beta: f64,
}

impl Tracker for RiemEma {
    type Obs = SymMat;
    type Est = SymMat;
    fn step(&mut self, obs: Option<&SymMat>) -> Result<()> {
        if let Some(c) = obs {
            self.m = riem_ema_step(&self.m, c, self.beta)?;
        }
        Ok(())
    }
    fn estimate(&self) -> SymMat {
        self.m.clone()
    }
}

pub struct EuclEma {
    pub m: SymMat,
    pub beta: f64,
}

impl Tracker for EuclEma {
    type Obs = SymMat;
    type Est = SymMat;
    fn step(&mut self, obs: Option<&SymMat>) -> Result<()> {
        if let Some(c) = obs {
            self.m = eucl_ema_step(&self.m, c, self.beta);
        }
        Ok(())
    }
    fn estimate(&self) -> SymMat {
        self.m.clone()
    }
}

pub struct TangentKf {
    pub state: TangentKfState,
}

impl Tracker for TangentKf {
    type Obs = SymMat;
    type Est = SymMat;
    fn step(&mut self, obs: Option<&SymMat>) -> Result<()> {
        self.state = tangent_kf_step(&self.state, obs)?;
        Ok(())
    }
    fn estimate(&self) -> SymMat {
        self.state.m.clone()
    }
}

pub struct AlphaBetaSpd {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Tracker for AlphaBetaSpd {
    type Obs = SymMat;
    type Est = SymMat;
    fn step(&mut self, obs: Option<&SymMat>) -> Result<()> {
        let (x, v) = alpha_beta_step(&self.x, &self.v, obs.map(|c| c.mat().as_slice()), self.alpha, self.beta);
        self.x = x;
        self.v = v;
        Ok(())
    }
    fn estimate(&self) -> SymMat {
        SymMat::new(&Mat::from_vec(self.n, self.x.clone()))
    }
}

pub struct KgmrfSo3 {
    pub state: So3KgmrfState,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Tracker for KgmrfSo3 {
    type Obs = RotMat;
    type Est = RotMat;
    fn step(&mut self, obs: Option<&RotMat>) -> Result<()> {
        self.state = kgmrf_so3_step(&self.state, obs, self.alpha, self.beta, self.gamma);
        Ok(())
    }
    fn estimate(&self) -> RotMat {
        self.state.r.clone()
    }
}

/// Geodesic EMA on SO(3): R' = R·exp(β·log(RᵀR̃)).
pub struct RiemEmaSo3 {
    pub r: RotMat,
    pub beta: f64,
}

impl Tracker for RiemEmaSo3 {
    type Obs = RotMat;
    type Est = RotMat;
    fn step(&mut self, obs: Option<&RotMat>) -> Result<()> {
        if let Some(o) = obs {
            if let Ok(xi) = logm_rot(&self.r.transpose().compose(o)) {
                self.r = self.r.compose(&expm_skew(&xi.scale(self.beta)));
            }
        }
        Ok(())
    }
    fn estimate(&self) -> RotMat {
        self.r.clone()
    }
}

/// Linear EMA on the matrix entries, projected to the nearest rotation for
/// output.
pub struct EuclEmaSo3 {
    pub x: Mat,
    pub beta: f64,
}

impl Tracker for EuclEmaSo3 {
    type Obs = RotMat;
    type Est = RotMat;
    fn step(&mut self, obs: Option<&RotMat>) -> Result<()> {
        if let Some(o) = obs {
            self.x = &o.mat().scale(self.beta) + &self.x.scale(1.0 - self.beta);
        }
        Ok(())
    }
    fn estimate(&self) -> RotMat {
        polar_project(&self.x).expect("jacobi converges on 3x3 gram matrices")
    }
}

/// Constant-velocity Kalman filter on the so(3) coordinates of the
/// innovation, retracted by right multiplication.
pub struct TangentKfSo3 {
    pub r: RotMat,
    pub kf: CvKalman,
}

impl Tracker for TangentKfSo3 {
    type Obs = RotMat;
    type Est = RotMat;
    fn step(&mut self, obs: Option<&RotMat>) -> Result<()> {
        if let Some(o) = obs {
            if let Ok(xi) = logm_rot(&self.r.transpose().compose(o)) {
                let pos = self.kf.update(&xi.vee3());
                self.r = self.r.compose(&expm_skew(&SkewMat::hat3([pos[0], pos[1], pos[2]])));
            }
        }
        let v = &self.kf.vel;
        self.r = self.r.compose(&expm_skew(&SkewMat::hat3([v[0], v[1], v[2]])));
        self.kf.predict_cov();
        Ok(())
    }
    fn estimate(&self) -> RotMat {
        self.r.clone()
    }
}

/// Alpha-beta on the nine matrix entries, projected for output.
pub struct AlphaBetaSo3 {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl Tracker for AlphaBetaSo3 {
    type Obs = RotMat;
    type Est = RotMat;
    fn step(&mut self, obs: Option<&RotMat>) -> Result<()> {
        let (x, v) = alpha_beta_step(&self.x, &self.v, obs.map(|r| r.mat().as_slice()), self.alpha, self.beta);
        self.x = x;
        self.v = v;
        Ok(())
    }
    fn estimate(&self) -> RotMat {
        polar_project(&Mat::from_vec(3, self.x.clone())).expect("jacobi converges on 3x3 gram matrices")
    }
}
