//! Quantities on the isospectral orbit {QΛQᵀ}: whitening, torque, the
//! inertia inverse, the Wishart NLL and its curvature, orbit distance and
//! the two task error metrics.

use crate::error::{Error, Result};
use crate::linalg::{expm_skew, frob_inner, logm_rot, sym_eig, EigDecomp, Mat, RotMat, SkewMat, SymMat};

/// Default inertia regularizer.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Step used by the finite-difference checks.
pub const FD_STEP: f64 = 1e-5;
/// Orbit membership tolerance for `OrbitState::from_sym`.
pub const ORBIT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: &[f64]) -> Result<Spectrum> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {v} is not strictly positive")));
        }
        for w in values.windows(2) {
            if w[0] - w[1] < 1e-12 {
                return Err(Error::InvalidSpectrum(format!(
                    "eigenvalues must be strictly descending, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Spectrum { values: values.to_vec() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_diag(&self) -> SymMat {
        SymMat::diag(&self.values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub m_dof: u32,
}

impl NoiseModel {
    pub fn new(sigma2: f64, m_dof: u32) -> Result<NoiseModel> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParam(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        if m_dof == 0 {
            return Err(Error::InvalidParam("m_dof must be >= 1".into()));
        }
        Ok(NoiseModel { sigma2, m_dof })
    }
}

/// A point QΛQᵀ on the orbit of a fixed spectrum, with its eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitState {
    m: SymMat,
    eig: EigDecomp,
    spectrum: Spectrum,
}

impl OrbitState {
    /// QΛQᵀ with the eigenbasis taken as Q itself.
    pub fn from_rotation(spectrum: &Spectrum, q: &RotMat) -> OrbitState {
        let eig = EigDecomp { vectors: q.mat().clone(), values: spectrum.values.clone() };
        OrbitState { m: eig.recompose(&spectrum.values), eig, spectrum: spectrum.clone() }
    }

    /// Λ itself.
    pub fn base(spectrum: &Spectrum) -> OrbitState {
        OrbitState::from_rotation(spectrum, &RotMat::identity(spectrum.dim()))
    }

    /// Decomposes `m` and checks its eigenvalues against `spectrum`.
    pub fn from_sym(spectrum: &Spectrum, m: &SymMat) -> Result<OrbitState> {
        if m.dim() != spectrum.dim() {
            return Err(Error::DimMismatch { left: m.dim(), right: spectrum.dim() });
        }
        let eig = sym_eig(m)?;
        let drift = spectral_drift(&eig.values, &spectrum.values);
        if drift > ORBIT_TOL {
            return Err(Error::OffOrbit(drift));
        }
        Ok(OrbitState { m: m.clone(), eig, spectrum: spectrum.clone() })
    }

    /// Recomposes the point from the eigenvectors of `m` and the exact
    /// spectrum. Returns the state and the eigenvalue drift of `m` itself.
    pub fn snap(spectrum: &Spectrum, m: &SymMat) -> Result<(OrbitState, f64)> {
        let e = sym_eig(m)?;
        let drift = spectral_drift(&e.values, &spectrum.values);
        let q = RotMat::new_unchecked(e.vectors);
        Ok((OrbitState::from_rotation(spectrum, &q), drift))
    }

    pub fn m(&self) -> &SymMat {
        &self.m
    }

    pub fn eig(&self) -> &EigDecomp {
        &self.eig
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// R·M·Rᵀ, carrying the eigenbasis along as R·Q.
    pub fn rotated(&self, r: &RotMat) -> OrbitState {
        let q = RotMat::new_unchecked(r.mat() * &self.eig.vectors);
        OrbitState::from_rotation(&self.spectrum, &q)
    }
}

/// max_i |a_i − b_i|
pub fn spectral_drift(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// S = M + σ²I
pub fn whiten(state: &OrbitState, noise: &NoiseModel) -> SymMat {
    state.m.add_identity(noise.sigma2)
}

fn whitened_values(state: &OrbitState, noise: &NoiseModel) -> Result<Vec<f64>> {
    let d: Vec<f64> = state.spectrum.values.iter().map(|l| l + noise.sigma2).collect();
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-12 {
        return Err(Error::SingularWhitening(min));
    }
    Ok(d)
}

/// S⁻¹, built from the shared eigenbasis of M and S.
pub fn whitened_inverse(state: &OrbitState, noise: &NoiseModel) -> Result<SymMat> {
    let d = whitened_values(state, noise)?;
    let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    Ok(state.eig.recompose(&inv))
}

/// τ = S⁻¹[C, M]S⁻¹
pub fn torque(state: &OrbitState, c: &SymMat, noise: &NoiseModel) -> Result<SkewMat> {
    if c.dim() != state.dim() {
        return Err(Error::DimMismatch { left: c.dim(), right: state.dim() });
    }
    let sinv = whitened_inverse(state, noise)?;
    let m = state.m.mat();
    let comm = &(c.mat() * m) - &(m * c.mat());
    Ok(SkewMat::new(&(&(sinv.mat() * &comm) * sinv.mat())))
}

/// Scales τ in the eigenbasis by d_i d_j / ((λ_i − λ_j)² + eps).
pub fn inertia_inverse(state: &OrbitState, noise: &NoiseModel, eps: f64, tau: &SkewMat) -> SkewMat {
    let u = &state.eig.vectors;
    let lam = &state.spectrum.values;
    let n = lam.len();
    let mut t = &(&u.transpose() * tau.mat()) * u;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                t[(i, j)] = 0.0;
                continue;
            }
            let di = lam[i] + noise.sigma2;
            let dj = lam[j] + noise.sigma2;
            let gap = lam[i] - lam[j];
            t[(i, j)] *= di * dj / (gap * gap + eps);
        }
    }
    SkewMat::new(&(&(u * &t) * &u.transpose()))
}

/// Δ_wh = min over pairs of |λ_i/(λ_i+σ²) − λ_j/(λ_j+σ²)|; infinite for d = 1.
pub fn whitened_spectral_gap(spec: &Spectrum, sigma2: f64) -> f64 {
    let r: Vec<f64> = spec.values.iter().map(|l| l / (l + sigma2)).collect();
    let mut gap = f64::INFINITY;
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            gap = gap.min((r[i] - r[j]).abs());
        }
    }
    gap
}

/// V(M; C) = (m/2)(log det S + tr(S⁻¹C))
pub fn wishart_nll(state: &OrbitState, c: &SymMat, noise: &NoiseModel) -> Result<f64> {
    let d = whitened_values(state, noise)?;
    let logdet: f64 = d.iter().map(|x| x.ln()).sum();
    let sinv = whitened_inverse(state, noise)?;
    let tr = frob_inner(sinv.mat(), c.mat());
    Ok(0.5 * noise.m_dof as f64 * (logdet + tr))
}

/// Central difference of V along t ↦ exp(tw)·M·exp(tw)ᵀ at t = 0.
pub fn directional_dv(state: &OrbitState, c: &SymMat, noise: &NoiseModel, w: &SkewMat, h: f64) -> Result<f64> {
    let vp = wishart_nll(&state.rotated(&expm_skew(&w.scale(h))), c, noise)?;
    let vm = wishart_nll(&state.rotated(&expm_skew(&w.scale(-h))), c, noise)?;
    Ok((vp - vm) / (2.0 * h))
}

/// Central second difference of V along t ↦ exp(tw)·M·exp(tw)ᵀ at t = 0.
pub fn directional_d2v(state: &OrbitState, c: &SymMat, noise: &NoiseModel, w: &SkewMat, h: f64) -> Result<f64> {
    let v0 = wishart_nll(state, c, noise)?;
    let vp = wishart_nll(&state.rotated(&expm_skew(&w.scale(h))), c, noise)?;
    let vm = wishart_nll(&state.rotated(&expm_skew(&w.scale(-h))), c, noise)?;
    Ok((vp - 2.0 * v0 + vm) / (h * h))
}

/// (m/4) Σ_{i≠j} w_ij² (λ_i − λ_j)² / ((λ_i + σ²)(λ_j + σ²)), with w in the
/// eigenbasis of Λ.
pub fn curvature_closed_form(spec: &Spectrum, sigma2: f64, m_dof: u32, w: &SkewMat) -> f64 {
    let lam = &spec.values;
    let mut sum = 0.0;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            if i != j {
                let g = lam[i] - lam[j];
                sum += w[(i, j)] * w[(i, j)] * g * g / ((lam[i] + sigma2) * (lam[j] + sigma2));
            }
        }
    }
    0.25 * m_dof as f64 * sum
}

/// Relative rotation from `reference` to `state`, minimal over the sign
/// stabilizer of the spectrum.
pub fn orbit_log(state: &OrbitState, reference: &OrbitState) -> Result<SkewMat> {
    let n = state.dim();
    if reference.dim() != n {
        return Err(Error::DimMismatch { left: n, right: reference.dim() });
    }
    let q = &state.eig.vectors;
    let qr_t = reference.eig.vectors.transpose();
    let sign_q = q.det().signum();
    let sign_r = reference.eig.vectors.det().signum();
    let mut best: Option<SkewMat> = None;
    let mut last_err = None;
    for bits in 0u32..(1u32 << n) {
        let signs: Vec<f64> = (0..n).map(|k| if bits >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let det_d: f64 = signs.iter().product();
        if det_d * sign_q * sign_r < 0.0 {
            continue;
        }
        let qd = Mat::from_fn(n, |i, j| q[(i, j)] * signs[j]);
        let r = RotMat::new_unchecked(&qd * &qr_t);
        match logm_rot(&r) {
            Ok(xi) => {
                if best.as_ref().map_or(true, |b| xi.frob_norm() < b.frob_norm()) {
                    best = Some(xi);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::BranchCut { angle: std::f64::consts::PI }))
}

/// Orientation of the leading eigenvector of a 2×2 symmetric matrix, in
/// radians in (−π/2, π/2].
pub fn principal_angle_spd2(m: &Mat) -> f64 {
    // the leading eigenvector of [[a,b],[b,c]] sits at ½·atan2(2b, a − c)
    0.5 * (2.0 * m[(0, 1)]).atan2(m[(0, 0)] - m[(1, 1)])
}

/// Orientation difference of two ellipses, modulo π, in degrees within [0, 90].
pub fn angular_error_deg_spd2(est: &SymMat, truth: &SymMat) -> f64 {
    let d = principal_angle_spd2(est.mat()) - principal_angle_spd2(truth.mat());
    let pi = std::f64::consts::PI;
    let r = d.rem_euclid(pi);
    r.min(pi - r).to_degrees()
}

/// Rotation angle of estᵀ·truth in degrees.
pub fn geodesic_error_deg_so3(est: &RotMat, truth: &RotMat) -> f64 {
    let rel = &est.mat().transpose() * truth.mat();
    rotation_angle(&rel).to_degrees()
}

/// Angle of a 3×3 rotation, robust at both ends of [0, π].
pub fn rotation_angle(r: &Mat) -> f64 {
    let k = r.skew_part();
    let s = (k[(2, 1)].powi(2) + k[(0, 2)].powi(2) + k[(1, 0)].powi(2)).sqrt();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd2() -> Spectrum {
        Spectrum::new(&[2.0, 0.5]).unwrap()
    }

    fn noise(s2: f64, m: u32) -> NoiseModel {
        NoiseModel::new(s2, m).unwrap()
    }

    #[test]
    fn whiten_examples() {
        let st = OrbitState::base(&spd2());
        assert_eq!(whiten(&st, &noise(0.0, 8)), SymMat::diag(&[2.0, 0.5]));
        let s = whiten(&st, &noise(0.1, 8));
        assert!((s[(0, 0)] - 2.1).abs() < 1e-15 && (s[(1, 1)] - 0.6).abs() < 1e-15);
        let rot = st.rotated(&RotMat::planar(0.4));
        let s = whiten(&rot, &noise(0.1, 8));
        let c = crate::linalg::commutator(s.mat(), rot.m().mat()).unwrap();
        assert!(c.frob_norm() < 1e-15);
    }

    #[test]
    fn torque_zero_cases() {
        let nz = noise(0.1, 8);
        let st = OrbitState::base(&spd2()).rotated(&RotMat::planar(0.7));
        let s = whiten(&st, &nz);
        assert!(torque(&st, &s, &nz).unwrap().frob_norm() < 1e-14);
        let diag = OrbitState::base(&spd2());
        assert_eq!(torque(&diag, &SymMat::diag(&[3.0, 0.2]), &nz).unwrap(), SkewMat::zeros(2));
    }

    #[test]
    fn torque_oracle_value() {
        let nz = noise(0.1, 8);
        let st = OrbitState::base(&spd2());
        let c = SymMat::new(&RotMat::planar(0.1).congruence(&Mat::diag(&[2.0, 0.5])));
        let tau = torque(&st, &c, &nz).unwrap();
        // direct dense arithmetic: S⁻¹ = diag(1/2.1, 1/0.6)
        let sinv = Mat::diag(&[1.0 / 2.1, 1.0 / 0.6]);
        let m = Mat::diag(&[2.0, 0.5]);
        let direct = &(&sinv * &(&(c.mat() * &m) - &(&m * c.mat()))) * &sinv;
        assert!((tau.mat() - &direct).frob_norm() < 1e-15);
        // closed form for the off-diagonal: c01·(0.5 − 2)/(2.1·0.6)
        let c01 = 1.5 * 0.1f64.sin() * 0.1f64.cos();
        assert!((tau[(0, 1)] - c01 * (0.5 - 2.0) / (2.1 * 0.6)).abs() < 1e-15);
        // equivalent form [S⁻¹CS⁻¹, M]
        let p = &(&sinv * c.mat()) * &sinv;
        let alt = crate::linalg::commutator(&p, &m).unwrap();
        assert!((tau.mat() - &alt).frob_norm() < 1e-15);
    }

    #[test]
    fn torque_singular_whitening() {
        let st = OrbitState::base(&Spectrum::new(&[3e-12, 1e-13]).unwrap());
        let r = torque(&st, &SymMat::identity(2), &noise(0.0, 1));
        assert!(matches!(r, Err(Error::SingularWhitening(_))));
    }

    #[test]
    fn inertia_examples() {
        let nz = noise(0.1, 8);
        let st = OrbitState::base(&spd2());
        assert_eq!(inertia_inverse(&st, &nz, 1e-6, &SkewMat::zeros(2)), SkewMat::zeros(2));
        let out = inertia_inverse(&st, &nz, 1e-6, &SkewMat::generator(2, 0, 1, 1.0));
        let want = 2.1 * 0.6 / (2.25 + 1e-6);
        assert!((out[(1, 0)] - want).abs() < 1e-14);
        assert!((out[(0, 1)] + want).abs() < 1e-14);
        assert!((want - 0.56).abs() < 1e-6);
    }

    #[test]
    fn inertia_is_basis_covariant() {
        let nz = noise(0.3, 8);
        let spec = Spectrum::new(&[3.0, 1.5, 0.4]).unwrap();
        let st = OrbitState::base(&spec).rotated(&expm_skew(&SkewMat::hat3([0.1, 0.2, -0.3])));
        let tau = SkewMat::hat3([0.5, -0.2, 0.7]);
        let q = expm_skew(&SkewMat::hat3([-0.4, 0.9, 0.25]));
        let lhs = inertia_inverse(&st.rotated(&q), &nz, 1e-6, &SkewMat::new(&q.congruence(tau.mat())));
        let rhs = q.congruence(inertia_inverse(&st, &nz, 1e-6, &tau).mat());
        assert!((lhs.mat() - &rhs).frob_norm() < 1e-12);
    }

    #[test]
    fn spectral_gap_examples() {
        assert_eq!(whitened_spectral_gap(&spd2(), 0.0), 0.0);
        assert!((whitened_spectral_gap(&spd2(), 0.1) - (2.0 / 2.1 - 0.5 / 0.6)).abs() < 1e-15);
        assert!((whitened_spectral_gap(&spd2(), 0.1) - 0.11905).abs() < 1e-5);
        let g = whitened_spectral_gap(&Spectrum::new(&[1.01, 1.0]).unwrap(), 4.0);
        assert!((g - (1.01 / 5.01 - 1.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn nll_examples() {
        let st = OrbitState::base(&spd2());
        let nz = noise(0.1, 2);
        let s = whiten(&st, &nz);
        let v = wishart_nll(&st, &s, &nz).unwrap();
        assert!((v - (1.26f64.ln() + 2.0)).abs() < 1e-14);
        let v4 = wishart_nll(&st, &s, &noise(0.1, 4)).unwrap();
        assert!((v4 - 2.0 * v).abs() < 1e-14);
        let flipped = OrbitState::from_rotation(&spd2(), &RotMat::new(&Mat::diag(&[-1.0, -1.0])).unwrap());
        let c = SymMat::diag(&[1.7, 0.9]);
        assert!((wishart_nll(&flipped, &c, &nz).unwrap() - wishart_nll(&st, &c, &nz).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn directional_derivative_zero_cases() {
        let nz = noise(0.1, 8);
        let st = OrbitState::base(&spd2()).rotated(&RotMat::planar(0.2));
        let c = SymMat::diag(&[1.0, 2.0]);
        assert_eq!(directional_dv(&st, &c, &nz, &SkewMat::zeros(2), FD_STEP).unwrap(), 0.0);
        let s = whiten(&st, &nz);
        let d = directional_dv(&st, &s, &nz, &SkewMat::generator(2, 0, 1, 1.0), FD_STEP).unwrap();
        assert!(d.abs() < 1e-8);
    }

    #[test]
    fn curvature_examples() {
        let spec = spd2();
        assert_eq!(curvature_closed_form(&spec, 0.1, 8, &SkewMat::zeros(2)), 0.0);
        let k = curvature_closed_form(&spec, 0.1, 8, &SkewMat::generator(2, 0, 1, 1.0));
        assert!((k - 2.0 * 2.0 * 2.25 / 1.26).abs() < 1e-12);
        assert!((k - 7.1429).abs() < 1e-4);
    }

    #[test]
    fn orbit_log_examples() {
        let spec = spd2();
        let a = OrbitState::base(&spec).rotated(&RotMat::planar(1.1));
        assert!(orbit_log(&a, &a).unwrap().frob_norm() < 1e-15);
        let b = a.rotated(&RotMat::planar(0.3));
        assert!((orbit_log(&b, &a).unwrap().frob_norm() - 0.3 * 2f64.sqrt()).abs() < 1e-12);
        // same matrix, eigenvectors with both signs flipped
        let flipped = OrbitState::from_rotation(&spec, &RotMat::new(&a.eig().vectors.scale(-1.0)).unwrap());
        assert!(orbit_log(&flipped, &a).unwrap().frob_norm() < 1e-12);
    }

    #[test]
    fn orbit_log_prefers_short_branch_in_3d() {
        let spec = Spectrum::new(&[3.0, 2.0, 1.0]).unwrap();
        let a = OrbitState::base(&spec);
        // a half turn about x is in the stabilizer: distance zero
        let b = a.rotated(&expm_skew(&SkewMat::hat3([std::f64::consts::PI, 0.0, 0.0])));
        assert!(orbit_log(&b, &a).unwrap().frob_norm() < 1e-9);
        let c = a.rotated(&expm_skew(&SkewMat::hat3([0.0, 0.2, 0.0])));
        assert!((orbit_log(&c, &a).unwrap().frob_norm() - 0.2 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn angular_error_examples() {
        let t = SymMat::new(&RotMat::planar(0.4).congruence(&Mat::diag(&[2.0, 0.5])));
        assert_eq!(angular_error_deg_spd2(&t, &t), 0.0);
        let r = SymMat::new(&RotMat::planar(0.5).congruence(&Mat::diag(&[2.0, 0.5])));
        assert!((angular_error_deg_spd2(&r, &t) - 0.1f64.to_degrees()).abs() < 1e-10);
        assert!((0.1f64.to_degrees() - 5.73).abs() < 0.01);
        let p = SymMat::new(&RotMat::planar(0.4 + std::f64::consts::PI).congruence(&Mat::diag(&[2.0, 0.5])));
        assert!(angular_error_deg_spd2(&p, &t) < 1e-10);
    }

    #[test]
    fn geodesic_error_examples() {
        let a = expm_skew(&SkewMat::hat3([0.3, 0.1, -0.2]));
        assert!(geodesic_error_deg_so3(&a, &a) < 1e-12);
        let axis = [0.6, 0.0, 0.8];
        let q = expm_skew(&SkewMat::hat3(axis.map(|x| x * std::f64::consts::FRAC_PI_2)));
        assert!((geodesic_error_deg_so3(&a, &a.compose(&q)) - 90.0).abs() < 1e-10);
        let b = a.compose(&expm_skew(&SkewMat::hat3([0.2, -0.5, 0.1]))).compose(&expm_skew(&SkewMat::hat3([0.3, 0.3, 0.0])));
        let rel = RotMat::new(&(&a.mat().transpose() * b.mat())).unwrap();
        let via_log = logm_rot(&rel).unwrap().frob_norm() / 2f64.sqrt();
        assert!((geodesic_error_deg_so3(&a, &b) - via_log.to_degrees()).abs() < 1e-10);
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(&[1.0, 1.0]).is_err());
        assert!(Spectrum::new(&[0.5, 2.0]).is_err());
        assert!(Spectrum::new(&[1.0, 0.0]).is_err());
        assert!(Spectrum::new(&[]).is_err());
    }
}
