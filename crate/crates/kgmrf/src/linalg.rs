//! Small dense matrices: symmetric eigendecomposition, the exponential of a
//! skew matrix and the principal logarithm of a rotation.
//!
//! Everything here is sized for d <= 16. Storage is a row-major `Vec<f64>`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Off-diagonal threshold for the Jacobi sweeps, relative to the input norm.
pub const JACOBI_TOL: f64 = 1e-14;
/// Sweep cap for the Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Series cutoff for the scaling-and-squaring exponential.
pub const EXPM_SERIES_TOL: f64 = 1e-14;
/// Rotations whose angle is within this distance of pi have no usable log.
pub const BRANCH_MARGIN: f64 = 1e-6;
/// Tolerance for `RotMat` construction.
pub const ROT_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat({}x{}) [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                write!(f, "{:>12.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Mat {
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Mat {
        let mut m = Mat::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from rows. Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[&[f64]]) -> Mat {
        let n = rows.len();
        let mut m = Mat::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row {i} has {} entries, expected {n}", r.len());
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), n * n);
        Mat { n, data }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    /// (A + Aᵀ)/2
    pub fn sym_part(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// (A − Aᵀ)/2
    pub fn skew_part(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] - self[(j, i)]))
    }

    /// A · B · Aᵀ
    pub fn congruence(&self, b: &Mat) -> Mat {
        &(self * b) * &self.transpose()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let piv = a[k * n + k];
            det *= piv;
            for i in k + 1..n {
                let f = a[i * n + k] / piv;
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan with partial pivoting; `None` when singular.
    pub fn inverse(&self) -> Option<Mat> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[(i, k)].abs() > a[(p, k)].abs() {
                    p = i;
                }
            }
            if a[(p, k)].abs() < 1e-300 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                    inv.data.swap(k * n + j, p * n + j);
                }
            }
            let piv = a[(k, k)];
            for j in 0..n {
                a[(k, j)] /= piv;
                inv[(k, j)] /= piv;
            }
            for i in 0..n {
                if i != k {
                    let f = a[(i, k)];
                    if f != 0.0 {
                        for j in 0..n {
                            a[(i, j)] -= f * a[(k, j)];
                            inv[(i, j)] -= f * inv[(k, j)];
                        }
                    }
                }
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl Mul<&Mat> for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n, "matrix product dimension mismatch");
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add<&Mat> for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n, "matrix sum dimension mismatch");
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub<&Mat> for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n, "matrix difference dimension mismatch");
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul<f64> for &Mat {
    type Output = Mat;
    fn mul(self, s: f64) -> Mat {
        self.scale(s)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// ab − ba
pub fn commutator(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(&(a * b) - &(b * a))
}

pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

pub fn frob_norm(a: &Mat) -> f64 {
    a.frob_norm()
}

/// Symmetric matrix. The constructor symmetrizes, so entries match exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMat(Mat);

impl SymMat {
    pub fn new(m: &Mat) -> SymMat {
        SymMat(m.sym_part())
    }

    pub fn diag(values: &[f64]) -> SymMat {
        SymMat(Mat::diag(values))
    }

    pub fn identity(n: usize) -> SymMat {
        SymMat(Mat::identity(n))
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn add_identity(&self, s: f64) -> SymMat {
        let mut m = self.0.clone();
        for i in 0..m.dim() {
            m[(i, i)] += s;
        }
        SymMat(m)
    }

    /// Applies `f` to the eigenvalues.
    pub fn map_eigen(&self, f: impl Fn(f64) -> f64) -> Result<SymMat> {
        let e = sym_eig(self)?;
        let vals: Vec<f64> = e.values.iter().map(|&v| f(v)).collect();
        Ok(e.recompose(&vals))
    }

    /// Smallest eigenvalue.
    pub fn min_eig(&self) -> Result<f64> {
        let e = sym_eig(self)?;
        Ok(*e.values.last().unwrap_or(&0.0))
    }
}

impl std::ops::Deref for SymMat {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Skew-symmetric matrix, built by projecting onto (A − Aᵀ)/2.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMat(Mat);

impl SkewMat {
    pub fn new(m: &Mat) -> SkewMat {
        SkewMat(m.skew_part())
    }

    pub fn zeros(n: usize) -> SkewMat {
        SkewMat(Mat::zeros(n))
    }

    /// θ·E_ij: entry (j,i) = θ and (i,j) = −θ. For d=2, `generator(2,0,1,θ)`
    /// rotates by +θ.
    pub fn generator(n: usize, i: usize, j: usize, theta: f64) -> SkewMat {
        let mut m = Mat::zeros(n);
        m[(j, i)] = theta;
        m[(i, j)] = -theta;
        SkewMat(m)
    }

    /// so(3) hat map.
    pub fn hat3(v: [f64; 3]) -> SkewMat {
        SkewMat(Mat::from_rows(&[&[0.0, -v[2], v[1]], &[v[2], 0.0, -v[0]], &[-v[1], v[0], 0.0]]))
    }

    /// so(3) vee map.
    pub fn vee3(&self) -> [f64; 3] {
        assert_eq!(self.dim(), 3);
        let m = &self.0;
        [m[(2, 1)], m[(0, 2)], m[(1, 0)]]
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn scale(&self, s: f64) -> SkewMat {
        SkewMat(self.0.scale(s))
    }

    pub fn add(&self, o: &SkewMat) -> SkewMat {
        SkewMat(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &SkewMat) -> SkewMat {
        SkewMat(&self.0 - &o.0)
    }

    /// The exponential of this matrix.
    pub fn exp(&self) -> RotMat {
        expm_skew(self)
    }
}

impl std::ops::Deref for SkewMat {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

/// Special orthogonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RotMat(Mat);

impl RotMat {
    pub fn new(m: &Mat) -> Result<RotMat> {
        let orth = (&(&m.transpose() * m) - &Mat::identity(m.dim())).frob_norm();
        let det = m.det();
        if orth > ROT_TOL || det <= 0.0 {
            return Err(Error::NotRotation { orth, det });
        }
        Ok(RotMat(m.clone()))
    }

    pub(crate) fn new_unchecked(m: Mat) -> RotMat {
        RotMat(m)
    }

    pub fn identity(n: usize) -> RotMat {
        RotMat(Mat::identity(n))
    }

    /// Planar rotation by θ.
    pub fn planar(theta: f64) -> RotMat {
        let (s, c) = theta.sin_cos();
        RotMat(Mat::from_rows(&[&[c, -s], &[s, c]]))
    }

    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn transpose(&self) -> RotMat {
        RotMat(self.0.transpose())
    }

    pub fn compose(&self, o: &RotMat) -> RotMat {
        RotMat(&self.0 * &o.0)
    }

    pub fn orthogonality_error(&self) -> f64 {
        (&(&self.0.transpose() * &self.0) - &Mat::identity(self.dim())).frob_norm()
    }

    pub fn log(&self) -> Result<SkewMat> {
        logm_rot(self)
    }
}

impl std::ops::Deref for RotMat {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigDecomp {
    /// Orthogonal with det +1; column k pairs with `values[k]`.
    pub vectors: Mat,
    /// Descending.
    pub values: Vec<f64>,
}

impl EigDecomp {
    /// U · diag(values) · Uᵀ for replacement eigenvalues.
    pub fn recompose(&self, values: &[f64]) -> SymMat {
        let u = &self.vectors;
        let n = u.dim();
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += u[(i, k)] * values[k] * u[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMat(out)
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eig(a: &SymMat) -> Result<EigDecomp> {
    let n = a.dim();
    let mut m = a.mat().clone();
    let mut v = Mat::identity(n);
    let norm = m.frob_norm();
    let off = |m: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = norm == 0.0 || off(&m) <= JACOBI_TOL * norm;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&m) <= JACOBI_TOL * norm;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps, norm, off: off(&m) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep their original index order
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::from_fn(n, |i, k| v[(i, order[k])]);
    if n > 0 && vectors.det() < 0.0 {
        for i in 0..n {
            vectors[(i, n - 1)] = -vectors[(i, n - 1)];
        }
    }
    Ok(EigDecomp { vectors, values })
}

/// Matrix exponential of a skew matrix.
pub fn expm_skew(w: &SkewMat) -> RotMat {
    let n = w.dim();
    match n {
        0 | 1 => RotMat::identity(n),
        2 => RotMat::planar(w[(1, 0)]),
        3 => {
            let v = w.vee3();
            let th2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let th = th2.sqrt();
            let (a, b) = if th < 1e-4 {
                (1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0)
            } else {
                (th.sin() / th, (1.0 - th.cos()) / th2)
            };
            let w1 = w.mat();
            let w2 = w1 * w1;
            let r = &(&Mat::identity(3) + &w1.scale(a)) + &w2.scale(b);
            RotMat(r)
        }
        _ => RotMat(expm_series(w.mat())),
    }
}

/// Scaling and squaring on a truncated Taylor series.
pub fn expm_series(a: &Mat) -> Mat {
    let n = a.dim();
    let norm = a.frob_norm();
    let mut s = 0;
    while norm / f64::powi(2.0, s) > 0.5 {
        s += 1;
    }
    let x = a.scale(f64::powi(2.0, -s));
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..60 {
        term = (&term * &x).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.frob_norm() < EXPM_SERIES_TOL {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Principal logarithm of a rotation.
pub fn logm_rot(r: &RotMat) -> Result<SkewMat> {
    let n = r.dim();
    let limit = std::f64::consts::PI - BRANCH_MARGIN;
    match n {
        0 | 1 => Ok(SkewMat::zeros(n)),
        2 => {
            let th = r[(1, 0)].atan2(r[(0, 0)]);
            if th.abs() > limit {
                return Err(Error::BranchCut { angle: th });
            }
            Ok(SkewMat::generator(2, 0, 1, th))
        }
        3 => {
            let k = r.mat().skew_part();
            let v = [k[(2, 1)], k[(0, 2)], k[(1, 0)]];
            let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let c = 0.5 * (r.trace() - 1.0);
            let th = s.atan2(c);
            if th > limit {
                return Err(Error::BranchCut { angle: th });
            }
            let f = if th < 1e-4 { 1.0 + th * th / 6.0 + 7.0 * th.powi(4) / 360.0 } else { th / th.sin() };
            Ok(SkewMat(k.scale(f)))
        }
        _ => {
            // The symmetric part is cos(W) and the skew part sin(W) under the
            // functional calculus of the normal matrix W = log R, and the two
            // commute, so W = g(sym) · skew with g(c) = acos(c)/sqrt(1 − c²).
            let sym = SymMat::new(r.mat());
            let k = r.mat().skew_part();
            let e = sym_eig(&sym)?;
            let cmin = *e.values.last().unwrap();
            if cmin <= limit.cos() {
                return Err(Error::BranchCut { angle: cmin.clamp(-1.0, 1.0).acos() });
            }
            let g: Vec<f64> = e
                .values
                .iter()
                .map(|&c| {
                    let c = c.clamp(-1.0, 1.0);
                    let u = 1.0 - c;
                    if u < 1e-8 {
                        1.0 + u / 3.0
                    } else {
                        c.acos() / (1.0 - c * c).sqrt()
                    }
                })
                .collect();
            let gm = e.recompose(&g);
            Ok(SkewMat::new(&(gm.mat() * &k)))
        }
    }
}

/// Nearest rotation to `a` in Frobenius norm, via the eigendecomposition of
/// aᵀa. Total: rank-deficient inputs are completed by Gram-Schmidt.
pub fn polar_project(a: &Mat) -> Result<RotMat> {
    let n = a.dim();
    let ata = SymMat::new(&(&a.transpose() * a));
    let e = sym_eig(&ata)?;
    let v = &e.vectors;
    let av = a * v;
    let scale = a.frob_norm().max(1e-300);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let sigma = e.values[k].max(0.0).sqrt();
        if sigma > 1e-12 * scale {
            cols.push((0..n).map(|i| av[(i, k)] / sigma).collect());
        } else {
            let mut best: Option<Vec<f64>> = None;
            for b in 0..n {
                let mut x = vec![0.0; n];
                x[b] = 1.0;
                for c in &cols {
                    let d: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    for i in 0..n {
                        x[i] -= d * c[i];
                    }
                }
                let nx = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                if nx > 0.5 {
                    best = Some(x.iter().map(|t| t / nx).collect());
                    break;
                }
            }
            cols.push(best.expect("orthonormal completion always finds a basis vector"));
        }
    }
    let mut u = Mat::from_fn(n, |i, k| cols[k][i]);
    if u.det() * v.det() < 0.0 {
        for i in 0..n {
            u[(i, n - 1)] = -u[(i, n - 1)];
        }
    }
    Ok(RotMat(&u * &v.transpose()))
}
