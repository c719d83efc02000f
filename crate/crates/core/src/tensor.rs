//! Symmetric second- and fourth-order tensors in the orthonormal Mandel basis.
//!
//! A symmetric 3×3 matrix is stored as the 6-vector
//! `(a11, a22, a33, √2·a23, √2·a13, √2·a12)`, so the Euclidean inner product of
//! two such vectors equals the double contraction `A:B = Tr(AB)`. Fourth-order
//! tensors with minor and major symmetries become symmetric 6×6 matrices in the
//! same basis, and every energy in this crate is a plain quadratic form.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Condition number above which an inversion is flagged.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Mandel slot for each (row, column) of a symmetric 3×3 matrix.
const SLOT: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];

/// Symmetric second-order tensor (stress, strain, trial field).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2(Vector6<f64>);

impl SymTensor2 {
    /// Builds from Mandel components `(11, 22, 33, √2·23, √2·13, √2·12)`.
    pub fn from_mandel(v: [f64; 6]) -> Self {
        Self(Vector6::from(v))
    }

    pub fn from_vector(v: Vector6<f64>) -> Self {
        Self(v)
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Self(Vector6::new(a, b, c, 0.0, 0.0, 0.0))
    }

    /// Builds from a full matrix, rejecting asymmetry above `1e-12` relative.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (m - m.transpose()).amax();
        if !m.iter().all(|x| x.is_finite()) {
            return Err(invalid("tensor has non-finite entries"));
        }
        if asym > 1e-12 * scale {
            return Err(invalid(format!(
                "matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        Ok(Self::from_matrix_symmetrized(m))
    }

    /// Builds from the symmetric part of `m`.
    pub fn from_matrix_symmetrized(m: &Matrix3<f64>) -> Self {
        let s = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
        Self(Vector6::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            SQRT_2 * s(1, 2),
            SQRT_2 * s(0, 2),
            SQRT_2 * s(0, 1),
        ))
    }

    /// Symmetrized dyad `(a⊗b + b⊗a)/2`.
    pub fn sym_dyad(a: &Vector3<f64>, b: &Vector3<f64>) -> Self {
        Self::from_matrix_symmetrized(&(a * b.transpose()))
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let v = &self.0;
        let (d, e, f) = (
            v[3] * FRAC_1_SQRT_2,
            v[4] * FRAC_1_SQRT_2,
            v[5] * FRAC_1_SQRT_2,
        );
        Matrix3::new(v[0], f, e, f, v[1], d, e, d, v[2])
    }

    pub fn mandel(&self) -> [f64; 6] {
        self.0.into()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }

    /// Component `(i, j)` of the matrix form.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let k = SLOT[i][j];
        if i == j {
            self.0[k]
        } else {
            self.0[k] * FRAC_1_SQRT_2
        }
    }

    /// Double contraction `A:B`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `Qᵀ A Q`.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Self {
        Self::from_matrix_symmetrized(&(q.transpose() * self.to_matrix() * q))
    }

    /// `A n` for a vector `n`.
    pub fn times_vector(&self, n: &Vector3<f64>) -> Vector3<f64> {
        self.to_matrix() * n
    }

    pub fn eig(&self) -> SymEigen3 {
        eig_sym(self)
    }
}

impl Add for SymTensor2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl AddAssign for SymTensor2 {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for SymTensor2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Neg for SymTensor2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0 * rhs)
    }
}

impl Mul<SymTensor2> for f64 {
    type Output = SymTensor2;
    fn mul(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(rhs.0 * self)
    }
}

/// Eigenvalues in nondecreasing order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: Matrix3<f64>,
}

impl SymEigen3 {
    pub fn reconstruct(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&Vector3::from(self.values));
        self.vectors * d * self.vectors.transpose()
    }

    /// `Q diag(v) Qᵀ` with the same eigenvectors and new eigenvalues.
    pub fn with_values(&self, v: [f64; 3]) -> SymTensor2 {
        let d = Matrix3::from_diagonal(&Vector3::from(v));
        SymTensor2::from_matrix_symmetrized(&(self.vectors * d * self.vectors.transpose()))
    }
}

/// Eigendecomposition of a symmetric 3×3 tensor.
///
/// Eigenvalues come from the trigonometric solution of the characteristic cubic
/// followed by one Newton step. Eigenvectors are built for the best separated
/// eigenvalue first and the rest from a 2×2 problem in its orthogonal
/// complement, which keeps them orthonormal for clustered spectra. The returned
/// eigenvalues are Rayleigh quotients of those vectors.
pub fn eig_sym(a: &SymTensor2) -> SymEigen3 {
    let m = a.to_matrix();
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return SymEigen3 {
            values: [m[(0, 0)]; 3],
            vectors: Matrix3::identity(),
        };
    }
    let s = m / scale;
    let q = s.trace() / 3.0;
    let b = s - Matrix3::identity() * q;
    let off = b[(0, 1)].powi(2) + b[(0, 2)].powi(2) + b[(1, 2)].powi(2);
    let p2 = (b[(0, 0)].powi(2) + b[(1, 1)].powi(2) + b[(2, 2)].powi(2) + 2.0 * off) / 6.0;
    if p2 <= f64::EPSILON * f64::EPSILON {
        let mut values = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        let vectors = sort_pairs(&mut values, Matrix3::identity());
        return SymEigen3 { values, vectors };
    }
    let p = p2.sqrt();
    let c = b / p;
    let r = (0.5 * c.determinant()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    // Roots of x³ − 3x − 2r, largest first.
    let mut roots = [
        2.0 * phi.cos(),
        2.0 * (phi + 4.0 * PI / 3.0).cos(),
        2.0 * (phi + 2.0 * PI / 3.0).cos(),
    ];
    for x in roots.iter_mut() {
        let f = *x * *x * *x - 3.0 * *x - 2.0 * r;
        let d = 3.0 * *x * *x - 3.0;
        if d.abs() > 1e-8 {
            let y = *x - f / d;
            if (y * y * y - 3.0 * y - 2.0 * r).abs() < f.abs() {
                *x = y;
            }
        }
    }
    let ev = |x: f64| q + p * x;
    let (v_big, v_mid, v_small);
    if r >= 0.0 {
        // Largest eigenvalue is the isolated one.
        v_big = null_vector(&s, ev(roots[0]));
        v_mid = complement_null_vector(&s, &v_big, ev(roots[1]));
        v_small = v_big.cross(&v_mid);
    } else {
        v_small = null_vector(&s, ev(roots[2]));
        v_mid = complement_null_vector(&s, &v_small, ev(roots[1]));
        v_big = v_mid.cross(&v_small);
    }
    let vectors = Matrix3::from_columns(&[v_small, v_mid, v_big]);
    let mut values = [0.0; 3];
    for (k, val) in values.iter_mut().enumerate() {
        let v = vectors.column(k);
        *val = v.dot(&(s * v)) * scale;
    }
    let vectors = sort_pairs(&mut values, vectors);
    SymEigen3 { values, vectors }
}

fn sort_pairs(values: &mut [f64; 3], vectors: Matrix3<f64>) -> Matrix3<f64> {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let sorted = [values[idx[0]], values[idx[1]], values[idx[2]]];
    *values = sorted;
    Matrix3::from_columns(&[
        vectors.column(idx[0]).into_owned(),
        vectors.column(idx[1]).into_owned(),
        vectors.column(idx[2]).into_owned(),
    ])
}

/// Unit vector spanning the (numerical) null space of `s − e I`, assuming it is
/// one-dimensional.
fn null_vector(s: &Matrix3<f64>, e: f64) -> Vector3<f64> {
    let b = s - Matrix3::identity() * e;
    let r0 = b.row(0).transpose();
    let r1 = b.row(1).transpose();
    let r2 = b.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vector3::x);
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        Vector3::x()
    }
}

/// Eigenvector for `e` orthogonal to the known unit eigenvector `u0`.
fn complement_null_vector(s: &Matrix3<f64>, u0: &Vector3<f64>, e: f64) -> Vector3<f64> {
    let (u, v) = orthonormal_complement(u0);
    let b = s - Matrix3::identity() * e;
    let bu = b * u;
    let bv = b * v;
    let (mut m00, mut m01, mut m11) = (u.dot(&bu), u.dot(&bv), v.dot(&bv));
    let (a00, a01, a11) = (m00.abs(), m01.abs(), m11.abs());
    if a00.max(a01) >= a11 {
        if a00.max(a01) == 0.0 {
            return u;
        }
        if a00 >= a01 {
            m01 /= m00;
            m00 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m00;
        } else {
            m00 /= m01;
            m01 = 1.0 / (1.0 + m00 * m00).sqrt();
            m00 *= m01;
        }
        (u * m01 - v * m00).normalize()
    } else {
        if a11 >= a01 {
            m01 /= m11;
            m11 = 1.0 / (1.0 + m01 * m01).sqrt();
            m01 *= m11;
        } else {
            m11 /= m01;
            m01 = 1.0 / (1.0 + m11 * m11).sqrt();
            m11 *= m01;
        }
        (u * m11 - v * m01).normalize()
    }
}

/// Two unit vectors completing `w` to a right-handed orthonormal frame.
pub fn orthonormal_complement(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = if w.x.abs() > w.y.abs() {
        Vector3::new(-w.z, 0.0, w.x) / (w.x * w.x + w.z * w.z).sqrt()
    } else {
        Vector3::new(0.0, w.z, -w.y) / (w.y * w.y + w.z * w.z).sqrt()
    };
    let v = w.cross(&u);
    (u, v)
}

/// Whether a 6×6 matrix holds stiffness or compliance moduli.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorKind {
    Stiffness,
    Compliance,
}

impl TensorKind {
    pub fn dual(self) -> Self {
        match self {
            TensorKind::Stiffness => TensorKind::Compliance,
            TensorKind::Compliance => TensorKind::Stiffness,
        }
    }
}

/// Fourth-order tensor with minor and major symmetries as a symmetric 6×6 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor {
    matrix: Matrix6<f64>,
    kind: TensorKind,
}

/// Result of [`ElasticTensor::invert`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inverse {
    pub tensor: ElasticTensor,
    /// Spectral condition number of the input.
    pub condition: f64,
    /// Set when `condition` exceeds [`CONDITION_LIMIT`].
    pub ill_conditioned: bool,
}

impl ElasticTensor {
    /// Wraps a 6×6 matrix, rejecting asymmetry above `1e-10` relative. The
    /// stored matrix is the exact symmetric part.
    pub fn from_matrix(m: Matrix6<f64>, kind: TensorKind) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(invalid("tensor has non-finite entries"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (m - m.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(invalid(format!(
                "6x6 matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        Ok(Self::symmetrized(m, kind))
    }

    pub(crate) fn symmetrized(m: Matrix6<f64>, kind: TensorKind) -> Self {
        Self {
            matrix: (m + m.transpose()) * 0.5,
            kind,
        }
    }

    pub fn identity(kind: TensorKind) -> Self {
        Self {
            matrix: Matrix6::identity(),
            kind,
        }
    }

    /// Isotropic stiffness `Cε = 2με + λ Tr(ε) I`. Only positive definiteness is
    /// required here (`μ > 0`, `3λ + 2μ > 0`); [`IsoModuli`] enforces the
    /// stricter `λ > 0` used by the bounds.
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite()) || mu <= 0.0 || 3.0 * lambda + 2.0 * mu <= 0.0 {
            return Err(invalid(format!(
                "moduli (lambda={lambda}, mu={mu}) do not give a positive definite tensor"
            )));
        }
        let mut m = Matrix6::identity() * (2.0 * mu);
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] += lambda;
            }
        }
        Ok(Self {
            matrix: m,
            kind: TensorKind::Stiffness,
        })
    }

    /// Rank-one tensor `α A⊗A`; with `A` a stress this is an ideal pentamode.
    pub fn rank_one(a: &SymTensor2, alpha: f64, kind: TensorKind) -> Self {
        let v = a.as_vector();
        Self {
            matrix: v * v.transpose() * alpha,
            kind,
        }
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> TensorKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: TensorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix * s,
            kind: self.kind,
        }
    }

    pub fn apply(&self, e: &SymTensor2) -> SymTensor2 {
        SymTensor2(self.matrix * e.as_vector())
    }

    /// Quadratic form `e : T e`.
    pub fn energy(&self, e: &SymTensor2) -> f64 {
        e.as_vector().dot(&(self.matrix * e.as_vector()))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 6] {
        let mut v: [f64; 6] = SymmetricEigen::new(self.matrix).eigenvalues.into();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn is_positive_definite(&self) -> bool {
        self.matrix.cholesky().is_some() && self.eigenvalues()[0] > 0.0
    }

    /// Inverse of a positive-definite tensor; the stiffness/compliance flag is
    /// swapped. Large condition numbers are reported, not hidden.
    pub fn invert(&self) -> Result<Inverse> {
        let chol = self.matrix.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let ev = self.eigenvalues();
        if ev[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let condition = ev[5] / ev[0];
        Ok(Inverse {
            tensor: Self::symmetrized(chol.inverse(), self.kind.dual()),
            condition,
            ill_conditioned: condition > CONDITION_LIMIT,
        })
    }

    /// Tensor acting on rotated fields: if `σ = T ε` then
    /// `Qᵀσ Q = T' (Qᵀε Q)`.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Self {
        let r = mandel_rotation(q);
        Self::symmetrized(r * self.matrix * r.transpose(), self.kind)
    }
}

/// 6×6 orthogonal matrix of `A ↦ QᵀAQ` in Mandel coordinates.
pub fn mandel_rotation(q: &Matrix3<f64>) -> Matrix6<f64> {
    let mut r = Matrix6::zeros();
    for k in 0..6 {
        let mut e = [0.0; 6];
        e[k] = 1.0;
        let col = SymTensor2::from_mandel(e).rotated(q);
        r.set_column(k, col.as_vector());
    }
    r
}

/// Lamé moduli of the isotropic base material. Both must be positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoModuli {
    lambda: f64,
    mu: f64,
}

impl IsoModuli {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("Lame modulus must be positive, got {lambda}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid(format!("shear modulus must be positive, got {mu}")));
        }
        Ok(Self { lambda, mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bulk(&self) -> f64 {
        self.lambda + 2.0 * self.mu / 3.0
    }

    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    /// `ε : C ε`.
    pub fn elastic_energy(&self, e: &SymTensor2) -> f64 {
        2.0 * self.mu * e.dot(e) + self.lambda * e.trace().powi(2)
    }

    /// `σ : C⁻¹ σ` in closed form.
    pub fn complementary_energy(&self, s: &SymTensor2) -> f64 {
        let (l, m) = (self.lambda, self.mu);
        s.dot(s) / (2.0 * m) - l * s.trace().powi(2) / (2.0 * m * (2.0 * m + 3.0 * l))
    }

    pub fn stiffness(&self) -> ElasticTensor {
        iso_elasticity(self)
    }
}

/// Isotropic stiffness of the base material.
pub fn iso_elasticity(m: &IsoModuli) -> ElasticTensor {
    ElasticTensor::isotropic(m.lambda, m.mu).expect("validated moduli are positive definite")
}

/// Orthonormal basis of symmetric tensors whose first member is `s/t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasis6 {
    /// Frobenius norm of the generating tensor.
    pub t: f64,
    pub members: [SymTensor2; 6],
}

impl OrthoBasis6 {
    /// Columns are the Mandel vectors of the members.
    pub fn matrix(&self) -> Matrix6<f64> {
        let mut p = Matrix6::zeros();
        for (k, b) in self.members.iter().enumerate() {
            p.set_column(k, b.as_vector());
        }
        p
    }

    /// Coordinates `Bᵢ : x`.
    pub fn coords(&self, x: &SymTensor2) -> Vector6<f64> {
        Vector6::from_fn(|i, _| self.members[i].dot(x))
    }

    pub fn from_coords(&self, c: &Vector6<f64>) -> SymTensor2 {
        SymTensor2(self.matrix() * c)
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        let p = self.matrix();
        (p.transpose() * p - Matrix6::identity()).amax()
    }
}

/// Completes `s / ‖s‖` to an orthonormal basis.
///
/// Starts from the canonical Mandel frame, replaces the member with the largest
/// overlap with `s`, and runs modified Gram–Schmidt twice. The result depends
/// only on `s`.
pub fn complete_basis(s: &SymTensor2) -> Result<OrthoBasis6> {
    let t = s.norm();
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("cannot build a basis from a zero tensor"));
    }
    let b0 = s.as_vector() / t;
    let replaced = (0..6)
        .max_by(|&i, &j| b0[i].abs().total_cmp(&b0[j].abs()))
        .unwrap_or(0);
    let mut members = vec![b0];
    for k in (0..6).filter(|&k| k != replaced) {
        let mut v = Vector6::zeros();
        v[k] = 1.0;
        for _ in 0..2 {
            for u in &members {
                v -= u * u.dot(&v);
            }
        }
        let n = v.norm();
        members.push(v / n);
    }
    let mut out = [SymTensor2::zero(); 6];
    for (o, m) in out.iter_mut().zip(members) {
        *o = SymTensor2(m);
    }
    Ok(OrthoBasis6 { t, members: out })
}
