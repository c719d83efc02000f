//! Two-phase conductivity: Wiener means, the sphere bound on achievable
//! (average current, average gradient) pairs, the laminates that attain it,
//! current-guiding tensors, and the insulating-phase shielding problem.

pub mod shield;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::bounds::Classification;
use crate::error::{invalid, Error, Result};
use crate::tensor::{orthonormal_complement, ElasticTensor, SymTensor2, TensorKind};

/// Default relative tolerance for a `Boundary` verdict.
pub const DEFAULT_SPHERE_TOL: f64 = 1e-9;

/// Arithmetic and harmonic means of two conductivities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondPairBounds {
    pub k_plus: f64,
    pub k_minus: f64,
    pub f: f64,
    pub k1: f64,
    pub k2: f64,
}

impl CondPairBounds {
    pub fn center(&self) -> f64 {
        0.5 * (self.k_plus + self.k_minus)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.k_plus - self.k_minus)
    }
}

/// `k⁺ = f k₁ + (1−f) k₂` and `k⁻ = (f/k₁ + (1−f)/k₂)⁻¹`, the latter taken
/// as zero when a phase of zero conductivity occupies positive volume.
pub fn wiener_means(f: f64, k1: f64, k2: f64) -> Result<CondPairBounds> {
    if !(f.is_finite() && (0.0..=1.0).contains(&f)) {
        return Err(invalid(format!("volume fraction must lie in [0, 1], got {f}")));
    }
    if !(k1.is_finite() && k2.is_finite() && k1 >= 0.0 && k2 >= 0.0) {
        return Err(invalid(format!("conductivities must be nonnegative, got {k1}, {k2}")));
    }
    let k_plus = f * k1 + (1.0 - f) * k2;
    let k_minus = if f == 1.0 {
        k1
    } else if f == 0.0 {
        k2
    } else if k1 == 0.0 || k2 == 0.0 {
        0.0
    } else {
        1.0 / (f / k1 + (1.0 - f) / k2)
    };
    Ok(CondPairBounds {
        k_plus,
        k_minus: k_minus.min(k_plus),
        f,
        k1,
        k2,
    })
}

fn check_vectors(q: &[f64], e: &[f64]) -> Result<()> {
    if q.len() != e.len() || !(2..=3).contains(&q.len()) {
        return Err(invalid(format!(
            "current and gradient must both have 2 or 3 components, got {} and {}",
            q.len(),
            e.len()
        )));
    }
    if !q.iter().chain(e).all(|x| x.is_finite()) {
        return Err(invalid("vector has non-finite components"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereVerdict {
    pub classification: Classification,
    /// `(k⁺−k⁻)²|e|²/4 − |q − ½(k⁺+k⁻)e|²`; positive inside.
    pub residual: f64,
    pub tolerance: f64,
}

/// Classifies `(q⁰, e⁰)` against the sphere `|q − ½(k⁺+k⁻)e|² ≤ (k⁺−k⁻)²|e|²/4`.
pub fn pair_membership(q: &[f64], e: &[f64], b: &CondPairBounds, rel_tol: f64) -> Result<SphereVerdict> {
    check_vectors(q, e)?;
    if !(rel_tol.is_finite() && rel_tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {rel_tol}")));
    }
    let (q, e) = (DVector::from_column_slice(q), DVector::from_column_slice(e));
    let r2 = b.radius().powi(2) * e.norm_squared();
    let d2 = (&q - &e * b.center()).norm_squared();
    let residual = r2 - d2;
    let scale = r2.max(b.k_plus.powi(2) * e.norm_squared()).max(q.norm_squared());
    let tolerance = rel_tol * scale;
    let classification = if residual < -tolerance {
        Classification::Infeasible
    } else if residual <= tolerance {
        Classification::Boundary
    } else {
        Classification::Interior
    };
    Ok(SphereVerdict {
        classification,
        residual,
        tolerance,
    })
}

/// A simple laminate realizing a boundary pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttainingLaminate {
    /// `K* = k⁺ I − (k⁺ − k⁻) n⊗n`, row-major.
    pub tensor: Vec<Vec<f64>>,
    pub normal: Vec<f64>,
    /// `K*e⁰ − q⁰`, for the record.
    pub residual: f64,
}

/// Laminate with normal `n` and eigenvalues `k⁻` (along `n`) and `k⁺`
/// (across it) mapping `e⁰` to `q⁰`. `w = k⁺e⁰ − q⁰` must equal
/// `(k⁺−k⁻)(n·e⁰)n`, so `n` is the direction of `w`; on the sphere this
/// equation is consistent exactly.
pub fn attaining_laminate(q: &[f64], e: &[f64], b: &CondPairBounds, rel_tol: f64) -> Result<AttainingLaminate> {
    let verdict = pair_membership(q, e, b, rel_tol)?;
    if verdict.classification != Classification::Boundary {
        return Err(Error::Infeasible(format!(
            "pair is {} the sphere bound; only boundary pairs are attained by a simple laminate",
            match verdict.classification {
                Classification::Interior => "inside",
                _ => "outside",
            }
        )));
    }
    let dim = q.len();
    let (qv, ev) = (DVector::from_column_slice(q), DVector::from_column_slice(e));
    if ev.norm() == 0.0 {
        return Err(invalid("the average gradient must be nonzero"));
    }
    let w = &ev * b.k_plus - &qv;
    let scale = b.k_plus * ev.norm();
    let mut n = if w.norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        &w / w.norm()
    } else {
        // Current along the layers: any normal perpendicular to e⁰.
        perpendicular(&ev)
    };
    if n.dot(&ev) < 0.0 {
        n = -n;
    }
    let k = DMatrix::identity(dim, dim) * b.k_plus - &n * n.transpose() * (b.k_plus - b.k_minus);
    let residual = (&k * &ev - &qv).norm();
    Ok(AttainingLaminate {
        tensor: (0..dim).map(|i| k.row(i).iter().copied().collect()).collect(),
        normal: n.iter().copied().collect(),
        residual,
    })
}

fn perpendicular(e: &DVector<f64>) -> DVector<f64> {
    let u = e / e.norm();
    if e.len() == 2 {
        DVector::from_vec(vec![-u[1], u[0]])
    } else {
        let (a, _) = orthonormal_complement(&Vector3::new(u[0], u[1], u[2]));
        DVector::from_vec(vec![a[0], a[1], a[2]])
    }
}

/// Smallest `q⁰·e⁰` with an insulating second phase: `|q⁰|²/(f k₁)`.
pub fn insulating_bound(q: &[f64], f: f64, k1: f64) -> Result<f64> {
    if !(f.is_finite() && (0.0..=1.0).contains(&f)) {
        return Err(invalid(format!("volume fraction must lie in [0, 1], got {f}")));
    }
    if !(k1.is_finite() && k1 > 0.0) {
        return Err(invalid(format!("conductivity must be positive, got {k1}")));
    }
    let q2: f64 = q.iter().map(|x| x * x).sum();
    if !q2.is_finite() {
        return Err(invalid("current has non-finite components"));
    }
    if q2 == 0.0 {
        return Ok(0.0);
    }
    if f == 0.0 {
        return Err(Error::Infeasible("no conducting material to carry a nonzero current".into()));
    }
    Ok(q2 / (f * k1))
}

/// Smallest `q⁰·e⁰` over all gradients admissible with `q⁰` under the
/// sphere bound. For `p = q⁰·e⁰` the shortest admissible gradient is
/// parallel to `q⁰`, which turns the sphere condition into
/// `k⁺k⁻p² − (k⁺+k⁻)|q|²p + |q|⁴ ≤ 0`; the answer is its smaller root
/// (or the root of the linear equation when `k⁻ = 0`).
pub fn min_work(q: &[f64], b: &CondPairBounds) -> Result<f64> {
    let q2: f64 = q.iter().map(|x| x * x).sum();
    if !q2.is_finite() {
        return Err(invalid("current has non-finite components"));
    }
    if q2 == 0.0 {
        return Ok(0.0);
    }
    if b.k_plus <= 0.0 {
        return Err(Error::Infeasible("both phases are insulating".into()));
    }
    let qb = (b.k_plus + b.k_minus) * q2;
    let qc = q2 * q2;
    // The discriminant factors as ((k⁺−k⁻)|q|²)²; the smaller root is
    // written as 2c/(b + √disc) to avoid cancellation.
    let sqrt_disc = (b.k_plus - b.k_minus) * q2;
    Ok(2.0 * qc / (qb + sqrt_disc))
}

/// `α a⊗a`: any gradient produces a current parallel to `a`.
pub fn guide_tensor(a: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    let v = DVector::from_column_slice(a);
    if !(alpha.is_finite() && alpha > 0.0) || !(v.norm() > 0.0) || !v.iter().all(|x| x.is_finite()) {
        return Err(invalid("guide tensor needs a nonzero direction and positive weight"));
    }
    Ok(&v * v.transpose() * alpha)
}

/// Elastic analogue `α A⊗A`: any strain produces a stress proportional to `A`.
pub fn pentamode_tensor(a: &SymTensor2, alpha: f64) -> Result<ElasticTensor> {
    if !(alpha.is_finite() && alpha > 0.0) || !(a.norm() > 0.0) || !a.is_finite() {
        return Err(invalid("pentamode tensor needs a nonzero stress and positive weight"));
    }
    Ok(ElasticTensor::rank_one(a, alpha, TensorKind::Stiffness))
}
