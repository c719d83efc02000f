//! Executable form of the convergence argument behind the weak G-closure
//! theorems.
//!
//! Given a load `x⁰` (a stress for the porous problem, a strain for the rigid
//! one) on the bound hyperplane with partner `y⁰`, and a family of effective
//! tensors `T_δ` whose energies approach the bound, the argument shows that
//! `T_δ y⁰ → x⁰`. Each step is checked here with an explicit margin.
//!
//! Everything is written once for a generic tensor `T` in the basis built
//! from `x⁰`; the porous setting uses stiffness tensors and `W_f`, the rigid
//! setting uses compliance tensors and `W̃_f`.

use std::fmt::Write as _;

use nalgebra::{Matrix5, Matrix6, SymmetricEigen, Vector5, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{porous_bound, rigid_bound};
use crate::error::{invalid, Error, Result};
use crate::tensor::{complete_basis, ElasticTensor, IsoModuli, OrthoBasis6, SymTensor2, TensorKind};

/// Relative roundoff allowance for the margin checks.
const MARGIN_TOL: f64 = 1e-12;

/// Relative band inside which a pair counts as lying on the bound hyperplane.
const ON_BOUNDARY_TOL: f64 = 1e-9;

/// `T = [[α, aᵀ], [a, A]]` in an orthonormal basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockForm {
    pub alpha: f64,
    pub a: Vector5<f64>,
    pub big_a: Matrix5<f64>,
    pub basis: OrthoBasis6,
}

impl BlockForm {
    /// The 6×6 matrix in basis coordinates.
    pub fn reassemble(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m[(0, 0)] = self.alpha;
        m.fixed_view_mut::<5, 1>(1, 0).copy_from(&self.a);
        m.fixed_view_mut::<1, 5>(0, 1).copy_from(&self.a.transpose());
        m.fixed_view_mut::<5, 5>(1, 1).copy_from(&self.big_a);
        m
    }

    /// The tensor in Mandel coordinates.
    pub fn to_tensor(&self, kind: TensorKind) -> Result<ElasticTensor> {
        let p = self.basis.matrix();
        ElasticTensor::from_matrix(p * self.reassemble() * p.transpose(), kind)
    }

    /// `A − a aᵀ/α`.
    pub fn schur(&self) -> Matrix5<f64> {
        self.big_a - self.a * self.a.transpose() / self.alpha
    }
}

pub fn to_block(t: &ElasticTensor, basis: &OrthoBasis6) -> BlockForm {
    let p = basis.matrix();
    let m = p.transpose() * t.matrix() * p;
    let m = (m + m.transpose()) * 0.5;
    BlockForm {
        alpha: m[(0, 0)],
        a: m.fixed_view::<5, 1>(1, 0).into_owned(),
        big_a: m.fixed_view::<5, 5>(1, 1).into_owned(),
        basis: *basis,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInverse {
    pub block: BlockForm,
    /// `α − a·A⁻¹a`; the inverse's top-left entry is its reciprocal.
    pub schur: f64,
    /// Set when the Schur complement is tiny relative to `α`.
    pub near_singular: bool,
}

/// Inverse via the partitioned formula with `s = α − a·A⁻¹a`:
/// `[[1/s, −A⁻¹a/s], [−A⁻¹a/s, A⁻¹ + A⁻¹a aᵀA⁻¹/s]]`.
pub fn block_inverse(b: &BlockForm) -> Result<BlockInverse> {
    let chol = b.big_a.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let ai = chol.inverse();
    let aia = ai * b.a;
    let s = b.alpha - b.a.dot(&aia);
    if !(s > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(BlockInverse {
        block: BlockForm {
            alpha: 1.0 / s,
            a: -aia / s,
            big_a: ai + aia * aia.transpose() / s,
            basis: b.basis,
        },
        schur: s,
        near_singular: s < 1e-12 * b.alpha.abs(),
    })
}

fn sym_eigenvalues5(m: &Matrix5<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(*m).eigenvalues;
    (ev.min(), ev.max())
}

/// Certified slack of one tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `c = (x⁰:T⁻¹x⁰ − W) + Σᵢ Bᵢ:T Bᵢ`, the smallest `c` for which the
    /// two-sided energy sandwich holds.
    pub c: f64,
    /// `x⁰:T⁻¹x⁰ − W`, clamped at zero after the roundoff check.
    pub excess: f64,
    /// `Σᵢ₌₁⁵ Bᵢ:T Bᵢ`, the trace of the `A` block.
    pub trace: f64,
}

/// Slack `c` with `W ≤ Σᵢ Bᵢ:T Bᵢ + x⁰:T⁻¹x⁰ ≤ W + c`; both one-sided
/// inequalities `0 ≤ x⁰:T⁻¹x⁰ − W ≤ c` and `0 ≤ Σᵢ Bᵢ:T Bᵢ ≤ c` follow.
///
/// Rejects `T` if `x⁰:T⁻¹x⁰ < W` beyond roundoff: no composite at this volume
/// fraction has that tensor.
pub fn certify_sandwich(
    t: &ElasticTensor,
    x0: &SymTensor2,
    basis: &OrthoBasis6,
    w: f64,
) -> Result<Certificate> {
    let chol = t.matrix().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let energy = x0.as_vector().dot(&chol.solve(x0.as_vector()));
    let excess = energy - w;
    if excess < -MARGIN_TOL * w.abs() {
        return Err(Error::Infeasible(format!(
            "energy {energy:e} lies below the bound {w:e}: not an admissible composite tensor"
        )));
    }
    let trace = basis.members[1..].iter().map(|b| t.energy(b)).sum::<f64>();
    let excess = excess.max(0.0);
    Ok(Certificate {
        c: excess + trace,
        excess,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Nonnegative when the inequality holds.
    pub margin: f64,
    pub pass: bool,
}

fn check(name: &str, margin: f64, scale: f64, rel_tol: f64) -> Check {
    Check {
        name: name.to_string(),
        margin,
        pass: margin >= -rel_tol * scale.abs(),
    }
}

/// Which bound the family is measured against.
pub struct Setting<'a> {
    pub kind: TensorKind,
    bound: Box<dyn Fn(&SymTensor2) -> Result<f64> + 'a>,
}

impl<'a> Setting<'a> {
    /// Stiffness tensors against `W_f` (elastic/void).
    pub fn porous(f: f64, m: IsoModuli) -> Self {
        Self {
            kind: TensorKind::Stiffness,
            bound: Box::new(move |s| Ok(porous_bound(f, &m, s)?.value)),
        }
    }

    /// Compliance tensors against `W̃_f` (elastic/rigid).
    pub fn rigid(f: f64, m: IsoModuli) -> Self {
        Self {
            kind: TensorKind::Compliance,
            bound: Box::new(move |e| Ok(rigid_bound(f, &m, e)?.value)),
        }
    }

    pub fn custom(kind: TensorKind, bound: impl Fn(&SymTensor2) -> Result<f64> + 'a) -> Self {
        Self {
            kind,
            bound: Box::new(bound),
        }
    }

    pub fn bound(&self, x: &SymTensor2) -> Result<f64> {
        (self.bound)(x)
    }
}

/// One row of a [`ConvergenceReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub delta: f64,
    pub c: f64,
    pub alpha: f64,
    pub a_norm: f64,
    pub a_block_max_eig: f64,
    /// `‖T y⁰ − x⁰‖_F`.
    pub deviation: f64,
    /// `|α W / t² − 1|`.
    pub alpha_rel: f64,
    pub checks: Vec<Check>,
}

impl ChainRow {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The inequality chain for one tensor with certified slack `c`:
///
/// * `W + c ≥ t²/s ≥ t²/α` with `s = α − a·A⁻¹a`,
/// * `A ≤ c·I` and `A − a aᵀ/α ≥ 0`, hence `c ≥ |a|²/α`,
/// * `t²/α ≥ W(x⁰ + x_R)` with `x_R = (t/α) Σᵢ aᵢ Bᵢ`.
pub fn chain_checks(setting: &Setting, b: &BlockForm, w: f64, c: f64) -> Result<Vec<Check>> {
    let t = b.basis.t;
    let t2 = t * t;
    let (min_schur, _) = sym_eigenvalues5(&b.schur());
    let (_, max_a) = sym_eigenvalues5(&b.big_a);
    let s = match b.big_a.cholesky() {
        Some(ch) => b.alpha - b.a.dot(&ch.solve(&b.a)),
        None => f64::NAN,
    };
    let a2 = b.a.norm_squared() / b.alpha;
    let mut coords = Vector6::zeros();
    coords.fixed_view_mut::<5, 1>(1, 0).copy_from(&(b.a * (t / b.alpha)));
    let x_r = b.basis.from_coords(&coords);
    let x0 = b.basis.members[0] * t;
    let w_r = setting.bound(&(x0 + x_r))?;
    let upper = w + c;
    let big = upper.max(t2 / b.alpha);
    Ok(vec![
        check("sandwich-upper", upper - t2 / s, big, MARGIN_TOL),
        check("schur-lower", t2 / s - t2 / b.alpha, big, MARGIN_TOL),
        check("a-block-below-c", c - max_a, c.max(max_a), MARGIN_TOL),
        check("schur-psd", min_schur, max_a.max(b.alpha), MARGIN_TOL),
        check("coupling-below-c", c - a2, c.max(a2).max(f64::MIN_POSITIVE), 1e-14),
        check("perturbed-bound", t2 / b.alpha - w_r, big, MARGIN_TOL),
    ])
}

/// A member of a certified family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySample {
    /// Family parameter; for synthetic families this is the requested slack.
    pub delta: f64,
    pub tensor: ElasticTensor,
    pub certified: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub bound: f64,
    pub rows: Vec<ChainRow>,
    /// Deviation never grows by more than 10% from one row to the next.
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(ChainRow::all_pass)
    }

    pub fn final_deviation(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.deviation)
    }

    pub fn final_alpha_rel(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.alpha_rel)
    }

    /// Contract violation unless every check passed, the deviation column is
    /// monotone and its final value is below `threshold`.
    pub fn require_converged(&self, threshold: f64) -> Result<()> {
        if !self.all_pass() {
            return Err(Error::ContractViolation("an inequality of the chain failed".into()));
        }
        if !self.monotone {
            return Err(Error::ContractViolation("deviation column is not monotone".into()));
        }
        let d = self.final_deviation();
        if !(d < threshold) {
            return Err(Error::ContractViolation(format!(
                "final deviation {d:e} is not below {threshold:e}"
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.checks.iter().map(|c| c.name.as_str()).collect())
            .unwrap_or_default();
        let mut out = String::from("delta,c,alpha,a_norm,a_block_max_eig,deviation,alpha_rel");
        for n in &names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.delta, r.c, r.alpha, r.a_norm, r.a_block_max_eig, r.deviation, r.alpha_rel
            );
            for c in &r.checks {
                let _ = write!(out, ",{:e}", c.margin);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_boundary_pair(setting: &Setting, x0: &SymTensor2, y0: &SymTensor2) -> Result<f64> {
    let w = setting.bound(x0)?;
    let work = x0.dot(y0);
    if (work - w).abs() > ON_BOUNDARY_TOL * w.abs() {
        return Err(Error::ContractViolation(format!(
            "pair is not on the bound hyperplane (x:y = {work:e}, W = {w:e})"
        )));
    }
    Ok(w)
}

/// Runs the chain on every sample and records `‖T y⁰ − x⁰‖`.
pub fn converge(
    setting: &Setting,
    family: &[FamilySample],
    x0: &SymTensor2,
    y0: &SymTensor2,
) -> Result<ConvergenceReport> {
    let w = check_boundary_pair(setting, x0, y0)?;
    let basis = complete_basis(x0)?;
    let t = basis.t;
    let mut rows = Vec::with_capacity(family.len());
    for s in family {
        if s.tensor.kind() != setting.kind {
            return Err(invalid(format!(
                "family tensor is a {:?}, expected {:?}",
                s.tensor.kind(),
                setting.kind
            )));
        }
        let cert = certify_sandwich(&s.tensor, x0, &basis, w)?;
        let b = to_block(&s.tensor, &basis);
        let checks = chain_checks(setting, &b, w, cert.c)?;
        let (_, max_a) = sym_eigenvalues5(&b.big_a);
        rows.push(ChainRow {
            delta: s.delta,
            c: cert.c,
            alpha: b.alpha,
            a_norm: b.a.norm(),
            a_block_max_eig: max_a,
            deviation: (s.tensor.apply(y0) - *x0).norm(),
            alpha_rel: (b.alpha * w / (t * t) - 1.0).abs(),
            checks,
        });
    }
    let monotone = rows
        .windows(2)
        .all(|p| p[1].deviation <= 1.1 * p[0].deviation + f64::MIN_POSITIVE);
    Ok(ConvergenceReport {
        t,
        bound: w,
        rows,
        monotone,
    })
}

/// Synthetic certified family for a boundary pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFamily {
    pub samples: Vec<FamilySample>,
    /// Requested slacks that could not be met, with the reason.
    pub skipped: Vec<(f64, String)>,
}

fn random_unit5(rng: &mut impl Rng) -> Vector5<f64> {
    loop {
        let v = Vector5::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_orthogonal5(rng: &mut impl Rng) -> Matrix5<f64> {
    let m = Matrix5::from_fn(|_, _| rng.random_range(-1.0..1.0));
    m.qr().q()
}

/// Builds tensors `T` in the basis of `x⁰` with certified slack close to each
/// requested `c`: `α = t²/(W + c/4)`, `A = (c/10)·Q diag(u) Qᵀ` with
/// `u ∈ [½, 1]`, and a coupling `a` of size `γ·c·√(α/(W + c))` pointing
/// mostly down the gradient of `W` across the hyperplane, which keeps
/// `W(x⁰ + x_R)` under `t²/α`. `γ` is halved until the chain passes.
/// `c = 0` yields `α = t²/W`, `a = 0`, `A = 10⁻¹²·α·I`.
pub fn synth_family(
    setting: &Setting,
    x0: &SymTensor2,
    y0: &SymTensor2,
    ladder: &[f64],
    seed: u64,
) -> Result<SynthFamily> {
    let w = check_boundary_pair(setting, x0, y0)?;
    let basis = complete_basis(x0)?;
    let t = basis.t;
    let t2 = t * t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Gradient of W across the hyperplane, by central differences.
    let h = 1e-5 * t;
    let mut grad = Vector5::zeros();
    for i in 0..5 {
        let b = basis.members[i + 1] * h;
        grad[i] = (setting.bound(&(*x0 + b))? - setting.bound(&(*x0 - b))?) / (2.0 * h);
    }

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for &c in ladder {
        if !(c.is_finite() && c >= 0.0) {
            return Err(invalid(format!("requested slack must be nonnegative, got {c}")));
        }
        let q = random_orthogonal5(&mut rng);
        let u = Vector5::from_fn(|_, _| rng.random_range(0.5..1.0));
        let r = random_unit5(&mut rng);
        let mut gamma = rng.random_range(0.05..0.1);
        let (alpha, big_a, dir) = if c == 0.0 {
            (t2 / w, Matrix5::identity() * (1e-12 * t2 / w), Vector5::zeros())
        } else {
            let g = grad.norm();
            let dir = if g > 1e-12 * w / t {
                let gh = grad / g;
                let side = r - gh * gh.dot(&r);
                let side = if side.norm() > 1e-9 { side.normalize() } else { Vector5::zeros() };
                (-gh + side * 0.5).normalize()
            } else {
                r
            };
            (
                t2 / (w + c / 4.0),
                q * Matrix5::from_diagonal(&u) * q.transpose() * (c / 10.0),
                dir,
            )
        };
        let mut accepted = None;
        let mut last_reason = String::new();
        for _ in 0..40 {
            let a = dir * (gamma * c * (alpha / (w + c)).sqrt());
            let b = BlockForm {
                alpha,
                a,
                big_a,
                basis,
            };
            let tensor = b.to_tensor(setting.kind)?;
            match certify_sandwich(&tensor, x0, &basis, w) {
                Ok(cert) => {
                    let within = c == 0.0 || (cert.c <= 2.0 * c && cert.c >= 0.5 * c);
                    let checks = chain_checks(setting, &b, w, cert.c)?;
                    if within && checks.iter().all(|k| k.pass) {
                        accepted = Some(FamilySample {
                            delta: c,
                            tensor,
                            certified: cert.c,
                        });
                        break;
                    }
                    last_reason = if within {
                        let failed: Vec<&str> =
                            checks.iter().filter(|k| !k.pass).map(|k| k.name.as_str()).collect();
                        format!("chain checks failed: {}", failed.join(", "))
                    } else {
                        format!("certified slack {:e} is not within 2x of {c:e}", cert.c)
                    };
                }
                Err(e) => last_reason = e.to_string(),
            }
            if c == 0.0 {
                break;
            }
            gamma *= 0.5;
        }
        match accepted {
            Some(s) => samples.push(s),
            None => skipped.push((c, last_reason)),
        }
    }
    Ok(SynthFamily { samples, skipped })
}
