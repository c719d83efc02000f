//! Closed-form energy bounds and weak G-closure membership.
//!
//! `porous_bound` is the optimal complementary energy `W_f(σ⁰)` of a mixture of
//! an isotropic material (volume fraction `f`) with void; `rigid_bound` is the
//! optimal elastic energy `W̃_f(ε⁰)` of the same material mixed with a rigid
//! phase. Each bound is a hyperplane constraint `W ≤ σ⁰:ε⁰` on the achievable
//! (average stress, average strain) pairs, and every pair on or above the
//! hyperplane is realizable, so membership reduces to a signed residual.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{complete_basis, eig_sym, IsoModuli, SymTensor2};

/// Default relative tolerance for a `Boundary` verdict.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// Relative width of the band in which two branch conditions count as tied.
const BRANCH_TIE: f64 = 1e-12;

/// Relative disagreement between tied branch formulas that signals a bug.
const BRANCH_AGREEMENT: f64 = 1e-9;

/// Volume-fraction weight of the `g/(2μ)` term in the porous bound.
///
/// The bound reads `σ:C₁⁻¹σ + (1−f)/f · g/(2μ)`. This is the only weight that
/// reduces to the pure phase at `f = 1`, diverges as the material vanishes,
/// and reproduces the Hashin–Shtrikman upper bulk modulus for hydrostatic
/// stress; the rank-3 laminate optimizer in [`crate::laminate`] agrees with it.
pub fn porous_prefactor(f: f64) -> f64 {
    (1.0 - f) / f
}

pub(crate) fn check_fraction(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("volume fraction must lie in (0, 1], got {f}")))
    }
}

fn check_tensor(x: &SymTensor2, name: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} has non-finite components")))
    }
}

/// Branch of the piecewise quadratic `g` used by the porous bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PorousBranch {
    /// All eigenvalues nonnegative, `σ₃ ≤ σ₁ + σ₂`.
    NonnegBalanced,
    /// All eigenvalues nonnegative, `σ₃ ≥ σ₁ + σ₂`.
    NonnegDominant,
    /// `σ₁ < 0`, `σ₃ + σ₂ ≥ −μσ₁/(μ+λ)` and `σ₃ − σ₂ ≤ −μσ₁/(μ+λ)`.
    OneNegCase1,
    /// `σ₁ < 0`, `σ₃ + σ₂ ≤ −μσ₁/(μ+λ)`.
    OneNegCase2,
    /// `σ₁ < 0`, `σ₃ − σ₂ ≥ −μσ₁/(μ+λ)`.
    OneNegCase3,
}

impl PorousBranch {
    pub fn tag(self) -> &'static str {
        match self {
            PorousBranch::NonnegBalanced => "all-nonneg/s3<=s1+s2",
            PorousBranch::NonnegDominant => "all-nonneg/s3>=s1+s2",
            PorousBranch::OneNegCase1 => "one-neg/case-1",
            PorousBranch::OneNegCase2 => "one-neg/case-2",
            PorousBranch::OneNegCase3 => "one-neg/case-3",
        }
    }

    /// Evaluates this branch's formula regardless of whether its condition holds.
    pub fn formula(self, m: &IsoModuli, s: [f64; 3]) -> f64 {
        let (l, mu) = (m.lambda(), m.mu());
        let [s1, s2, s3] = s;
        let sum = s1 + s2 + s3;
        let c = (2.0 * mu + l) / (2.0 * (2.0 * mu + 3.0 * l));
        let hydro = l / (2.0 * mu + 3.0 * l) * sum * sum;
        match self {
            PorousBranch::NonnegBalanced => c * sum * sum,
            PorousBranch::NonnegDominant => (s1 + s2).powi(2) + s3 * s3 - hydro,
            PorousBranch::OneNegCase1 => {
                c * (s3 + s2 - (mu + 2.0 * l) / (mu + l) * s1).powi(2)
            }
            PorousBranch::OneNegCase2 => (s3 + s2).powi(2) + s1 * s1 - hydro,
            PorousBranch::OneNegCase3 => {
                s1 * s1 + s2 * s2 + s3 * s3 - 2.0 * mu / (mu + l) * s1 * s2 - hydro
            }
        }
    }

    /// Whether the branch condition holds, with ties widened by `tie`.
    fn applies(self, m: &IsoModuli, s: [f64; 3], tie: f64) -> bool {
        let [s1, s2, s3] = s;
        let h = -m.mu() / (m.mu() + m.lambda()) * s1;
        match self {
            PorousBranch::NonnegBalanced => s1 >= 0.0 && s3 <= s1 + s2 + tie,
            PorousBranch::NonnegDominant => s1 >= 0.0 && s3 >= s1 + s2 - tie,
            PorousBranch::OneNegCase1 => s1 < 0.0 && s3 + s2 >= h - tie && s3 - s2 <= h + tie,
            PorousBranch::OneNegCase2 => s1 < 0.0 && s3 + s2 <= h + tie,
            PorousBranch::OneNegCase3 => s1 < 0.0 && s3 - s2 >= h - tie,
        }
    }

    pub const ALL: [PorousBranch; 5] = [
        PorousBranch::NonnegBalanced,
        PorousBranch::NonnegDominant,
        PorousBranch::OneNegCase1,
        PorousBranch::OneNegCase2,
        PorousBranch::OneNegCase3,
    ];
}

impl fmt::Display for PorousBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Branch of the piecewise quadratic `g` used by the rigid bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RigidBranch {
    /// `η₃ ≥ (λ+2μ)/(2(λ+μ))·(η₁+η₃) ≥ η₁`.
    Middle,
    /// `η₁ > (λ+2μ)/(2(λ+μ))·(η₁+η₃)`.
    LowerEnd,
    /// `η₃ < (λ+2μ)/(2(λ+μ))·(η₁+η₃)`.
    UpperEnd,
}

impl RigidBranch {
    pub fn tag(self) -> &'static str {
        match self {
            RigidBranch::Middle => "middle",
            RigidBranch::LowerEnd => "lower-end",
            RigidBranch::UpperEnd => "upper-end",
        }
    }

    pub fn formula(self, m: &IsoModuli, eta: [f64; 3]) -> f64 {
        let (l, mu) = (m.lambda(), m.mu());
        let [e1, _, e3] = eta;
        match self {
            RigidBranch::Middle => {
                (e1 - e3).powi(2) / (4.0 * mu) + (e1 + e3).powi(2) / (4.0 * (l + mu))
            }
            RigidBranch::LowerEnd => e1 * e1 / (l + 2.0 * mu),
            RigidBranch::UpperEnd => e3 * e3 / (l + 2.0 * mu),
        }
    }

    fn applies(self, m: &IsoModuli, eta: [f64; 3], tie: f64) -> bool {
        let [e1, _, e3] = eta;
        let u = rigid_pivot(m, e1, e3);
        match self {
            RigidBranch::Middle => e3 >= u - tie && u >= e1 - tie,
            RigidBranch::LowerEnd => e1 >= u - tie,
            RigidBranch::UpperEnd => e3 <= u + tie,
        }
    }

    pub const ALL: [RigidBranch; 3] = [
        RigidBranch::Middle,
        RigidBranch::LowerEnd,
        RigidBranch::UpperEnd,
    ];
}

impl fmt::Display for RigidBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn rigid_pivot(m: &IsoModuli, e1: f64, e3: f64) -> f64 {
    (m.lambda() + 2.0 * m.mu()) / (2.0 * (m.lambda() + m.mu())) * (e1 + e3)
}

fn is_sorted(v: [f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite()) && v[0] <= v[1] && v[1] <= v[2]
}

/// Evaluates every branch whose condition holds, checks that tied branches
/// agree, and returns the first in declaration order.
fn dispatch<B: Copy>(
    candidates: impl Iterator<Item = B>,
    eval: impl Fn(B) -> f64,
    what: &str,
) -> Result<(f64, B)> {
    let mut first: Option<(f64, B)> = None;
    for b in candidates {
        let v = eval(b);
        match first {
            None => first = Some((v, b)),
            Some((v0, _)) => {
                let scale = v0.abs().max(v.abs()).max(f64::MIN_POSITIVE);
                if (v - v0).abs() > BRANCH_AGREEMENT * scale {
                    return Err(Error::ContractViolation(format!(
                        "{what}: tied branches disagree ({v0:e} vs {v:e})"
                    )));
                }
            }
        }
    }
    first.ok_or_else(|| Error::ContractViolation(format!("{what}: no branch applies")))
}

/// `g(C₁, σ)` for sorted eigenvalues `σ₁ ≤ σ₂ ≤ σ₃` with at most one negative.
pub fn g_porous(m: &IsoModuli, s: [f64; 3]) -> Result<(f64, PorousBranch)> {
    if !is_sorted(s) {
        return Err(Error::ContractViolation(format!(
            "eigenvalues must be finite and sorted ascending, got {s:?}"
        )));
    }
    if s[1] < 0.0 {
        return Err(Error::ContractViolation(format!(
            "at most one eigenvalue may be negative, got {s:?}"
        )));
    }
    let tie = BRANCH_TIE * s[0].abs().max(s[2].abs());
    dispatch(
        PorousBranch::ALL.into_iter().filter(|b| b.applies(m, s, tie)),
        |b| b.formula(m, s),
        "g_porous",
    )
}

/// `g(η)` of the rigid bound for sorted eigenvalues `η₁ ≤ η₂ ≤ η₃`.
pub fn g_rigid(m: &IsoModuli, eta: [f64; 3]) -> Result<(f64, RigidBranch)> {
    if !is_sorted(eta) {
        return Err(Error::ContractViolation(format!(
            "eigenvalues must be finite and sorted ascending, got {eta:?}"
        )));
    }
    let tie = BRANCH_TIE * eta[0].abs().max(eta[2].abs());
    dispatch(
        RigidBranch::ALL.into_iter().filter(|b| b.applies(m, eta, tie)),
        |b| b.formula(m, eta),
        "g_rigid",
    )
}

/// Replaces `σ` by `−σ` when it has two or more negative eigenvalues.
pub fn sign_normalize(s: &SymTensor2) -> (SymTensor2, bool) {
    let ev = eig_sym(s).values;
    if ev[1] < 0.0 {
        (-*s, true)
    } else {
        (*s, false)
    }
}

/// The optimal complementary energy of an elastic/void mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PorousBound {
    pub value: f64,
    pub branch: PorousBranch,
    /// Whether the stress was negated before evaluating `g`.
    pub flipped: bool,
    /// Sorted eigenvalues after sign normalization.
    pub eigenvalues: [f64; 3],
    /// `σ⁰ : C₁⁻¹ σ⁰`.
    pub phase_energy: f64,
    pub g: f64,
}

/// `W_f(σ⁰)`.
pub fn porous_bound(f: f64, m: &IsoModuli, s: &SymTensor2) -> Result<PorousBound> {
    check_fraction(f)?;
    check_tensor(s, "stress")?;
    let ev = eig_sym(s).values;
    let flipped = ev[1] < 0.0;
    let eigenvalues = if flipped {
        [-ev[2], -ev[1], -ev[0]]
    } else {
        ev
    };
    let (g, branch) = g_porous(m, eigenvalues)?;
    let phase_energy = m.complementary_energy(s);
    Ok(PorousBound {
        value: phase_energy + porous_prefactor(f) * g / (2.0 * m.mu()),
        branch,
        flipped,
        eigenvalues,
        phase_energy,
        g,
    })
}

/// The optimal elastic energy of an elastic/rigid mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidBound {
    pub value: f64,
    /// Maximizer of the inner problem, coaxial with `ε⁰`.
    pub eta: SymTensor2,
    pub eta_eigenvalues: [f64; 3],
    pub branch: RigidBranch,
    /// `ε⁰ : C₁ ε⁰`.
    pub phase_energy: f64,
    /// Ascent iterations used (zero when a stationary candidate was accepted).
    pub iterations: usize,
    /// Largest relative improvement found by probing around the maximizer.
    pub oracle_gap: f64,
}

/// Objective of the inner maximization on sorted coaxial triples.
fn rigid_objective(m: &IsoModuli, f: f64, e: [f64; 3], eta: [f64; 3]) -> Result<f64> {
    let (g, _) = g_rigid(m, eta)?;
    Ok(2.0 * (e[0] * eta[0] + e[1] * eta[1] + e[2] * eta[2]) - f * g)
}

/// Middle eigenvalue of `η` given the outer two. The objective is linear in
/// `η₂` with slope `2e₂`, so it sits on whichever end the sign of `e₂` favours.
fn complete_triple(e2: f64, lo: f64, hi: f64) -> [f64; 3] {
    if e2 > 0.0 {
        [lo, hi, hi]
    } else {
        [lo, lo, hi]
    }
}

/// `W̃_f(ε⁰)`.
///
/// The inner maximum over `η` is taken over tensors coaxial with `ε⁰` with
/// matched eigenvalue order, which loses nothing because `g` is spectral and
/// `ε⁰:η` is maximized by that alignment. On sorted triples the objective is
/// concave, piecewise quadratic and independent of `η₂` except through the
/// linear term, so the maximizer is one of the branch-wise stationary points;
/// each candidate is checked against its branch condition. A projected ascent
/// runs only if no candidate qualifies.
pub fn rigid_bound(f: f64, m: &IsoModuli, e0: &SymTensor2) -> Result<RigidBound> {
    check_fraction(f)?;
    check_tensor(e0, "strain")?;
    let eig = eig_sym(e0);
    let e = eig.values;
    let phase_energy = m.elastic_energy(e0);
    let (l, mu) = (m.lambda(), m.mu());
    let big = l + 2.0 * mu;
    let a = e[0] + e[1].min(0.0);
    let b = e[2] + e[1].max(0.0);
    let tie = BRANCH_TIE * e[0].abs().max(e[2].abs()).max(f64::MIN_POSITIVE);

    let mut candidates: Vec<[f64; 3]> = Vec::with_capacity(2);
    // Interior stationary point of the middle branch.
    let lo = (big * a + l * b) / f;
    let hi = (l * a + big * b) / f;
    let mid = complete_triple(e[1], lo, hi);
    if lo <= hi + tie && RigidBranch::Middle.applies(m, mid, tie / f) {
        candidates.push([mid[0], mid[1], mid[2].max(mid[0])]);
    }
    // Stationary point on the face η₁ = η₂ = η₃, which lies in an end branch.
    let s = big * (a + b) / f;
    candidates.push([s, s, s]);

    let mut best: Option<([f64; 3], f64)> = None;
    for c in candidates {
        let h = rigid_objective(m, f, e, c)?;
        if best.map_or(true, |(_, hb)| h > hb) {
            best = Some((c, h));
        }
    }
    let (mut eta, mut h_star) = best.expect("at least one candidate");
    let mut iterations = 0;
    let gap = probe_gap(m, f, e, eta, h_star)?;
    let scale = h_star.abs().max(phase_energy).max(f64::MIN_POSITIVE);
    if gap > 1e-10 * scale {
        let (eta2, h2, its) = projected_ascent(m, f, e, eta)?;
        eta = eta2;
        h_star = h2;
        iterations = its;
    }
    let oracle_gap = probe_gap(m, f, e, eta, h_star)? / scale;
    if oracle_gap > 1e-3 {
        return Err(Error::NonConvergence {
            what: "rigid-bound inner maximization".into(),
            best: phase_energy + (1.0 - f) * h_star,
        });
    }
    let (_, branch) = g_rigid(m, eta)?;
    let eta_t = eig.with_values(eta);
    // Recompute from the reported maximizer so the value and η* agree exactly.
    let g = g_rigid(m, eta)?.0;
    let value = phase_energy + (1.0 - f) * (2.0 * e0.dot(&eta_t) - f * g);
    Ok(RigidBound {
        value,
        eta: eta_t,
        eta_eigenvalues: eta,
        branch,
        phase_energy,
        iterations,
        oracle_gap,
    })
}

/// Largest increase of the inner objective over a small stencil around `eta`.
fn probe_gap(m: &IsoModuli, f: f64, e: [f64; 3], eta: [f64; 3], h: f64) -> Result<f64> {
    let scale = eta.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
    let mut gap = 0.0f64;
    for step in [1e-3, 1e-5] {
        let d = step * scale;
        for (d1, d3) in [(d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d), (d, d), (-d, -d)] {
            let lo = eta[0] + d1;
            let hi = eta[2] + d3;
            if lo > hi {
                continue;
            }
            let trial = complete_triple(e[1], lo, hi);
            gap = gap.max(rigid_objective(m, f, e, trial)? - h);
        }
    }
    Ok(gap)
}

/// Projected gradient ascent on `(η₁, η₃)` with `η₁ ≤ η₃`.
fn projected_ascent(
    m: &IsoModuli,
    f: f64,
    e: [f64; 3],
    start: [f64; 3],
) -> Result<([f64; 3], f64, usize)> {
    let a = e[0] + e[1].min(0.0);
    let b = e[2] + e[1].max(0.0);
    let (l, mu) = (m.lambda(), m.mu());
    let mut x = [start[0], start[2]];
    let eval = |x: [f64; 2]| rigid_objective(m, f, e, complete_triple(e[1], x[0], x[1]));
    let mut h = eval(x)?;
    let mut step = (l + 2.0 * mu).max(mu) / f;
    let project = |x: [f64; 2]| {
        if x[0] <= x[1] {
            x
        } else {
            let c = 0.5 * (x[0] + x[1]);
            [c, c]
        }
    };
    for it in 1..=10_000 {
        // Numerical gradient: g is C¹ so central differences are reliable.
        let hstep = 1e-7 * (x[0].abs() + x[1].abs()).max(1e-12);
        let mut grad = [0.0; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += hstep;
            xm[k] -= hstep;
            let fp = rigid_objective(m, f, e, complete_triple(e[1], xp[0].min(xp[1]), xp[1].max(xp[0])))?;
            let fm = rigid_objective(m, f, e, complete_triple(e[1], xm[0].min(xm[1]), xm[1].max(xm[0])))?;
            grad[k] = (fp - fm) / (2.0 * hstep);
        }
        let _ = (a, b);
        let mut accepted = false;
        while step > 1e-300 {
            let trial = project([x[0] + step * grad[0], x[1] + step * grad[1]]);
            let ht = eval(trial)?;
            if ht > h {
                let done = (ht - h) <= 1e-15 * ht.abs().max(1e-300);
                x = trial;
                h = ht;
                accepted = true;
                step *= 1.5;
                if done {
                    return Ok((complete_triple(e[1], x[0], x[1]), h, it));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok((complete_triple(e[1], x[0], x[1]), h, it));
        }
    }
    Err(Error::NonConvergence {
        what: "projected ascent".into(),
        best: h,
    })
}

/// Position of a pair relative to the bound hyperplane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Infeasible,
    Boundary,
    Interior,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Infeasible => "Infeasible",
            Classification::Boundary => "Boundary",
            Classification::Interior => "Interior",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub classification: Classification,
    /// `σ⁰:ε⁰ − W`.
    pub residual: f64,
    /// Absolute tolerance used (relative tolerance times `W`).
    pub tolerance: f64,
    /// The bound `W` the pair was tested against.
    pub bound: f64,
}

fn classify(work: f64, bound: f64, rel_tol: f64) -> Result<MembershipVerdict> {
    if !(rel_tol.is_finite() && rel_tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {rel_tol}")));
    }
    let residual = work - bound;
    let tolerance = rel_tol * bound.abs();
    let classification = if residual < -tolerance {
        Classification::Infeasible
    } else if residual <= tolerance {
        Classification::Boundary
    } else {
        Classification::Interior
    };
    Ok(MembershipVerdict {
        classification,
        residual,
        tolerance,
        bound,
    })
}

/// Classifies `(σ⁰, ε⁰)` against `W_f(σ⁰) ≤ σ⁰:ε⁰` for the elastic/void mixture.
pub fn membership_porous(
    f: f64,
    m: &IsoModuli,
    s0: &SymTensor2,
    e0: &SymTensor2,
    rel_tol: f64,
) -> Result<MembershipVerdict> {
    check_tensor(e0, "strain")?;
    if s0.norm() == 0.0 {
        return Err(invalid("membership needs a nonzero average stress"));
    }
    let w = porous_bound(f, m, s0)?.value;
    classify(s0.dot(e0), w, rel_tol)
}

/// Classifies `(σ⁰, ε⁰)` against `W̃_f(ε⁰) ≤ σ⁰:ε⁰` for the elastic/rigid mixture.
pub fn membership_rigid(
    f: f64,
    m: &IsoModuli,
    s0: &SymTensor2,
    e0: &SymTensor2,
    rel_tol: f64,
) -> Result<MembershipVerdict> {
    check_tensor(s0, "stress")?;
    if e0.norm() == 0.0 {
        return Err(invalid("membership needs a nonzero average strain"));
    }
    let w = rigid_bound(f, m, e0)?.value;
    classify(s0.dot(e0), w, rel_tol)
}

/// Strain on the bound hyperplane for `σ⁰`:
/// `ε⁰ = (W_f/t)·B₀ + Σ ε⊥ᵢ Bᵢ` in the basis completed from `σ⁰`.
pub fn boundary_strain(
    f: f64,
    m: &IsoModuli,
    s0: &SymTensor2,
    e_perp: &[f64; 5],
) -> Result<SymTensor2> {
    let basis = complete_basis(s0)?;
    let w = porous_bound(f, m, s0)?.value;
    Ok(on_hyperplane(&basis.members, basis.t, w, e_perp))
}

/// Stress on the bound hyperplane for `ε⁰`:
/// `σ⁰ = (W̃_f/t)·B₀ + Σ σ⊥ᵢ Bᵢ` in the basis completed from `ε⁰`.
pub fn boundary_stress(
    f: f64,
    m: &IsoModuli,
    e0: &SymTensor2,
    s_perp: &[f64; 5],
) -> Result<SymTensor2> {
    let basis = complete_basis(e0)?;
    let w = rigid_bound(f, m, e0)?.value;
    Ok(on_hyperplane(&basis.members, basis.t, w, s_perp))
}

fn on_hyperplane(b: &[SymTensor2; 6], t: f64, w: f64, perp: &[f64; 5]) -> SymTensor2 {
    let mut out = b[0] * (w / t);
    for (bi, c) in b[1..].iter().zip(perp) {
        out += *bi * *c;
    }
    out
}
