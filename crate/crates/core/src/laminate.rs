//! Rank-one lamination, scale-separated sequential laminates, and the search
//! over lamination parameters that drives laminate energies down to the
//! closed-form bounds.
//!
//! Void and rigid phases are modelled as `δ·C₁` with `δ` small or large so
//! every solve stays positive definite; limits are taken with [`delta_sweep`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::bounds::check_fraction;
use crate::error::{invalid, Error, Result};
use crate::tensor::{eig_sym, orthonormal_complement, ElasticTensor, IsoModuli, SymTensor2, TensorKind};

/// Interface systems with a condition number above this are reported as singular.
const INTERFACE_CONDITION_LIMIT: f64 = 1e14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

/// A sequential laminate. Children of a branch are homogenized first, so the
/// length scale grows toward the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LaminateTree {
    Leaf(Phase),
    Branch {
        normal: [f64; 3],
        /// Volume fraction of `a` within this branch.
        fraction: f64,
        a: Box<LaminateTree>,
        b: Box<LaminateTree>,
    },
}

impl LaminateTree {
    pub fn branch(normal: Vector3<f64>, fraction: f64, a: LaminateTree, b: LaminateTree) -> Self {
        LaminateTree::Branch {
            normal: normal.into(),
            fraction,
            a: Box::new(a),
            b: Box::new(b),
        }
    }

    /// Phase 2 core laminated with phase 1 once per level, innermost level first:
    /// `levels[0]` is the finest scale. Each entry is `(normal, phase-1 fraction)`.
    pub fn coated(levels: &[(Vector3<f64>, f64)]) -> Self {
        levels.iter().fold(LaminateTree::Leaf(Phase::Two), |core, (n, a)| {
            LaminateTree::branch(*n, *a, LaminateTree::Leaf(Phase::One), core)
        })
    }

    /// Number of lamination levels on the deepest path.
    pub fn rank(&self) -> usize {
        match self {
            LaminateTree::Leaf(_) => 0,
            LaminateTree::Branch { a, b, .. } => 1 + a.rank().max(b.rank()),
        }
    }

    /// Aggregate volume fraction of phase 1.
    pub fn phase_one_fraction(&self) -> f64 {
        match self {
            LaminateTree::Leaf(Phase::One) => 1.0,
            LaminateTree::Leaf(Phase::Two) => 0.0,
            LaminateTree::Branch { fraction, a, b, .. } => {
                fraction * a.phase_one_fraction() + (1.0 - fraction) * b.phase_one_fraction()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LaminateTree::Leaf(_) => Ok(()),
            LaminateTree::Branch {
                normal,
                fraction,
                a,
                b,
            } => {
                let n = Vector3::from(*normal).norm();
                if !((n - 1.0).abs() <= 1e-12) {
                    return Err(invalid(format!("laminate normal has norm {n}, expected 1")));
                }
                if !(fraction.is_finite() && *fraction > 0.0 && *fraction < 1.0) {
                    return Err(invalid(format!(
                        "laminate fraction must lie in (0, 1), got {fraction}"
                    )));
                }
                a.validate()?;
                b.validate()
            }
        }
    }

    /// Rotates every normal by `q`, matching loads transformed as `QᵀXQ`.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Self {
        match self {
            LaminateTree::Leaf(p) => LaminateTree::Leaf(*p),
            LaminateTree::Branch {
                normal,
                fraction,
                a,
                b,
            } => LaminateTree::Branch {
                normal: (q.transpose() * Vector3::from(*normal)).into(),
                fraction: *fraction,
                a: Box::new(a.rotated(q)),
                b: Box::new(b.rotated(q)),
            },
        }
    }

    /// Canonical text form: `1`, `2`, or `lam(nx,ny,nz;fa;A;B)` with numbers in
    /// shortest round-trip notation.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LaminateTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaminateTree::Leaf(Phase::One) => f.write_str("1"),
            LaminateTree::Leaf(Phase::Two) => f.write_str("2"),
            LaminateTree::Branch {
                normal,
                fraction,
                a,
                b,
            } => write!(
                f,
                "lam({:?},{:?},{:?};{:?};{a};{b})",
                normal[0], normal[1], normal[2], fraction
            ),
        }
    }
}

impl FromStr for LaminateTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (tree, rest) = parse_tree(&compact)?;
        if !rest.is_empty() {
            return Err(invalid(format!("trailing text after laminate tree: {rest:?}")));
        }
        Ok(tree)
    }
}

fn parse_tree(s: &str) -> Result<(LaminateTree, &str)> {
    if let Some(rest) = s.strip_prefix('1') {
        return Ok((LaminateTree::Leaf(Phase::One), rest));
    }
    if let Some(rest) = s.strip_prefix('2') {
        return Ok((LaminateTree::Leaf(Phase::Two), rest));
    }
    let rest = s
        .strip_prefix("lam(")
        .ok_or_else(|| invalid(format!("expected `1`, `2` or `lam(` at {s:?}")))?;
    let (head, rest) = rest
        .split_once(';')
        .ok_or_else(|| invalid("laminate normal must be followed by `;`"))?;
    let comps: Vec<f64> = head
        .split(',')
        .map(|x| x.parse::<f64>().map_err(|e| invalid(format!("bad number {x:?}: {e}"))))
        .collect::<Result<_>>()?;
    let normal: [f64; 3] = comps
        .try_into()
        .map_err(|_| invalid("laminate normal needs three components"))?;
    let (frac, rest) = rest
        .split_once(';')
        .ok_or_else(|| invalid("laminate fraction must be followed by `;`"))?;
    let fraction = frac
        .parse::<f64>()
        .map_err(|e| invalid(format!("bad fraction {frac:?}: {e}")))?;
    let (a, rest) = parse_tree(rest)?;
    let rest = rest
        .strip_prefix(';')
        .ok_or_else(|| invalid("expected `;` between laminate children"))?;
    let (b, rest) = parse_tree(rest)?;
    let rest = rest
        .strip_prefix(')')
        .ok_or_else(|| invalid("expected `)` closing laminate"))?;
    Ok((
        LaminateTree::Branch {
            normal,
            fraction,
            a: Box::new(a),
            b: Box::new(b),
        },
        rest,
    ))
}

/// Orthogonal 6×6 change of basis adapted to the interface normal `n`.
///
/// Columns 0..3 span the tangential strains (`u⊗u`, `v⊗v`, `u⊙v`), which are
/// continuous across the interface; columns 3..6 span `sym(c⊗n)`, the
/// subspace where strain may jump and where stress must be continuous.
fn interface_frame(n: &Vector3<f64>) -> Matrix6<f64> {
    let (u, v) = orthonormal_complement(n);
    let r2 = std::f64::consts::SQRT_2;
    let cols = [
        SymTensor2::sym_dyad(&u, &u),
        SymTensor2::sym_dyad(&v, &v),
        SymTensor2::sym_dyad(&u, &v) * r2,
        SymTensor2::sym_dyad(n, n),
        SymTensor2::sym_dyad(n, &u) * r2,
        SymTensor2::sym_dyad(n, &v) * r2,
    ];
    let mut p = Matrix6::zeros();
    for (k, c) in cols.iter().enumerate() {
        p.set_column(k, c.as_vector());
    }
    p
}

type M3 = Matrix3<f64>;

/// Blocks of a tensor in the interface frame.
struct Split {
    tt: M3,
    tn: M3,
    nn_inv: M3,
}

fn split(c: &Matrix6<f64>, p: &Matrix6<f64>) -> Result<(Split, f64)> {
    let m = p.transpose() * c * p;
    let tt: M3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let tn: M3 = m.fixed_view::<3, 3>(0, 3).into_owned();
    let nn: M3 = m.fixed_view::<3, 3>(3, 3).into_owned();
    let nn = (nn + nn.transpose()) * 0.5;
    let ev = nn.symmetric_eigenvalues();
    let cond = if ev.min() > 0.0 { ev.max() / ev.min() } else { f64::INFINITY };
    let nn_inv = nn.cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    Ok((Split { tt, tn, nn_inv }, cond))
}

/// Strain and stress in each layer of a rank-one laminate under one average strain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFields {
    pub strain_a: SymTensor2,
    pub strain_b: SymTensor2,
    pub stress_a: SymTensor2,
    pub stress_b: SymTensor2,
    /// Jump vector: `ε_a − ε_b = sym(jump ⊗ n)`.
    pub jump: [f64; 3],
    /// `fa·ε_a:σ_a + fb·ε_b:σ_b`.
    pub layer_energy: f64,
    /// `ε̄ : C* ε̄`.
    pub effective_energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaminationResult {
    pub effective: ElasticTensor,
    /// Largest condition number among the normal blocks that were inverted.
    pub interface_condition: f64,
    ca: Matrix6<f64>,
    cb: Matrix6<f64>,
    normal: Vector3<f64>,
    fa: f64,
}

impl LaminationResult {
    /// Layer fields for average strain `eps`.
    pub fn fields(&self, eps: &SymTensor2) -> LayerFields {
        let fb = 1.0 - self.fa;
        let p = interface_frame(&self.normal);
        // The splits succeeded when the result was built.
        let (sa, _) = split(&self.ca, &p).expect("validated");
        let (sb, _) = split(&self.cb, &p).expect("validated");
        let e = p.transpose() * eps.as_vector();
        let et = e.fixed_rows::<3>(0).into_owned();
        let en = e.fixed_rows::<3>(3).into_owned();
        let h_inv = sa.nn_inv * self.fa + sb.nn_inv * fb;
        let coupling = sa.nn_inv * sa.tn.transpose() * self.fa + sb.nn_inv * sb.tn.transpose() * fb;
        let sn = h_inv.cholesky().expect("validated").solve(&(en + coupling * et));
        let layer = |s: &Split| {
            let n_strain = s.nn_inv * (sn - s.tn.transpose() * et);
            let mut v = Vector6::zeros();
            v.fixed_rows_mut::<3>(0).copy_from(&et);
            v.fixed_rows_mut::<3>(3).copy_from(&n_strain);
            p * v
        };
        let ea = layer(&sa);
        let eb = layer(&sb);
        let sa_v = self.ca * ea;
        let sb_v = self.cb * eb;
        // Δε = sym(c⊗n): the n⊗n, n⊙u, n⊙v coordinates give c in the (n, u, v) frame.
        let d = p.transpose() * (ea - eb);
        let (u, v) = orthonormal_complement(&self.normal);
        let r2 = std::f64::consts::SQRT_2;
        let c = self.normal * d[3] + u * (d[4] * r2) + v * (d[5] * r2);
        LayerFields {
            strain_a: SymTensor2::from_vector(ea),
            strain_b: SymTensor2::from_vector(eb),
            stress_a: SymTensor2::from_vector(sa_v),
            stress_b: SymTensor2::from_vector(sb_v),
            jump: c.into(),
            layer_energy: self.fa * ea.dot(&sa_v) + fb * eb.dot(&sb_v),
            effective_energy: self.effective.energy(eps),
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }
}

/// Rank-one laminate of `ca` (fraction `fa`) and `cb` with interface normal `n`.
///
/// Written in the variables that are continuous across the interface, the
/// tangential strain `ε_t` and the normal stress `σ_n`: with
/// `ε_n = C_nn⁻¹(σ_n − C_nt ε_t)` in each layer, averaging gives
/// `C*_nn = ⟨C_nn⁻¹⟩⁻¹`, `C*_nt = C*_nn⟨C_nn⁻¹C_nt⟩` and
/// `C*_tt = ⟨C_tt − C_tn C_nn⁻¹ C_nt⟩ + ⟨C_tn C_nn⁻¹⟩ C*_nn ⟨C_nn⁻¹C_nt⟩`.
/// Every average is of same-signed terms, so high phase contrast costs no
/// accuracy.
pub fn laminate_pair(
    ca: &ElasticTensor,
    cb: &ElasticTensor,
    n: &Vector3<f64>,
    fa: f64,
) -> Result<LaminationResult> {
    if !(fa.is_finite() && fa > 0.0 && fa < 1.0) {
        return Err(invalid(format!("layer fraction must lie in (0, 1), got {fa}")));
    }
    let norm = n.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("laminate normal has norm {norm}, expected 1")));
    }
    let fb = 1.0 - fa;
    let p = interface_frame(n);
    let (sa, cond_a) = split(ca.matrix(), &p)?;
    let (sb, cond_b) = split(cb.matrix(), &p)?;
    let h_inv = sa.nn_inv * fa + sb.nn_inv * fb;
    let ev = h_inv.symmetric_eigenvalues();
    let cond_h = if ev.min() > 0.0 { ev.max() / ev.min() } else { f64::INFINITY };
    let interface_condition = cond_a.max(cond_b).max(cond_h);
    if !(interface_condition <= INTERFACE_CONDITION_LIMIT) {
        return Err(invalid(format!(
            "singular interface system (condition {interface_condition:e})"
        )));
    }
    let h = h_inv.cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    let h = (h + h.transpose()) * 0.5;
    // G = ⟨C_nn⁻¹ C_nt⟩, with C_nt = C_tnᵀ.
    let g = sa.nn_inv * sa.tn.transpose() * fa + sb.nn_inv * sb.tn.transpose() * fb;
    let schur = |s: &Split| s.tt - s.tn * s.nn_inv * s.tn.transpose();
    let tt = schur(&sa) * fa + schur(&sb) * fb + g.transpose() * h * g;
    let nt = h * g;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&((tt + tt.transpose()) * 0.5));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&nt);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&nt.transpose());
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&h);
    let eff = p * m * p.transpose();
    Ok(LaminationResult {
        effective: ElasticTensor::from_matrix((eff + eff.transpose()) * 0.5, TensorKind::Stiffness)?,
        interface_condition,
        ca: *ca.matrix(),
        cb: *cb.matrix(),
        normal: *n,
        fa,
    })
}

/// How phase 2 is interpreted; only the admissible range of `δ` differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Phase 2 is `δ·C₁` with `δ ≤ 1` standing in for void.
    Void,
    /// Phase 2 is `δ·C₁` with `δ ≥ 1` standing in for a rigid phase.
    Rigid,
}

impl Mode {
    fn check_delta(self, delta: f64) -> Result<()> {
        let ok = delta.is_finite()
            && delta > 0.0
            && match self {
                Mode::Void => delta <= 1.0,
                Mode::Rigid => delta >= 1.0,
            };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("delta {delta} is not admissible for {self:?} mode")))
        }
    }
}

/// Effective tensor of a scale-separated laminate with phase 1 `C₁` and phase 2 `δ·C₁`.
pub fn sequential_laminate(
    tree: &LaminateTree,
    m: &IsoModuli,
    delta: f64,
    mode: Mode,
) -> Result<ElasticTensor> {
    mode.check_delta(delta)?;
    tree.validate()?;
    let c1 = m.stiffness();
    let c2 = c1.scaled(delta);
    homogenize(tree, &c1, &c2)
}

fn homogenize(tree: &LaminateTree, c1: &ElasticTensor, c2: &ElasticTensor) -> Result<ElasticTensor> {
    match tree {
        LaminateTree::Leaf(Phase::One) => Ok(*c1),
        LaminateTree::Leaf(Phase::Two) => Ok(*c2),
        LaminateTree::Branch {
            normal,
            fraction,
            a,
            b,
        } => {
            let ca = homogenize(a, c1, c2)?;
            let cb = homogenize(b, c1, c2)?;
            Ok(laminate_pair(&ca, &cb, &Vector3::from(*normal), *fraction)?.effective)
        }
    }
}

/// `σ : C⁻¹ σ`, or `None` when `C` is not numerically positive definite.
fn complementary_energy(c: &ElasticTensor, s: &SymTensor2) -> Option<f64> {
    let chol = c.matrix().cholesky()?;
    let x = chol.solve(s.as_vector());
    let e = s.as_vector().dot(&x);
    (e.is_finite() && e >= 0.0).then_some(e)
}

/// Which quadratic form the optimizer minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyKind {
    /// `σ⁰ : (C*)⁻¹ σ⁰`.
    Complementary,
    /// `ε⁰ : C* ε⁰`.
    Elastic,
}

/// Laminate energy of `tree` under the given load.
pub fn laminate_energy(
    tree: &LaminateTree,
    m: &IsoModuli,
    delta: f64,
    mode: Mode,
    kind: EnergyKind,
    load: &SymTensor2,
) -> Result<f64> {
    let c = sequential_laminate(tree, m, delta, mode)?;
    match kind {
        EnergyKind::Complementary => {
            complementary_energy(&c, load).ok_or(Error::NotPositiveDefinite)
        }
        EnergyKind::Elastic => Ok(c.energy(load)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Number of lamination levels (1 to 3).
    pub rank: usize,
    /// Total energy evaluations across all starts.
    pub budget: usize,
    /// Quasi-random starts in addition to the principal-frame starts.
    pub extra_starts: usize,
    /// Pattern search stops once every step is below this.
    pub step_tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            rank: 3,
            budget: 60_000,
            extra_starts: 6,
            step_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub tree: LaminateTree,
    pub energy: f64,
    /// False if the budget ran out before the best start's search converged.
    pub converged: bool,
    pub evaluations: usize,
}

/// Parameters: a raw (unnormalized) normal per level followed by one softmax
/// weight per level. Level `i` gets phase-1 fraction `aᵢ` with
/// `1 − aᵢ = (1 − f)^{uᵢ}` and `u = softmax(w)`, so the product of the
/// phase-2 fractions is always exactly `1 − f`.
fn decode(x: &[f64], rank: usize, f: f64) -> Option<LaminateTree> {
    let w = &x[3 * rank..];
    let wmax = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = w.iter().map(|v| (v - wmax).exp()).collect();
    let total: f64 = ex.iter().sum();
    let mut levels = Vec::with_capacity(rank);
    for i in 0..rank {
        let v = Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        let nv = v.norm();
        if !(nv > 1e-12) {
            return None;
        }
        let u = if rank == 1 { 1.0 } else { ex[i] / total };
        let a = 1.0 - (1.0 - f).powf(u);
        if !(a > 0.0 && a < 1.0) {
            return None;
        }
        levels.push((v / nv, a));
    }
    Some(LaminateTree::coated(&levels))
}

/// Additive-recurrence (Weyl) sequence in `[0, 1)^d`.
fn weyl(k: usize, d: usize) -> Vec<f64> {
    // Generalized golden ratio for dimension d.
    let mut phi = 2.0f64;
    for _ in 0..50 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (0..d)
        .map(|j| {
            let alpha = phi.powi(-(j as i32 + 1));
            (0.5 + alpha * (k + 1) as f64).fract()
        })
        .collect()
}

fn sphere_point(u: f64, v: f64) -> Vector3<f64> {
    let z = 2.0 * u - 1.0;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * v;
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

fn permutations3() -> [[usize; 3]; 6] {
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
}

fn starts(load: &SymTensor2, rank: usize, extra: usize) -> Vec<Vec<f64>> {
    let frame = eig_sym(load).vectors;
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for p in permutations3() {
        let key: Vec<usize> = p[..rank].to_vec();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let mut x = Vec::with_capacity(4 * rank);
        for &axis in &p[..rank] {
            x.extend(frame.column(axis).iter());
        }
        x.extend(std::iter::repeat(0.0).take(rank));
        out.push(x);
    }
    for k in 0..extra {
        let q = weyl(k, 3 * rank);
        let mut x = Vec::with_capacity(4 * rank);
        for i in 0..rank {
            x.extend(sphere_point(q[3 * i], q[3 * i + 1]).iter());
        }
        for i in 0..rank {
            x.push(2.0 * q[3 * i + 2] - 1.0);
        }
        out.push(x);
    }
    out
}

/// Coordinate pattern search from `x0`. Returns the best point, its value,
/// evaluations used and whether the step tolerance was reached.
fn pattern_search(
    obj: &mut impl FnMut(&[f64]) -> f64,
    x0: Vec<f64>,
    steps0: Vec<f64>,
    budget: usize,
    tol: f64,
) -> (Vec<f64>, f64, usize, bool) {
    let mut x = x0;
    let mut fx = obj(&x);
    let mut evals = 1;
    let mut steps = steps0;
    loop {
        if steps.iter().all(|s| *s < tol) {
            return (x, fx, evals, true);
        }
        let mut improved = false;
        for i in 0..x.len() {
            if steps[i] < tol {
                continue;
            }
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    return (x, fx, evals, false);
                }
                let mut y = x.clone();
                y[i] += sign * steps[i];
                let fy = obj(&y);
                evals += 1;
                if fy < fx {
                    // Keep moving while it pays.
                    x = y;
                    fx = fy;
                    improved = true;
                    steps[i] *= 2.0;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
}

fn optimize(
    f: f64,
    m: &IsoModuli,
    delta: f64,
    mode: Mode,
    kind: EnergyKind,
    load: &SymTensor2,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    check_fraction(f)?;
    mode.check_delta(delta)?;
    if !(1..=3).contains(&opts.rank) {
        return Err(invalid(format!("laminate rank must be 1, 2 or 3, got {}", opts.rank)));
    }
    if !load.is_finite() {
        return Err(invalid("load has non-finite components"));
    }
    let c1 = m.stiffness();
    if f == 1.0 {
        let energy = match kind {
            EnergyKind::Complementary => m.complementary_energy(load),
            EnergyKind::Elastic => c1.energy(load),
        };
        return Ok(OptimizeResult {
            tree: LaminateTree::Leaf(Phase::One),
            energy,
            converged: true,
            evaluations: 0,
        });
    }
    let c2 = c1.scaled(delta);
    let rank = opts.rank;
    let mut obj = |x: &[f64]| -> f64 {
        let Some(tree) = decode(x, rank, f) else {
            return f64::INFINITY;
        };
        let Ok(c) = homogenize(&tree, &c1, &c2) else {
            return f64::INFINITY;
        };
        match kind {
            EnergyKind::Complementary => complementary_energy(&c, load).unwrap_or(f64::INFINITY),
            EnergyKind::Elastic => c.energy(load),
        }
    };
    let starts = starts(load, rank, opts.extra_starts);
    let share = (opts.budget / starts.len()).max(1);
    let mut steps0 = vec![0.25; 3 * rank];
    steps0.extend(std::iter::repeat(if rank == 1 { 0.0 } else { 0.5 }).take(rank));
    let mut best: Option<(LaminateTree, f64, bool)> = None;
    let mut evaluations = 0;
    for x0 in starts {
        let (x, fx, used, conv) = pattern_search(&mut obj, x0, steps0.clone(), share, opts.step_tol);
        evaluations += used;
        let Some(tree) = decode(&x, rank, f) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((t, e, _)) => fx < *e || (fx == *e && tree.to_text() < t.to_text()),
        };
        if better {
            best = Some((tree, fx, conv));
        }
    }
    let (tree, energy, converged) = best
        .filter(|b| b.1.is_finite())
        .ok_or_else(|| Error::NonConvergence {
            what: "laminate optimization".into(),
            best: f64::INFINITY,
        })?;
    Ok(OptimizeResult {
        tree,
        energy,
        converged,
        evaluations,
    })
}

/// Minimizes `σ⁰:(C*)⁻¹σ⁰` over coated laminates of rank `opts.rank` with
/// phase-1 fraction `f` and phase 2 `δ·C₁`.
pub fn optimize_complementary(
    f: f64,
    m: &IsoModuli,
    delta: f64,
    s0: &SymTensor2,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    optimize(f, m, delta, Mode::Void, EnergyKind::Complementary, s0, opts)
}

/// Minimizes `ε⁰:C*ε⁰` over coated laminates with a stiff phase 2 `δ·C₁`.
pub fn optimize_elastic(
    f: f64,
    m: &IsoModuli,
    delta: f64,
    e0: &SymTensor2,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    optimize(f, m, delta, Mode::Rigid, EnergyKind::Elastic, e0, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    /// `(δ, energy)` in ladder order.
    pub rows: Vec<(f64, f64)>,
    /// Whether the energies move in the direction the quadratic form requires.
    pub monotone: bool,
    /// Linear extrapolation of the last two rows to the void/rigid limit.
    pub extrapolated: f64,
}

/// Tabulates `energy(δ)` along `ladder`, which must be sorted toward the
/// limit (decreasing for void, increasing for rigid).
///
/// Complementary energy can only grow as `δ` falls and elastic energy can
/// only grow with `δ`. The limit is extrapolated linearly in `δ` (void) or
/// `1/δ` (rigid) from the last two rows.
pub fn delta_sweep(
    ladder: &[f64],
    mode: Mode,
    mut energy: impl FnMut(f64) -> Result<f64>,
) -> Result<DeltaSweep> {
    if ladder.is_empty() {
        return Err(invalid("delta ladder is empty"));
    }
    for d in ladder {
        mode.check_delta(*d)?;
    }
    let toward_limit = |a: f64, b: f64| match mode {
        Mode::Void => b < a,
        Mode::Rigid => b > a,
    };
    if !ladder.windows(2).all(|w| toward_limit(w[0], w[1])) {
        return Err(invalid(format!("delta ladder must be strictly sorted toward the {mode:?} limit")));
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for &d in ladder {
        rows.push((d, energy(d)?));
    }
    let monotone = rows.windows(2).all(|w| {
        let slack = 1e-12 * w[0].1.abs().max(w[1].1.abs());
        w[1].1 >= w[0].1 - slack
    });
    let extrapolated = if rows.len() < 2 {
        rows[0].1
    } else {
        let (d0, e0) = rows[rows.len() - 2];
        let (d1, e1) = rows[rows.len() - 1];
        let (h0, h1) = match mode {
            Mode::Void => (d0, d1),
            Mode::Rigid => (1.0 / d0, 1.0 / d1),
        };
        (h0 * e1 - h1 * e0) / (h0 - h1)
    };
    Ok(DeltaSweep {
        rows,
        monotone,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> IsoModuli {
        IsoModuli::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn homogeneous_laminate_is_identity_operation() {
        let c = unit().stiffness();
        let n = Vector3::new(1.0, 2.0, 2.0) / 3.0;
        let r = laminate_pair(&c, &c, &n, 0.3).unwrap();
        assert!((r.effective.matrix() - c.matrix()).amax() < 1e-14);
    }

    #[test]
    fn vanishing_second_phase() {
        let ca = unit().stiffness();
        let cb = ca.scaled(0.5);
        let n = Vector3::z();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let r = laminate_pair(&ca, &cb, &n, 1.0 - eps).unwrap();
            let d = (r.effective.matrix() - ca.matrix()).amax();
            assert!(d < 20.0 * eps);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = unit().stiffness();
        assert!(laminate_pair(&c, &c, &Vector3::new(1.0, 1.0, 0.0), 0.5).is_err());
        assert!(laminate_pair(&c, &c, &Vector3::x(), 1.0).is_err());
        assert!(laminate_pair(&c, &c, &Vector3::x(), 0.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = LaminateTree::coated(&[
            (Vector3::x(), 0.25),
            (Vector3::new(0.0, 0.6, 0.8), 0.5),
        ]);
        let s = t.to_text();
        assert_eq!(s, "lam(0.0,0.6,0.8;0.5;1;lam(1.0,0.0,0.0;0.25;1;2))");
        assert_eq!(s.parse::<LaminateTree>().unwrap(), t);
        assert!("lam(1,0,0;0.5;1;2".parse::<LaminateTree>().is_err());
        assert!("lam(1,0;0.5;1;2)".parse::<LaminateTree>().is_err());
        assert!("3".parse::<LaminateTree>().is_err());
    }

    #[test]
    fn phase_fraction_of_coated_tree() {
        let t = LaminateTree::coated(&[
            (Vector3::x(), 0.2),
            (Vector3::y(), 0.4),
            (Vector3::z(), 0.7),
        ]);
        let expected = 1.0 - 0.8 * 0.6 * 0.3;
        assert!((t.phase_one_fraction() - expected).abs() < 1e-15);
        assert_eq!(t.rank(), 3);
    }

    #[test]
    fn decoded_fraction_is_exact() {
        let x = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.3, 0.3, 0.2, -1.0, 0.7];
        let t = decode(&x, 3, 0.37).unwrap();
        assert!((t.phase_one_fraction() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn delta_sweep_validates_ladder() {
        let e = |_d: f64| Ok(1.0);
        assert!(delta_sweep(&[1e-2, 1e-1], Mode::Void, e).is_err());
        assert!(delta_sweep(&[], Mode::Void, e).is_err());
        assert!(delta_sweep(&[2.0], Mode::Void, e).is_err());
        let s = delta_sweep(&[1.0], Mode::Void, e).unwrap();
        assert_eq!(s.extrapolated, 1.0);
    }

    #[test]
    fn f_one_is_the_pure_phase() {
        let m = unit();
        let s = SymTensor2::diag(1.0, 0.0, -2.0);
        let r = optimize_complementary(1.0, &m, 1e-6, &s, &OptimizeOptions::default()).unwrap();
        assert_eq!(r.tree, LaminateTree::Leaf(Phase::One));
        assert_eq!(r.energy, m.complementary_energy(&s));
    }
}
