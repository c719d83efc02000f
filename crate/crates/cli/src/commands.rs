//! Subcommand implementations. Each command parses its keys into a job
//! (which is all `check_inputs` does) and then runs it.

use std::path::PathBuf;

use gclosure::bounds::{
    boundary_strain, boundary_stress, membership_porous, membership_rigid, porous_bound, rigid_bound,
    MembershipVerdict, PorousBound, RigidBound, DEFAULT_BOUNDARY_TOL,
};
use gclosure::laminate::{
    delta_sweep, optimize_complementary, optimize_elastic, Mode, OptimizeOptions, OptimizeResult,
};
use gclosure::tensor::{IsoModuli, SymTensor2};
use gclosure::thermal::shield::{shield_solve, ShieldProblem, ShieldSolution, SolveOptions};
use gclosure::thermal::{
    attaining_laminate, insulating_bound, min_work, pair_membership, wiener_means, AttainingLaminate,
    CondPairBounds, SphereVerdict, DEFAULT_SPHERE_TOL,
};
use gclosure::verify::{converge, synth_family, ConvergenceReport, Setting as VerifySetting, SynthFamily};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::params::{need, perp, tensor_key, Expect, Params, Setting};
use crate::report::Report;
use crate::{Failure, Kind};

pub struct Outcome {
    pub result: Value,
    /// Extra artifacts (CSV tables) to write after the report.
    pub files: Vec<(PathBuf, String)>,
    /// Set when the report is still worth writing but the exit status is not 0.
    pub status: Option<Failure>,
}

fn outcome<T: Serialize>(r: &T) -> Outcome {
    Outcome {
        result: serde_json::to_value(r).expect("result serializes"),
        files: Vec::new(),
        status: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorOut {
    pub mandel: [f64; 6],
    pub matrix: [[f64; 3]; 3],
}

impl From<SymTensor2> for TensorOut {
    fn from(t: SymTensor2) -> Self {
        let m = t.to_matrix();
        TensorOut {
            mandel: t.mandel(),
            matrix: [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipResult {
    pub setting: Setting,
    /// `σ⁰:ε⁰`.
    pub work: f64,
    pub verdict: MembershipVerdict,
    pub expect: Option<Expect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryResult {
    pub setting: Setting,
    /// Strain for the porous setting, stress for the rigid one.
    pub tensor: TensorOut,
    pub bound: f64,
    pub work: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaminateResult {
    pub setting: Setting,
    pub delta: f64,
    /// Canonical text form of the tree: `1`, `2` or `lam(nx,ny,nz;fa;A;B)`.
    pub tree: String,
    pub optimum: OptimizeResult,
    pub bound: f64,
    /// `(energy − bound)/bound`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub delta: f64,
    pub energy: f64,
    pub gap: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub tree: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResult {
    pub setting: Setting,
    pub bound: f64,
    pub rows: Vec<SweepRow>,
    pub monotone: bool,
    pub extrapolated: f64,
    pub extrapolated_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyResult {
    pub setting: Setting,
    pub load: TensorOut,
    pub response: TensorOut,
    pub family: SynthFamily,
    pub report: ConvergenceReport,
    pub threshold: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalBoundsResult {
    pub bounds: CondPairBounds,
    pub verdict: Option<SphereVerdict>,
    /// Least `q⁰·e⁰` over the sphere for the given current.
    pub min_work: Option<f64>,
    /// `|q⁰|²/(f k₁)`, reported when phase 2 is insulating.
    pub insulating_bound: Option<f64>,
    pub expect: Option<Expect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalLaminateResult {
    pub bounds: CondPairBounds,
    pub verdict: SphereVerdict,
    pub laminate: AttainingLaminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureResult {
    pub problem: ShieldProblem,
    pub resistance: f64,
    pub lambda: f64,
    pub inlet_drop: Option<f64>,
    pub temperature_residual: Option<f64>,
    /// Nodes whose streamline stalls in the dead zone (no temperature).
    pub stalled_nodes: usize,
    /// Node temperatures, index `j(n1+1)+i`; `null` where stalled.
    pub temperature: Vec<Option<f64>>,
}

struct Mech {
    setting: Setting,
    f: f64,
    m: IsoModuli,
}

fn fraction(p: &Params) -> Result<f64, Failure> {
    let f = need(&p.f, "f")?;
    if f.is_finite() && f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(Failure::Input(format!("`f` must lie in (0, 1], got {f}")))
    }
}

fn mech(p: &Params) -> Result<Mech, Failure> {
    let m = IsoModuli::new(need(&p.lambda, "lambda")?, need(&p.mu, "mu")?)?;
    Ok(Mech {
        setting: p.setting.unwrap_or(Setting::Porous),
        f: fraction(p)?,
        m,
    })
}

/// Load and (optional) response for the setting: stress then strain for
/// porous, strain then stress for rigid.
fn pair(p: &Params, s: Setting) -> Result<(SymTensor2, Option<SymTensor2>), Failure> {
    let (lk, lv, rk, rv) = match s {
        Setting::Porous => ("stress", &p.stress, "strain", &p.strain),
        Setting::Rigid => ("strain", &p.strain, "stress", &p.stress),
    };
    let load = tensor_key(lv, lk)?;
    if load.norm() == 0.0 {
        return Err(Failure::Input(format!("`{lk}` must be nonzero")));
    }
    let resp = rv.as_ref().map(|_| tensor_key(rv, rk)).transpose()?;
    Ok((load, resp))
}

fn bound_of(x: &Mech, load: &SymTensor2) -> Result<f64, Failure> {
    Ok(match x.setting {
        Setting::Porous => porous_bound(x.f, &x.m, load)?.value,
        Setting::Rigid => rigid_bound(x.f, &x.m, load)?.value,
    })
}

fn mode(s: Setting) -> Mode {
    match s {
        Setting::Porous => Mode::Void,
        Setting::Rigid => Mode::Rigid,
    }
}

fn optimize_options(p: &Params) -> Result<OptimizeOptions, Failure> {
    let d = OptimizeOptions::default();
    let o = OptimizeOptions {
        rank: p.rank.unwrap_or(d.rank),
        budget: p.budget.unwrap_or(d.budget),
        extra_starts: p.extra_starts.unwrap_or(d.extra_starts),
        step_tol: p.step_tol.unwrap_or(d.step_tol),
    };
    if !(1..=3).contains(&o.rank) {
        return Err(Failure::Input(format!("`rank` must be 1, 2 or 3, got {}", o.rank)));
    }
    if o.budget == 0 {
        return Err(Failure::Input("`budget` must be positive".into()));
    }
    if !(o.step_tol.is_finite() && o.step_tol > 0.0) {
        return Err(Failure::Input(format!("`step_tol` must be positive, got {}", o.step_tol)));
    }
    Ok(o)
}

fn optimize(x: &Mech, delta: f64, load: &SymTensor2, o: &OptimizeOptions) -> Result<OptimizeResult, Failure> {
    Ok(match x.setting {
        Setting::Porous => optimize_complementary(x.f, &x.m, delta, load, o)?,
        Setting::Rigid => optimize_elastic(x.f, &x.m, delta, load, o)?,
    })
}

fn check_delta(s: Setting, d: f64) -> Result<(), Failure> {
    let ok = d.is_finite()
        && d > 0.0
        && match s {
            Setting::Porous => d <= 1.0,
            Setting::Rigid => d >= 1.0,
        };
    if ok {
        Ok(())
    } else {
        Err(Failure::Input(format!("delta {d} is not admissible for the {s:?} setting")))
    }
}

fn rel_gap(energy: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        (energy - bound) / bound
    } else {
        energy - bound
    }
}

fn tolerance(v: Option<f64>, default: f64) -> Result<f64, Failure> {
    let t = v.unwrap_or(default);
    if t.is_finite() && t >= 0.0 {
        Ok(t)
    } else {
        Err(Failure::Input(format!("`tol` must be nonnegative, got {t}")))
    }
}

fn vector(v: &Option<Vec<f64>>, key: &str) -> Result<Vec<f64>, Failure> {
    let v = need(v, key)?;
    if !(v.len() == 2 || v.len() == 3) || v.iter().any(|x| !x.is_finite()) {
        return Err(Failure::Input(format!("`{key}` needs 2 or 3 finite components")));
    }
    Ok(v)
}

fn conductors(p: &Params) -> Result<CondPairBounds, Failure> {
    Ok(wiener_means(need(&p.f, "f")?, need(&p.k1, "k1")?, need(&p.k2, "k2")?)?)
}

enum Job {
    BoundStress(f64, IsoModuli, SymTensor2),
    BoundStrain(f64, IsoModuli, SymTensor2),
    Membership(Mech, SymTensor2, SymTensor2, f64, Option<Expect>),
    Boundary(Mech, SymTensor2, [f64; 5]),
    Laminate(Mech, SymTensor2, f64, OptimizeOptions),
    Sweep(Mech, SymTensor2, Vec<f64>, OptimizeOptions, Option<PathBuf>),
    Verify(Mech, SymTensor2, SymTensor2, Vec<f64>, u64, f64, Option<PathBuf>),
    ThermalBounds(CondPairBounds, Option<Vec<f64>>, Option<Vec<f64>>, f64, Option<Expect>),
    ThermalLaminate(CondPairBounds, Vec<f64>, Vec<f64>, f64),
    Shield(ShieldProblem, SolveOptions, Option<PathBuf>),
    Temperature(Box<ShieldSolution>, Option<PathBuf>),
}

fn parse(kind: Kind, p: &Params) -> Result<Job, Failure> {
    Ok(match kind {
        Kind::BoundStress => {
            let x = mech(p)?;
            Job::BoundStress(x.f, x.m, tensor_key(&p.stress, "stress")?)
        }
        Kind::BoundStrain => {
            let x = mech(p)?;
            Job::BoundStrain(x.f, x.m, tensor_key(&p.strain, "strain")?)
        }
        Kind::Membership => {
            let x = mech(p)?;
            let (load, resp) = pair(p, x.setting)?;
            let other = if x.setting == Setting::Porous { "strain" } else { "stress" };
            let resp = resp.ok_or_else(|| Failure::Input(format!("missing required key `{other}`")))?;
            let tol = tolerance(p.tol, DEFAULT_BOUNDARY_TOL)?;
            Job::Membership(x, load, resp, tol, p.expect)
        }
        Kind::BoundaryStrain => {
            let x = mech(p)?;
            let (load, resp) = pair(p, x.setting)?;
            if resp.is_some() {
                return Err(Failure::Input("give only the load; the other tensor is the output".into()));
            }
            Job::Boundary(x, load, perp(&p.perp)?)
        }
        Kind::LaminateOpt => {
            let x = mech(p)?;
            let (load, resp) = pair(p, x.setting)?;
            if resp.is_some() {
                return Err(Failure::Input("laminate-opt takes only the load tensor".into()));
            }
            let delta = p.delta.unwrap_or(match x.setting {
                Setting::Porous => 1e-6,
                Setting::Rigid => 1e6,
            });
            check_delta(x.setting, delta)?;
            Job::Laminate(x, load, delta, optimize_options(p)?)
        }
        Kind::DeltaSweep => {
            let x = mech(p)?;
            let (load, resp) = pair(p, x.setting)?;
            if resp.is_some() {
                return Err(Failure::Input("delta-sweep takes only the load tensor".into()));
            }
            let ladder = p.deltas.clone().unwrap_or_else(|| match x.setting {
                Setting::Porous => vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
                Setting::Rigid => vec![1e2, 1e3, 1e4, 1e5, 1e6],
            });
            if ladder.is_empty() {
                return Err(Failure::Input("`deltas` is empty".into()));
            }
            for d in &ladder {
                check_delta(x.setting, *d)?;
            }
            Job::Sweep(x, load, ladder, optimize_options(p)?, p.csv.clone())
        }
        Kind::VerifyConvergence => {
            let x = mech(p)?;
            let (load, resp) = pair(p, x.setting)?;
            let resp = match (resp, &p.perp) {
                (Some(_), Some(_)) => {
                    return Err(Failure::Input("`perp` builds the response; do not give both".into()))
                }
                (Some(r), None) => r,
                (None, _) => match x.setting {
                    Setting::Porous => boundary_strain(x.f, &x.m, &load, &perp(&p.perp)?)?,
                    Setting::Rigid => boundary_stress(x.f, &x.m, &load, &perp(&p.perp)?)?,
                },
            };
            let ladder = p.deltas.clone().unwrap_or_else(|| vec![1e-2, 1e-4, 1e-6, 1e-8]);
            if ladder.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(Failure::Input("`deltas` must be nonnegative slacks".into()));
            }
            let tol = tolerance(p.tol, 1e-4)?;
            Job::Verify(x, load, resp, ladder, p.seed.unwrap_or(0), tol, p.csv.clone())
        }
        Kind::ThermalBounds => {
            let b = conductors(p)?;
            let q = p.q.as_ref().map(|_| vector(&p.q, "q")).transpose()?;
            let e = p.e.as_ref().map(|_| vector(&p.e, "e")).transpose()?;
            if p.expect.is_some() && (q.is_none() || e.is_none()) {
                return Err(Failure::Input("`expect` needs both `q` and `e`".into()));
            }
            Job::ThermalBounds(b, q, e, tolerance(p.tol, DEFAULT_SPHERE_TOL)?, p.expect)
        }
        Kind::ThermalLaminate => Job::ThermalLaminate(
            conductors(p)?,
            vector(&p.q, "q")?,
            vector(&p.e, "e")?,
            tolerance(p.tol, DEFAULT_SPHERE_TOL)?,
        ),
        Kind::Shield => {
            let problem = ShieldProblem {
                w: need(&p.w, "w")?,
                a: need(&p.a, "a")?,
                n1: need(&p.n1, "n1")?,
                n2: need(&p.n2, "n2")?,
                p: need(&p.p, "p")?,
                k1: need(&p.k1, "k1")?,
            };
            problem.validate()?;
            let d = SolveOptions::default();
            let opts = SolveOptions {
                max_iter: p.max_iter.unwrap_or(d.max_iter),
                rel_tol: p.rel_tol.unwrap_or(d.rel_tol),
                window: p.window.unwrap_or(d.window),
            };
            if opts.max_iter == 0 || opts.window == 0 || !(opts.rel_tol.is_finite() && opts.rel_tol > 0.0) {
                return Err(Failure::Input("`max_iter`, `window` and `rel_tol` must be positive".into()));
            }
            Job::Shield(problem, opts, p.csv.clone())
        }
        Kind::Temperature => {
            let path = need(&p.solution, "solution")?;
            Job::Temperature(Box::new(load_solution(&path)?), p.csv.clone())
        }
    })
}

/// Reads a shield report (or a bare solution) and checks that its fields
/// are consistent with the stream function it carries.
pub fn load_solution(path: &std::path::Path) -> Result<ShieldSolution, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let value = if value.get("result").is_some() {
        let r: Report = serde_json::from_value(value).map_err(|e| Failure::Input(format!("report: {e}")))?;
        if r.command != Kind::Shield.name() {
            return Err(Failure::Input(format!("{} is a `{}` report, not `shield`", path.display(), r.command)));
        }
        r.result
    } else {
        value
    };
    let s: ShieldSolution =
        serde_json::from_value(value).map_err(|e| Failure::Input(format!("solution: {e}")))?;
    check_solution(&s)?;
    Ok(s)
}

fn check_solution(s: &ShieldSolution) -> Result<(), Failure> {
    s.problem.validate()?;
    let p = &s.problem;
    let nt = p.triangle_count();
    if s.psi.len() != p.node_count() || s.q.len() != nt || s.f.len() != nt || s.region.len() != nt {
        return Err(Failure::Input("solution arrays do not match the grid".into()));
    }
    let ev = p.evaluate(&s.psi)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    let same = ev.q.iter().zip(&s.q).all(|(a, b)| close(a[0], b[0]) && close(a[1], b[1]))
        && ev.f.iter().zip(&s.f).all(|(a, b)| close(*a, *b))
        && close(ev.resistance, s.resistance);
    if !same {
        return Err(Failure::Input("solution fields do not match its stream function".into()));
    }
    Ok(())
}

pub fn check_inputs(kind: Kind, p: &Params) -> Result<(), Failure> {
    parse(kind, p).map(|_| ())
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<T, Failure> {
    T::deserialize(v).map_err(|e| Failure::Input(format!("result: {e}")))
}

fn finite(xs: &[f64]) -> Result<(), Failure> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Failure::Input("result has non-finite values".into()))
    }
}

/// Re-parses a result under the schema of `kind` and checks its headline
/// values.
pub fn check_result(kind: Kind, v: &Value) -> Result<(), Failure> {
    match kind {
        Kind::BoundStress => {
            let r: PorousBound = typed(v)?;
            finite(&[r.value, r.g, r.phase_energy])?;
            if r.value < r.phase_energy * (1.0 - 1e-12) {
                return Err(Failure::Input("bound below the phase energy".into()));
            }
        }
        Kind::BoundStrain => {
            let r: RigidBound = typed(v)?;
            finite(&[r.value, r.phase_energy])?;
        }
        Kind::Membership => {
            let r: MembershipResult = typed(v)?;
            finite(&[r.work, r.verdict.bound, r.verdict.residual])?;
        }
        Kind::BoundaryStrain => {
            let r: BoundaryResult = typed(v)?;
            finite(&r.tensor.mandel)?;
        }
        Kind::LaminateOpt => {
            let r: LaminateResult = typed(v)?;
            r.optimum.tree.validate()?;
            if r.tree != r.optimum.tree.to_text() {
                return Err(Failure::Input("tree text does not match the tree".into()));
            }
            finite(&[r.optimum.energy, r.bound, r.gap])?;
        }
        Kind::DeltaSweep => {
            let r: SweepResult = typed(v)?;
            finite(&[r.bound, r.extrapolated])?;
        }
        Kind::VerifyConvergence => {
            let _: VerifyResult = typed(v)?;
        }
        Kind::ThermalBounds => {
            let r: ThermalBoundsResult = typed(v)?;
            finite(&[r.bounds.k_plus, r.bounds.k_minus])?;
        }
        Kind::ThermalLaminate => {
            let _: ThermalLaminateResult = typed(v)?;
        }
        Kind::Shield => check_solution(&typed(v)?)?,
        Kind::Temperature => {
            let r: TemperatureResult = typed(v)?;
            r.problem.validate()?;
            if r.temperature.len() != r.problem.node_count() {
                return Err(Failure::Input("temperature array does not match the grid".into()));
            }
        }
    }
    Ok(())
}

pub fn execute(kind: Kind, p: &Params) -> Result<Outcome, Failure> {
    match parse(kind, p)? {
        Job::BoundStress(f, m, s) => Ok(outcome(&porous_bound(f, &m, &s)?)),
        Job::BoundStrain(f, m, e) => Ok(outcome(&rigid_bound(f, &m, &e)?)),
        Job::Membership(x, load, resp, tol, expect) => {
            let verdict = match x.setting {
                Setting::Porous => membership_porous(x.f, &x.m, &load, &resp, tol)?,
                Setting::Rigid => membership_rigid(x.f, &x.m, &resp, &load, tol)?,
            };
            let mut out = outcome(&MembershipResult {
                setting: x.setting,
                work: load.dot(&resp),
                verdict,
                expect,
            });
            out.status = mismatch(expect, verdict.classification);
            Ok(out)
        }
        Job::Boundary(x, load, perp) => {
            let t = match x.setting {
                Setting::Porous => boundary_strain(x.f, &x.m, &load, &perp)?,
                Setting::Rigid => boundary_stress(x.f, &x.m, &load, &perp)?,
            };
            Ok(outcome(&BoundaryResult {
                setting: x.setting,
                tensor: t.into(),
                bound: bound_of(&x, &load)?,
                work: load.dot(&t),
            }))
        }
        Job::Laminate(x, load, delta, o) => {
            let optimum = optimize(&x, delta, &load, &o)?;
            let bound = bound_of(&x, &load)?;
            let converged = optimum.converged;
            let mut out = outcome(&LaminateResult {
                setting: x.setting,
                delta,
                tree: optimum.tree.to_text(),
                gap: rel_gap(optimum.energy, bound),
                bound,
                optimum,
            });
            if !converged {
                out.status = Some(Failure::NonConvergence("evaluation budget exhausted".into()));
            }
            Ok(out)
        }
        Job::Sweep(x, load, ladder, o, csv) => sweep(&x, &load, &ladder, &o, csv),
        Job::Verify(x, load, resp, ladder, seed, tol, csv) => {
            let setting = match x.setting {
                Setting::Porous => VerifySetting::porous(x.f, x.m),
                Setting::Rigid => VerifySetting::rigid(x.f, x.m),
            };
            let family = synth_family(&setting, &load, &resp, &ladder, seed)?;
            let report = converge(&setting, &family.samples, &load, &resp)?;
            let verdict = report.require_converged(tol);
            let files = csv.into_iter().map(|path| (path, report.to_csv())).collect();
            let mut out = outcome(&VerifyResult {
                setting: x.setting,
                load: load.into(),
                response: resp.into(),
                family,
                report,
                threshold: tol,
                converged: verdict.is_ok(),
            });
            out.files = files;
            out.status = verdict.err().map(|e| Failure::NonConvergence(e.to_string()));
            Ok(out)
        }
        Job::ThermalBounds(bounds, q, e, tol, expect) => {
            let verdict = match (&q, &e) {
                (Some(q), Some(e)) => Some(pair_membership(q, e, &bounds, tol)?),
                _ => None,
            };
            let min_work = q.as_ref().map(|q| min_work(q, &bounds)).transpose()?;
            let insulating = match &q {
                Some(q) if bounds.k2 == 0.0 => Some(insulating_bound(q, bounds.f, bounds.k1)?),
                _ => None,
            };
            let mut out = outcome(&ThermalBoundsResult {
                bounds,
                verdict,
                min_work,
                insulating_bound: insulating,
                expect,
            });
            out.status = verdict.and_then(|v| mismatch(expect, v.classification));
            Ok(out)
        }
        Job::ThermalLaminate(bounds, q, e, tol) => {
            let verdict = pair_membership(&q, &e, &bounds, tol)?;
            let laminate = attaining_laminate(&q, &e, &bounds, tol)?;
            Ok(outcome(&ThermalLaminateResult {
                bounds,
                verdict,
                laminate,
            }))
        }
        Job::Shield(problem, opts, csv) => {
            let s = shield_solve(&problem, &opts)?;
            let mut out = outcome(&s);
            out.files = grid_files(&s, csv);
            Ok(out)
        }
        Job::Temperature(mut s, csv) => {
            s.reconstruct_temperature()?;
            let t = s.temperature.clone().unwrap_or_default();
            let mut out = outcome(&TemperatureResult {
                problem: s.problem,
                resistance: s.resistance,
                lambda: s.lambda,
                inlet_drop: s.inlet_drop(),
                temperature_residual: s.temperature_residual(),
                stalled_nodes: t.iter().filter(|x| x.is_nan()).count(),
                temperature: t.iter().map(|x| x.is_finite().then_some(*x)).collect(),
            });
            out.files = grid_files(&s, csv);
            Ok(out)
        }
    }
}

fn mismatch(expect: Option<Expect>, got: gclosure::bounds::Classification) -> Option<Failure> {
    expect
        .filter(|e| !e.matches(got))
        .map(|e| Failure::Infeasible(format!("verdict {got}, expected {e:?}")))
}

fn grid_files(s: &ShieldSolution, dir: Option<PathBuf>) -> Vec<(PathBuf, String)> {
    dir.map(|d| vec![(d.join("nodes.csv"), s.nodes_csv()), (d.join("cells.csv"), s.cells_csv())])
        .unwrap_or_default()
}

/// One optimization per ladder point on its own thread; rows come back in
/// ladder order.
fn sweep(
    x: &Mech,
    load: &SymTensor2,
    ladder: &[f64],
    o: &OptimizeOptions,
    csv: Option<PathBuf>,
) -> Result<Outcome, Failure> {
    let results: Vec<Result<OptimizeResult, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ladder
            .iter()
            .map(|&d| scope.spawn(move || optimize(x, d, load, o)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimizer thread panicked")).collect()
    });
    let optima = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let bound = bound_of(x, load)?;
    let mut next = optima.iter();
    let table = delta_sweep(ladder, mode(x.setting), |_| Ok(next.next().expect("one per delta").energy))?;
    let rows: Vec<SweepRow> = ladder
        .iter()
        .zip(&optima)
        .map(|(&delta, r)| SweepRow {
            delta,
            energy: r.energy,
            gap: rel_gap(r.energy, bound),
            converged: r.converged,
            evaluations: r.evaluations,
            tree: r.tree.to_text(),
        })
        .collect();
    let mut body = String::from("delta,energy,bound,gap,converged,tree\n");
    for r in &rows {
        body.push_str(&format!(
            "{:?},{:?},{:?},{:?},{},\"{}\"\n",
            r.delta, r.energy, bound, r.gap, r.converged, r.tree
        ));
    }
    let mut out = outcome(&SweepResult {
        setting: x.setting,
        bound,
        rows,
        monotone: table.monotone,
        extrapolated: table.extrapolated,
        extrapolated_gap: rel_gap(table.extrapolated, bound),
    });
    out.files = csv.into_iter().map(|p| (p, body.clone())).collect();
    Ok(out)
}
