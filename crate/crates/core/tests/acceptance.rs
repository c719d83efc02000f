//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` (release-like test profile).

mod common;

use std::time::Instant;

use common::*;
use gclosure::bounds::*;
use gclosure::laminate::{optimize_complementary, optimize_elastic, OptimizeOptions};
use gclosure::tensor::{complete_basis, mandel_rotation, ElasticTensor, IsoModuli, SymTensor2, TensorKind};
use gclosure::thermal::shield::{shield_solve, ShieldProblem, ShieldSolution, SolveOptions};
use gclosure::thermal::*;
use gclosure::verify::{block_inverse, converge, synth_family, to_block, Setting};
use nalgebra::{DMatrix, DVector, Matrix6};
use rand::Rng;

type Outcome = (bool, String);

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome, f64); 8] = [
        (1, "porous branch continuity", porous_continuity, 5.0),
        (2, "rigid branch continuity", rigid_continuity, 5.0),
        (3, "inner maximum vs grid and non-coaxial probes", inner_max_oracle, 120.0),
        (4, "laminate optimum vs closed forms", laminate_agreement, 600.0),
        (5, "block-inverse convergence chain", convergence_chain, 30.0),
        (6, "thermal sphere attainment and insulating limit", thermal_attainment, 60.0),
        (7, "shield solver", shield_solver, 300.0),
        (8, "invariant suites", invariant_suites, 300.0),
    ];
    let mut failed = 0;
    for (n, name, run, limit) in criteria {
        let t0 = Instant::now();
        let (ok, detail) = run();
        let secs = t0.elapsed().as_secs_f64();
        let ok = ok && secs < limit;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n}: {} {name}: {detail} [{secs:.1} s, limit {limit} s]",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn porous_continuity() -> Outcome {
    use PorousBranch::*;
    let mut r = rng(1001);
    let mut worst = [0.0f64; 4];
    let mut dispatch_errors = 0;
    for _ in 0..1000 {
        let m = moduli(&mut r, 0.1, 10.0);
        let h_of = |s1: f64| -m.mu() / (m.mu() + m.lambda()) * s1;
        // Nonnegative triples on σ₃ = σ₁ + σ₂.
        let s1 = r.random_range(0.0..1.0);
        let s2 = r.random_range(s1..2.0);
        let s = [s1, s2, s1 + s2];
        worst[0] = worst[0].max(rel(NonnegBalanced.formula(&m, s), NonnegDominant.formula(&m, s)));
        dispatch_errors += g_porous(&m, s).is_err() as usize;

        // One negative eigenvalue, on σ₃ + σ₂ = −μσ₁/(μ+λ).
        let s1 = -r.random_range(0.01..2.0);
        let h = h_of(s1);
        let s2 = r.random_range(0.0..0.5 * h);
        let s = [s1, s2, h - s2];
        worst[1] = worst[1].max(rel(OneNegCase1.formula(&m, s), OneNegCase2.formula(&m, s)));
        dispatch_errors += g_porous(&m, s).is_err() as usize;

        // On σ₃ − σ₂ = −μσ₁/(μ+λ).
        let s1 = -r.random_range(0.01..2.0);
        let s2 = r.random_range(0.0..2.0);
        let s = [s1, s2, s2 + h_of(s1)];
        worst[2] = worst[2].max(rel(OneNegCase1.formula(&m, s), OneNegCase3.formula(&m, s)));
        dispatch_errors += g_porous(&m, s).is_err() as usize;

        // Where σ₁ changes sign the one-negative formulas meet the nonnegative ones.
        let s2 = r.random_range(0.0..1.0);
        let s3 = r.random_range(s2..2.0);
        let s = [0.0, s2, s3];
        worst[3] = worst[3].max(rel(NonnegDominant.formula(&m, s), OneNegCase3.formula(&m, s)));
        let s = [0.0, s2, s2];
        worst[3] = worst[3].max(rel(NonnegBalanced.formula(&m, s), OneNegCase1.formula(&m, s)));
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    (
        max <= 1e-10 && dispatch_errors == 0,
        format!(
            "max rel diff {max:.1e} (nonneg {:.1e}, case1/2 {:.1e}, case1/3 {:.1e}, sign change {:.1e}), dispatch errors {dispatch_errors}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn rigid_continuity() -> Outcome {
    use RigidBranch::*;
    let mut r = rng(1002);
    let mut worst = [0.0f64; 2];
    let mut dispatch_errors = 0;
    for _ in 0..1000 {
        let m = moduli(&mut r, 0.1, 10.0);
        let k = (m.lambda() + 2.0 * m.mu()) / (2.0 * (m.lambda() + m.mu()));
        // η₃ = k(η₁ + η₃), which needs η₃ ≥ 0.
        let e3 = r.random_range(0.01..2.0);
        let e1 = e3 * (1.0 - k) / k;
        let eta = [e1, r.random_range(e1..e3), e3];
        worst[0] = worst[0].max(rel(Middle.formula(&m, eta), UpperEnd.formula(&m, eta)));
        dispatch_errors += g_rigid(&m, eta).is_err() as usize;
        // η₁ = k(η₁ + η₃), which needs η₁ ≤ 0.
        let e1 = -r.random_range(0.01..2.0);
        let e3 = e1 * (1.0 - k) / k;
        let eta = [e1, r.random_range(e1..e3), e3];
        worst[1] = worst[1].max(rel(Middle.formula(&m, eta), LowerEnd.formula(&m, eta)));
        dispatch_errors += g_rigid(&m, eta).is_err() as usize;
    }
    let max = worst[0].max(worst[1]);
    (
        max <= 1e-10 && dispatch_errors == 0,
        format!(
            "max rel diff {max:.1e} (upper {:.1e}, lower {:.1e}) with pivot (λ+2μ)/(2(λ+μ)), dispatch errors {dispatch_errors}",
            worst[0], worst[1]
        ),
    )
}

fn inner_max_oracle() -> Outcome {
    let mut r = rng(1003);
    let (mut worst_grid, mut worst_probe) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..100 {
        let m = moduli(&mut r, 0.1, 10.0);
        let f = r.random_range(0.05..0.99);
        let e = sym(&mut r, 1.0);
        let w = match rigid_bound(f, &m, &e) {
            Ok(w) => w,
            Err(err) => return (false, format!("rigid_bound failed: {err}")),
        };
        worst_grid = worst_grid.max(rel(w.value, rigid_bound_by_grid(&m, f, &e)));
        let h = (w.value - w.phase_energy) / (1.0 - f);
        worst_probe = worst_probe.max(non_coaxial_excess(&mut r, &m, f, &e, &w.eta, h, 10_000, w.value));
    }
    (
        worst_grid <= 1e-3 && worst_probe <= 1e-6,
        format!("grid rel diff {worst_grid:.1e} (100 instances), largest non-coaxial gain {worst_probe:.1e} (10^4 probes each)"),
    )
}

fn laminate_agreement() -> Outcome {
    let m = IsoModuli::new(1.0, 1.0).unwrap();
    let loads = [
        SymTensor2::identity(),
        SymTensor2::diag(0.0, 0.0, 1.0),
        SymTensor2::diag(1.0, 1.0, -1.0) * (1.0 / 3f64.sqrt()),
    ];
    let opts = OptimizeOptions::default();
    let (mut porous_gap, mut rigid_gap, mut limit_gap) = (0.0f64, 0.0f64, 0.0f64);
    for x in &loads {
        for f in [0.3, 0.5, 0.7] {
            let w = porous_bound(f, &m, x).unwrap().value;
            let lam = optimize_complementary(f, &m, 1e-6, x, &opts).unwrap();
            porous_gap = porous_gap.max(rel(lam.energy, w));
            let wt = rigid_bound(f, &m, x).unwrap().value;
            let lam = optimize_elastic(f, &m, 1e6, x, &opts).unwrap();
            rigid_gap = rigid_gap.max(rel(lam.energy, wt));
        }
        let pure = m.complementary_energy(x);
        let w1 = porous_bound(1.0, &m, x).unwrap().value;
        let l1 = optimize_complementary(1.0, &m, 1e-6, x, &opts).unwrap().energy;
        // Just below f = 1 the optimizer runs for real.
        let l1m = optimize_complementary(1.0 - 1e-8, &m, 1e-6, x, &opts).unwrap().energy;
        for v in [w1, l1, l1m] {
            limit_gap = limit_gap.max(rel(v, pure));
        }
    }
    (
        porous_gap <= 0.02 && rigid_gap <= 0.05 && limit_gap <= 1e-6,
        format!(
            "void δ=1e-6 worst gap {:.2e}% (gate 2%), rigid δ=1e6 worst gap {:.2e}% (gate 5%), f→1 limits {limit_gap:.1e}",
            100.0 * porous_gap,
            100.0 * rigid_gap
        ),
    )
}

fn convergence_chain() -> Outcome {
    const LADDER: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];
    let mut r = rng(1005);
    let mut failures = Vec::new();
    let (mut dev, mut alpha, mut min_margin) = (0.0f64, 0.0f64, f64::INFINITY);
    for (suite, setting_of) in [("primal", 0), ("dual", 1)] {
        for k in 0..20u64 {
            let m = moduli(&mut r, 0.1, 10.0);
            let f = r.random_range(0.1..0.95);
            let x = sym(&mut r, 1.0);
            let perp: [f64; 5] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
            let (setting, y) = if setting_of == 0 {
                (Setting::porous(f, m), boundary_strain(f, &m, &x, &perp).unwrap())
            } else {
                (Setting::rigid(f, m), boundary_stress(f, &m, &x, &perp).unwrap())
            };
            let fam = synth_family(&setting, &x, &y, &LADDER, k).unwrap();
            if !fam.skipped.is_empty() {
                failures.push(format!("{suite} {k}: skipped {:?}", fam.skipped));
                continue;
            }
            let rep = converge(&setting, &fam.samples, &x, &y).unwrap();
            if let Err(e) = rep.require_converged(1e-4) {
                failures.push(format!("{suite} {k}: {e}"));
            }
            dev = dev.max(rep.final_deviation());
            alpha = alpha.max(rep.final_alpha_rel());
            for row in &rep.rows {
                for c in &row.checks {
                    min_margin = min_margin.min(c.margin / rep.bound);
                }
            }
        }
    }
    let ok = failures.is_empty() && dev < 1e-4 && alpha < 1e-3;
    (
        ok,
        format!(
            "40 families: final ‖T y⁰ − x⁰‖ {dev:.1e}, final |αW/t² − 1| {alpha:.1e}, smallest margin/W {min_margin:.1e}{}",
            if failures.is_empty() { String::new() } else { format!(", failures {failures:?}") }
        ),
    )
}

fn thermal_attainment() -> Outcome {
    let mut r = rng(1006);
    let rand_vec = |r: &mut rand_chacha::ChaCha8Rng, d: usize| -> Vec<f64> { (0..d).map(|_| r.random_range(-1.0..1.0)).collect() };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut spec_err, mut map_err) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let dim = 2 + case % 2;
        let f = r.random_range(0.05..0.95);
        let k1 = 10f64.powf(r.random_range(-1.0..1.0));
        let k2 = k1 * 10f64.powf(r.random_range(-3.0..0.0));
        let b = wiener_means(f, k1, k2).unwrap();
        let e = rand_vec(&mut r, dim);
        let u = rand_vec(&mut r, dim);
        let (ne, nu) = (norm(&e), norm(&u));
        let q: Vec<f64> = e.iter().zip(&u).map(|(ei, ui)| b.center() * ei + b.radius() * ne * ui / nu).collect();
        let lam = match attaining_laminate(&q, &e, &b, DEFAULT_SPHERE_TOL) {
            Ok(l) => l,
            Err(err) => return (false, format!("case {case}: {err}")),
        };
        let k = DMatrix::from_fn(dim, dim, |i, j| lam.tensor[i][j]);
        let mut spec: Vec<f64> = k.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        spec.sort_by(f64::total_cmp);
        let mut want = vec![b.k_plus; dim];
        want[0] = b.k_minus;
        for (s, w) in spec.iter().zip(&want) {
            spec_err = spec_err.max((s - w).abs() / b.k_plus);
        }
        let ke = &k * DVector::from_column_slice(&e);
        map_err = map_err.max((ke - DVector::from_column_slice(&q)).norm() / (b.k_plus * ne));
    }
    let mut half_space = 0.0f64;
    for _ in 0..1000 {
        let dim = r.random_range(2..=3);
        let q = rand_vec(&mut r, dim);
        let f = r.random_range(0.01..1.0);
        let k1 = 10f64.powf(r.random_range(-2.0..2.0));
        let direct = insulating_bound(&q, f, k1).unwrap();
        for k2 in [0.0, 1e-15 * k1] {
            let via = min_work(&q, &wiener_means(f, k1, k2).unwrap()).unwrap();
            half_space = half_space.max(rel(direct, via));
        }
    }
    (
        spec_err <= 1e-10 && map_err <= 1e-10 && half_space <= 1e-12,
        format!("spectrum err {spec_err:.1e}, |K e − q| rel {map_err:.1e}, insulating limit rel diff {half_space:.1e}"),
    )
}

fn solve(w: f64, a: f64, n: usize, p: f64, k1: f64) -> Result<ShieldSolution, String> {
    let problem = ShieldProblem { w, a, n1: n, n2: n, p, k1 };
    shield_solve(&problem, &SolveOptions::default()).map_err(|e| format!("a={a} p={p} n={n}: {e}"))
}

fn shield_solver() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut worst_lambda = 0.0f64;

    // No window at 128×128: analytic resistance and linear temperature.
    let (w, p, k1) = (1.0, 0.5, 1.0);
    let mut s = match solve(w, 0.0, 128, p, k1) {
        Ok(s) => s,
        Err(e) => return (false, e),
    };
    let exact = 4.0 * w / (p * k1);
    let r_err = rel(s.resistance, exact);
    worst_lambda = worst_lambda.max(s.lambda_residual);
    let t = s.reconstruct_temperature().unwrap().to_vec();
    let pr = s.problem;
    let mut t_err = 0.0f64;
    for j in 0..=pr.n2 {
        for i in 0..=pr.n1 {
            let x = i as f64 * pr.hx();
            t_err = t_err.max((t[pr.node(i, j)] - (w - x) / (p * k1)).abs());
        }
    }
    let lin_ok = t_err <= pr.hx() * pr.hx();
    ok &= r_err <= 5e-3 && lin_ok;
    notes.push(format!("a=0 128²: R rel err {r_err:.1e}, max |T − (w−x)/(pk₁)| {t_err:.1e}"));

    // One windowed run at full resolution, timed.
    let t0 = Instant::now();
    match solve(1.0, 0.5, 128, 0.5, 1.0) {
        Ok(s) => {
            worst_lambda = worst_lambda.max(s.lambda_residual);
            notes.push(format!(
                "a=0.5 p=0.5 128²: R {:.6}, {} iterations, {:.0} s",
                s.resistance,
                s.iterations,
                t0.elapsed().as_secs_f64()
            ));
        }
        Err(e) => {
            ok = false;
            notes.push(e);
        }
    }

    // Monotonicity sweeps at 64×64.
    let mut sweep = |vals: &[f64], f: &dyn Fn(f64) -> (f64, f64), increasing: bool, name: &str| {
        let mut rs = Vec::new();
        for &v in vals {
            let (a, p) = f(v);
            match solve(1.0, a, 64, p, 1.0) {
                Ok(s) => {
                    worst_lambda = worst_lambda.max(s.lambda_residual);
                    rs.push(s.resistance);
                }
                Err(e) => {
                    notes.push(e);
                    return false;
                }
            }
        }
        let mono = rs.windows(2).all(|x| if increasing { x[1] >= x[0] } else { x[1] <= x[0] });
        notes.push(format!(
            "R over {name} {vals:?}: {:?}",
            rs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        ));
        mono
    };
    let a_mono = sweep(&[0.0, 0.25, 0.5, 0.9], &|a| (a, 0.5), true, "a (p=0.5, 64²)");
    let p_mono = sweep(&[0.2, 0.4, 0.6, 0.8, 1.0], &|p| (0.5, p), false, "p (a=0.5, 64²)");
    ok &= a_mono && p_mono && worst_lambda < 1e-8;
    notes.push(format!("worst λ residual {worst_lambda:.1e}"));
    (ok, notes.join("; "))
}

fn invariant_suites() -> Outcome {
    const N: usize = 10_000;
    let mut r = rng(1008);
    let mut notes = Vec::new();
    let (mut frame, mut homog, mut sign, mut iso, mut block) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..N {
        let m = moduli(&mut r, 0.1, 10.0);
        let f = r.random_range(0.01..1.0);
        let x = sym(&mut r, 5.0);
        let q = rotation(&mut r);
        let wp = porous_bound(f, &m, &x).unwrap().value;
        let wr = rigid_bound(f, &m, &x).unwrap().value;
        frame = frame
            .max(rel(wp, porous_bound(f, &m, &x.rotated(&q)).unwrap().value))
            .max(rel(wr, rigid_bound(f, &m, &x.rotated(&q)).unwrap().value));
        for t in [0.1, 2.0, 10.0] {
            homog = homog
                .max(rel(porous_bound(f, &m, &(x * t)).unwrap().value, t * t * wp))
                .max(rel(rigid_bound(f, &m, &(x * t)).unwrap().value, t * t * wr));
        }
        sign = sign.max(rel(wp, porous_bound(f, &m, &(-x)).unwrap().value));

        // Mandel isometry: Euclidean norms and products equal Frobenius ones.
        let y = sym(&mut r, 1.0);
        let (mx, my) = (x.to_matrix(), y.to_matrix());
        iso = iso
            .max(rel(x.norm(), mx.norm()))
            .max((x.dot(&y) - mx.component_mul(&my).sum()).abs() / (x.norm() * y.norm()))
            .max((mandel_rotation(&q).transpose() * mandel_rotation(&q) - Matrix6::identity()).amax());

        // Block inverse in the basis completed from a random tensor.
        let a = Matrix6::from_fn(|_, _| r.random_range(-1.0..1.0));
        let c = ElasticTensor::from_matrix(a * a.transpose() + Matrix6::identity() * 0.1, TensorKind::Stiffness).unwrap();
        let basis = complete_basis(&y).unwrap();
        let b = to_block(&c, &basis);
        let inv = block_inverse(&b).unwrap();
        block = block.max((inv.block.reassemble() * b.reassemble() - Matrix6::identity()).amax());
    }
    notes.push(format!("frame {frame:.1e} (tol 1e-10)"));
    notes.push(format!("homogeneity {homog:.1e} (tol 1e-12)"));
    notes.push(format!("sign symmetry {sign:.1e} (tol 1e-13)"));
    notes.push(format!("Mandel isometry {iso:.1e} (tol 1e-12)"));
    notes.push(format!("block inverse {block:.1e} (tol 1e-10)"));
    (
        frame <= 1e-10 && homog <= 1e-12 && sign <= 1e-13 && iso <= 1e-12 && block <= 1e-10,
        format!("{N} samples each: {}", notes.join(", ")),
    )
}
