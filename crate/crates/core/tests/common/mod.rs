//! Independent oracles and random generators shared by the integration tests.
#![allow(dead_code)]

use gclosure::bounds::g_rigid;
use gclosure::tensor::{IsoModuli, SymTensor2};
use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Uniform random rotation from a uniformly sampled unit quaternion.
pub fn rotation(r: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let v = Vector4::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v / n));
            return *q.to_rotation_matrix().matrix();
        }
    }
}

pub fn unit_vector(r: &mut impl Rng) -> Vector3<f64> {
    rotation(r).column(0).into_owned()
}

pub fn sym(r: &mut impl Rng, scale: f64) -> SymTensor2 {
    let mut m = [0.0; 6];
    for x in &mut m {
        *x = scale * r.random_range(-1.0..1.0);
    }
    SymTensor2::from_mandel(m)
}

/// Moduli with both λ and μ log-uniform in [lo, hi].
pub fn moduli(r: &mut impl Rng, lo: f64, hi: f64) -> IsoModuli {
    let (a, b) = (lo.ln(), hi.ln());
    IsoModuli::new(r.random_range(a..b).exp(), r.random_range(a..b).exp()).unwrap()
}

/// `g` of the rigid bound as a maximum over unit directions `e` of
/// `(|ηe|² − (e·ηe)²)/μ + (e·ηe)²/(λ+2μ)`: the energy cost of the optimal
/// strain jump across a rigid layer with normal `e`. In the eigenbasis of `η`
/// only the squared components `pᵢ = eᵢ²` matter, so the search runs over the
/// probability simplex with a coarse grid followed by local refinement.
pub fn g_rigid_by_directions(m: &IsoModuli, eta: [f64; 3]) -> f64 {
    let b = m.lambda() + 2.0 * m.mu();
    let val = |p: [f64; 3]| {
        let n2: f64 = (0..3).map(|i| eta[i] * eta[i] * p[i]).sum();
        let nn: f64 = (0..3).map(|i| eta[i] * p[i]).sum();
        (n2 - nn * nn) / m.mu() + nn * nn / b
    };
    let n = 60;
    let mut best = (f64::NEG_INFINITY, [1.0 / 3.0; 3]);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let p = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
            let v = val(p);
            if v > best.0 {
                best = (v, p);
            }
        }
    }
    let mut h = 1.0 / n as f64;
    while h > 1e-12 {
        let mut improved = false;
        for (da, db) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let p = best.1;
            let q = [p[0] + da * h, p[1] + db * h, p[2] - (da + db) * h];
            if q.iter().all(|x| *x >= 0.0) {
                let v = val(q);
                if v > best.0 {
                    best = (v, q);
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best.0
}

/// Inner objective `2ε:η − f·g(η)` on ordered coaxial triples.
fn coaxial_objective(m: &IsoModuli, f: f64, e: [f64; 3], eta: [f64; 3]) -> f64 {
    let g = g_rigid(m, eta).unwrap().0;
    2.0 * (e[0] * eta[0] + e[1] * eta[1] + e[2] * eta[2]) - f * g
}

fn grid_max(
    m: &IsoModuli,
    f: f64,
    e: [f64; 3],
    center: [f64; 3],
    h: f64,
    n: i32,
) -> (f64, [f64; 3]) {
    let mut best = (f64::NEG_INFINITY, center);
    for i in -n..=n {
        let x = center[0] + i as f64 * h;
        for j in -n..=n {
            let y = center[1] + j as f64 * h;
            if y < x {
                continue;
            }
            for k in -n..=n {
                let z = center[2] + k as f64 * h;
                if z < y {
                    continue;
                }
                let v = coaxial_objective(m, f, e, [x, y, z]);
                if v > best.0 {
                    best = (v, [x, y, z]);
                }
            }
        }
    }
    best
}

/// `W̃_f(ε)` by exhaustive search over ordered triples `η ∈ [−R, R]³` with `R`
/// doubled until the maximizer leaves the box boundary, then refined by
/// shrinking grids centred on the incumbent.
pub fn rigid_bound_by_grid(m: &IsoModuli, f: f64, eps: &SymTensor2) -> f64 {
    let e = gclosure::tensor::eig_sym(eps).values;
    let base = m.elastic_energy(eps);
    let scale = e.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale == 0.0 {
        return base;
    }
    let n = 20;
    let mut r = scale * (m.lambda() + 2.0 * m.mu()) / f;
    let mut best;
    loop {
        best = grid_max(m, f, e, [0.0; 3], r / n as f64, n);
        let on_edge = best.1.iter().any(|x| x.abs() > r * (1.0 - 1.5 / n as f64));
        if !on_edge {
            break;
        }
        r *= 2.0;
    }
    let mut h = r / n as f64;
    while h > 1e-10 * r {
        let cand = grid_max(m, f, e, best.1, h, 3);
        if cand.0 > best.0 {
            best = cand;
        }
        h *= 0.4;
    }
    base + (1.0 - f) * best.0
}

/// Largest relative excess of `2ε:η − f·g(η)` over `h_star` among random
/// symmetric (generally non-coaxial) perturbations of `eta_star`.
pub fn non_coaxial_excess(
    r: &mut impl Rng,
    m: &IsoModuli,
    f: f64,
    eps: &SymTensor2,
    eta_star: &SymTensor2,
    h_star: f64,
    samples: usize,
    denom: f64,
) -> f64 {
    let scale = eta_star.norm().max(eps.norm());
    let mut worst = f64::NEG_INFINITY;
    for k in 0..samples {
        let amp = scale * [1.0, 1e-1, 1e-2, 1e-3][k % 4];
        let eta = *eta_star + sym(r, amp);
        let g = g_rigid(m, gclosure::tensor::eig_sym(&eta).values).unwrap().0;
        let h = 2.0 * eps.dot(&eta) - f * g;
        worst = worst.max((h - h_star) / denom);
    }
    worst
}
