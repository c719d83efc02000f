//! Relaxed insulating-shield design on the quarter rectangle `[0,w]×[0,1]`.
//!
//! The current is `q = (∂ψ/∂x₂, −∂ψ/∂x₁)` for a piecewise linear stream
//! function on a triangulated grid, so it is exactly divergence free. Unit
//! flux enters through `x₁ = 0`, the top and bottom carry no normal flux,
//! and the segment `x₁ = w, x₂ ≤ a` is insulated. That fixes ψ on those
//! edges; the rest of `x₁ = w` is the outlet and ψ there is free.
//!
//! For a given ψ the best density is `f = min(λ|q|, 1)` with `λ` set by the
//! budget `∫f = w p`, and the resistance is `R = 4∫|q|²/(f k₁)`. The solver
//! alternates the exact density update with the exact weighted-Laplacian
//! solve for ψ; both steps decrease `R`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Weights use `max(f, F_FLOOR)` so the linear system stays nonsingular in
/// regions where the current dies out.
const F_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShieldProblem {
    pub w: f64,
    pub a: f64,
    pub n1: usize,
    pub n2: usize,
    pub p: f64,
    pub k1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once the last `window` iterations lowered `R` by less than
    /// `rel_tol` per iteration on average, relative to `R`.
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 5000,
            rel_tol: 1e-9,
            window: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `λ|q| < 1`: partially filled.
    Theta,
    /// Solid conductor.
    ThetaC,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShieldSolution {
    pub problem: ShieldProblem,
    /// Node values, index `j (n1+1) + i`.
    pub psi: Vec<f64>,
    /// Per triangle, index `2 (j n1 + i) + t` with `t = 0` below the cell diagonal.
    pub q: Vec<[f64; 2]>,
    pub f: Vec<f64>,
    pub region: Vec<Region>,
    pub lambda: f64,
    pub resistance: f64,
    pub iterations: usize,
    /// `|λ − (wp − |Θ_C|)/∫_Θ|q||/λ`; zero when `p = 1`.
    pub lambda_residual: f64,
    /// `|∫f − wp|/(wp)`.
    pub budget_residual: f64,
    pub temperature: Option<Vec<f64>>,
}

/// Evaluation of `R` for a given stream function with the density re-optimized.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub q: Vec<[f64; 2]>,
    pub f: Vec<f64>,
    pub lambda: f64,
    pub resistance: f64,
}

impl ShieldProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(invalid(format!("half-width must be positive, got {}", self.w)));
        }
        if !(self.a.is_finite() && (0.0..1.0).contains(&self.a)) {
            return Err(invalid(format!("window half-height must lie in [0, 1), got {}", self.a)));
        }
        if self.n1 < 2 || self.n2 < 2 {
            return Err(invalid("grid needs at least 2 cells per direction"));
        }
        if self.n1.saturating_mul(self.n2) > 4_000_000 {
            return Err(invalid("grid too large"));
        }
        if !(self.p.is_finite() && self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!("budget must lie in (0, 1], got {}", self.p)));
        }
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(invalid(format!("conductivity must be positive, got {}", self.k1)));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        self.w / self.n1 as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.n2 as f64
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.n1 + 1) + i
    }

    pub fn node_count(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.n1 * self.n2
    }

    pub fn triangle_area(&self) -> f64 {
        0.5 * self.hx() * self.hy()
    }

    /// Prescribed ψ at a boundary node, or `None` for a free node.
    pub fn dirichlet(&self, i: usize, j: usize) -> Option<f64> {
        let y = j as f64 * self.hy();
        if j == 0 {
            Some(0.0)
        } else if j == self.n2 {
            Some(1.0)
        } else if i == 0 {
            Some(y)
        } else if i == self.n1 && y <= self.a + 1e-12 * self.hy() {
            Some(0.0)
        } else {
            None
        }
    }

    /// Whether `psi` has the prescribed boundary values.
    pub fn is_feasible(&self, psi: &[f64]) -> bool {
        psi.len() == self.node_count()
            && (0..=self.n2).all(|j| {
                (0..=self.n1).all(|i| match self.dirichlet(i, j) {
                    Some(v) => psi[self.node(i, j)] == v,
                    None => psi[self.node(i, j)].is_finite(),
                })
            })
    }

    /// Node indices of triangle `t` of cell `(i, j)` and its gradient
    /// operator: `∇ψ = (Σ gx[k] ψ[nodes[k]], Σ gy[k] ψ[nodes[k]])`.
    fn triangle(&self, i: usize, j: usize, t: usize) -> ([usize; 3], [f64; 3], [f64; 3]) {
        let (hx, hy) = (self.hx(), self.hy());
        let n00 = self.node(i, j);
        let n10 = self.node(i + 1, j);
        let n01 = self.node(i, j + 1);
        let n11 = self.node(i + 1, j + 1);
        if t == 0 {
            // (0,0), (1,0), (1,1)
            ([n00, n10, n11], [-1.0 / hx, 1.0 / hx, 0.0], [0.0, -1.0 / hy, 1.0 / hy])
        } else {
            // (0,0), (1,1), (0,1)
            ([n00, n11, n01], [0.0, 1.0 / hx, -1.0 / hx], [-1.0 / hy, 0.0, 1.0 / hy])
        }
    }

    /// Per-triangle current of a stream function.
    pub fn currents(&self, psi: &[f64]) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.triangle_count());
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                for t in 0..2 {
                    let (nodes, gx, gy) = self.triangle(i, j, t);
                    let (mut px, mut py) = (0.0, 0.0);
                    for k in 0..3 {
                        px += gx[k] * psi[nodes[k]];
                        py += gy[k] * psi[nodes[k]];
                    }
                    out.push([py, -px]);
                }
            }
        }
        out
    }

    /// `R` with the density chosen optimally for `psi`.
    pub fn evaluate(&self, psi: &[f64]) -> Result<Evaluation> {
        self.validate()?;
        if !self.is_feasible(psi) {
            return Err(invalid("stream function violates the boundary data"));
        }
        let q = self.currents(psi);
        let mags: Vec<f64> = q.iter().map(|v| v[0].hypot(v[1])).collect();
        let (lambda, f) = self.density(&mags)?;
        let resistance = self.resistance(&mags, &f);
        Ok(Evaluation {
            q,
            f,
            lambda,
            resistance,
        })
    }

    fn resistance(&self, mags: &[f64], f: &[f64]) -> f64 {
        let area = self.triangle_area();
        let s: f64 = mags
            .iter()
            .zip(f)
            .map(|(&m, &fi)| if m == 0.0 { 0.0 } else { m * m / fi })
            .sum();
        4.0 * area * s / self.k1
    }

    /// Budget-matched `λ` and `f = min(λ|q|, 1)`.
    fn density(&self, mags: &[f64]) -> Result<(f64, Vec<f64>)> {
        let area = self.triangle_area();
        if self.p == 1.0 {
            let qmin = mags.iter().copied().fold(f64::INFINITY, f64::min);
            return Ok((1.0 / qmin, vec![1.0; mags.len()]));
        }
        let target = self.w * self.p;
        let used = |lam: f64| mags.iter().map(|&m| (lam * m).min(1.0)).sum::<f64>() * area;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut tries = 0;
        while used(hi) < target {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > 2000 {
                return Err(Error::NonConvergence {
                    what: format!(
                        "budget multiplier: bracket [{lo:e}, {hi:e}] still uses {:e} of {target:e}",
                        used(hi)
                    ),
                    best: f64::NAN,
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if used(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = hi;
        Ok((lambda, mags.iter().map(|&m| (lambda * m).min(1.0)).collect()))
    }

    /// Minimizes `Σ |T| wₜ |∇ψ|²` over ψ with the boundary data.
    fn weighted_solve(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let n = self.node_count();
        let mut psi = vec![0.0; n];
        let mut free = vec![usize::MAX; n];
        let mut nfree = 0;
        for j in 0..=self.n2 {
            for i in 0..=self.n1 {
                let k = self.node(i, j);
                match self.dirichlet(i, j) {
                    Some(v) => psi[k] = v,
                    None => {
                        free[k] = nfree;
                        nfree += 1;
                    }
                }
            }
        }
        let mut mat = BandedSpd::new(nfree, self.n1 + 2);
        let mut rhs = vec![0.0; nfree];
        let area = self.triangle_area();
        let mut tri = 0;
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                for t in 0..2 {
                    let (nodes, gx, gy) = self.triangle(i, j, t);
                    let wt = weights[tri] * area;
                    tri += 1;
                    for a in 0..3 {
                        let fa = free[nodes[a]];
                        if fa == usize::MAX {
                            continue;
                        }
                        for b in 0..3 {
                            let kab = wt * (gx[a] * gx[b] + gy[a] * gy[b]);
                            let fb = free[nodes[b]];
                            if fb == usize::MAX {
                                rhs[fa] -= kab * psi[nodes[b]];
                            } else if fb <= fa {
                                mat.add(fa, fb, kab);
                            }
                        }
                    }
                }
            }
        }
        mat.factor()?;
        mat.solve(&mut rhs);
        for k in 0..n {
            if free[k] != usize::MAX {
                psi[k] = rhs[free[k]];
            }
        }
        Ok(psi)
    }
}

/// Solves the relaxed shielding problem.
pub fn shield_solve(problem: &ShieldProblem, opts: &SolveOptions) -> Result<ShieldSolution> {
    problem.validate()?;
    let mut psi = initial_guess(problem, opts)?;
    let mut eval = problem.evaluate(&psi)?;
    let mut iterations = 0;
    if problem.p < 1.0 {
        let mut converged = false;
        let mut history = vec![eval.resistance];
        while iterations < opts.max_iter {
            iterations += 1;
            let weights: Vec<f64> = eval.f.iter().map(|&f| 1.0 / f.max(F_FLOOR)).collect();
            let target = problem.weighted_solve(&weights)?;
            let (next_psi, next) = line_search(problem, &psi, &target, &eval)?;
            if next.resistance > eval.resistance {
                converged = true;
                break;
            }
            psi = next_psi;
            eval = next;
            history.push(eval.resistance);
            // Single steps stall now and then; judge progress over a window.
            let back = history.len().saturating_sub(1 + opts.window);
            let span = (history.len() - 1 - back) as f64;
            if history.len() > opts.window && history[back] - eval.resistance <= span * opts.rel_tol * eval.resistance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: format!("shield iteration after {iterations} steps (lambda {:e})", eval.lambda),
                best: eval.resistance,
            });
        }
    }
    Ok(finish(problem, psi, eval, iterations))
}

/// Harmonic flow, or for even grids of moderate size the interpolated
/// solution of the half-resolution problem.
fn initial_guess(problem: &ShieldProblem, opts: &SolveOptions) -> Result<Vec<f64>> {
    let (n1, n2) = (problem.n1, problem.n2);
    if problem.p == 1.0 || n1 % 2 != 0 || n2 % 2 != 0 || n1.min(n2) < 32 {
        return problem.weighted_solve(&vec![1.0; problem.triangle_count()]);
    }
    let coarse = ShieldProblem {
        n1: n1 / 2,
        n2: n2 / 2,
        ..*problem
    };
    let cpsi = shield_solve(&coarse, opts)?.psi;
    let c = |i: usize, j: usize| cpsi[coarse.node(i, j)];
    let mut psi = vec![0.0; problem.node_count()];
    for j in 0..=n2 {
        for i in 0..=n1 {
            let (ci, cj) = (i / 2, j / 2);
            // P1 interpolation on the coarse triangles, whose diagonal runs
            // from (0,0) to (1,1) in each cell.
            let v = match (i % 2, j % 2) {
                (0, 0) => c(ci, cj),
                (1, 0) => 0.5 * (c(ci, cj) + c(ci + 1, cj)),
                (0, 1) => 0.5 * (c(ci, cj) + c(ci, cj + 1)),
                _ => 0.5 * (c(ci, cj) + c(ci + 1, cj + 1)),
            };
            psi[problem.node(i, j)] = problem.dirichlet(i, j).unwrap_or(v);
        }
    }
    Ok(psi)
}

/// `R` is convex in ψ, so the reweighted step is extended by doubling for as
/// long as it keeps decreasing `R`.
fn line_search(
    problem: &ShieldProblem,
    psi: &[f64],
    target: &[f64],
    current: &Evaluation,
) -> Result<(Vec<f64>, Evaluation)> {
    let at = |t: f64| -> Vec<f64> { psi.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect() };
    let mut best_psi = target.to_vec();
    let mut best = problem.evaluate(&best_psi)?;
    if best.resistance >= current.resistance {
        return Ok((best_psi, best));
    }
    let mut t = 1.0;
    while t < 1e6 {
        t *= 2.0;
        let cand_psi = at(t);
        let cand = problem.evaluate(&cand_psi)?;
        if cand.resistance >= best.resistance {
            break;
        }
        best_psi = cand_psi;
        best = cand;
    }
    Ok((best_psi, best))
}

fn finish(problem: &ShieldProblem, psi: Vec<f64>, eval: Evaluation, iterations: usize) -> ShieldSolution {
    let area = problem.triangle_area();
    let mags: Vec<f64> = eval.q.iter().map(|v| v[0].hypot(v[1])).collect();
    let region: Vec<Region> = mags
        .iter()
        .map(|&m| {
            if problem.p < 1.0 && eval.lambda * m < 1.0 {
                Region::Theta
            } else {
                Region::ThetaC
            }
        })
        .collect();
    let lambda_residual = if problem.p < 1.0 {
        let solid = region.iter().filter(|r| **r == Region::ThetaC).count() as f64 * area;
        let flow: f64 = mags
            .iter()
            .zip(&region)
            .filter(|(_, r)| **r == Region::Theta)
            .map(|(m, _)| m * area)
            .sum();
        let fixed = (problem.w * problem.p - solid) / flow;
        ((eval.lambda - fixed) / eval.lambda).abs()
    } else {
        0.0
    };
    let used: f64 = eval.f.iter().sum::<f64>() * area;
    let target = problem.w * problem.p;
    ShieldSolution {
        problem: *problem,
        psi,
        q: eval.q,
        f: eval.f,
        region,
        lambda: eval.lambda,
        resistance: eval.resistance,
        iterations,
        lambda_residual,
        budget_residual: (used - target).abs() / target,
        temperature: None,
    }
}

impl ShieldSolution {
    pub fn magnitude(&self, t: usize) -> f64 {
        self.q[t][0].hypot(self.q[t][1])
    }

    /// Temperature at every node: zero on `x₁ = w`, elsewhere the integral of
    /// `|q|/(f k₁)` along the streamline from the node to the outlet. The
    /// current is constant on each triangle and its normal component is
    /// continuous, so streamlines are traced exactly, one straight segment
    /// per triangle. Nodes whose streamline stalls get `NaN`.
    pub fn reconstruct_temperature(&mut self) -> Result<&[f64]> {
        let p = self.problem;
        for (t, &fi) in self.f.iter().enumerate() {
            if self.magnitude(t) > 0.0 && !(fi > 0.0) {
                return Err(Error::ContractViolation(format!(
                    "triangle {t} carries current with zero density"
                )));
            }
        }
        let qmax = (0..self.q.len()).map(|t| self.magnitude(t)).fold(0.0, f64::max);
        let stall = 1e-12 * qmax;
        let mut temp = vec![f64::NAN; p.node_count()];
        for j in 0..=p.n2 {
            for i in 0..=p.n1 {
                // The bottom edge is the dividing streamline of the dead
                // zone at the insulated wall; start just above it.
                let y = if j == 0 { 1e-6 * p.hy() } else { j as f64 * p.hy() };
                temp[p.node(i, j)] = if i == p.n1 {
                    0.0
                } else {
                    self.trace(i as f64 * p.hx(), y, stall).unwrap_or(f64::NAN)
                };
            }
        }
        self.temperature = Some(temp);
        Ok(self.temperature.as_deref().unwrap())
    }

    fn direction(&self, t: usize, stall: f64) -> Option<(f64, f64)> {
        let m = self.magnitude(t);
        (m > stall).then(|| (self.q[t][0] / m, self.q[t][1] / m))
    }

    /// Cell indices and local coordinates of `(x, y)` relative to the cell of `t`.
    fn local(&self, t: usize, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let p = &self.problem;
        let (i, j) = ((t / 2) % p.n1, (t / 2) / p.n1);
        (i, j, x / p.hx() - i as f64, y / p.hy() - j as f64)
    }

    /// Distance along `(ux, uy)` from `(x, y)` to the boundary of `t`, and
    /// the edge crossed: 0 horizontal, 1 vertical, 2 diagonal. Edges the
    /// direction runs along (up to rounding) are not exits.
    fn exit(&self, t: usize, x: f64, y: f64, ux: f64, uy: f64) -> Option<(f64, u8)> {
        let p = &self.problem;
        let (_, _, xi, eta) = self.local(t, x, y);
        let (uxi, ueta) = (ux / p.hx(), uy / p.hy());
        let parallel = 1e-12 * (uxi.abs() + ueta.abs());
        let mut best: Option<(f64, u8)> = None;
        let mut consider = |num: f64, den: f64, edge: u8| {
            if den > parallel {
                let s = num.max(0.0) / den;
                if best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, edge));
                }
            }
        };
        if t % 2 == 0 {
            consider(eta, -ueta, 0);
            consider(1.0 - xi, uxi, 1);
            consider(xi - eta, ueta - uxi, 2);
        } else {
            consider(1.0 - eta, ueta, 0);
            consider(xi, -uxi, 1);
            consider(eta - xi, uxi - ueta, 2);
        }
        best
    }

    /// Triangle across `edge` of `t`, if inside the domain.
    fn neighbor(&self, t: usize, edge: u8) -> Option<usize> {
        let p = &self.problem;
        let (i, j) = ((t / 2) % p.n1, (t / 2) / p.n1);
        let id = |i: usize, j: usize, k: usize| 2 * (j * p.n1 + i) + k;
        match (t % 2, edge) {
            (_, 2) => Some(t ^ 1),
            (0, 0) => (j > 0).then(|| id(i, j - 1, 1)),
            (0, _) => (i + 1 < p.n1).then(|| id(i + 1, j, 1)),
            (_, 0) => (j + 1 < p.n2).then(|| id(i, j + 1, 0)),
            _ => (i > 0).then(|| id(i - 1, j, 0)),
        }
    }

    /// A triangle touching `(x, y)` that the current leaves the point into.
    fn start(&self, x: f64, y: f64, stall: f64) -> Option<usize> {
        let p = &self.problem;
        let tol = 1e-9;
        let ci = (x / p.hx()).floor() as i64;
        let cj = (y / p.hy()).floor() as i64;
        let mut best: Option<(usize, f64)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= p.n1 as i64 || j >= p.n2 as i64 {
                    continue;
                }
                for k in 0..2 {
                    let t = 2 * (j as usize * p.n1 + i as usize) + k;
                    let (_, _, xi, eta) = self.local(t, x, y);
                    let inside = if k == 0 {
                        eta >= -tol && xi <= 1.0 + tol && xi - eta >= -tol
                    } else {
                        xi >= -tol && eta <= 1.0 + tol && eta - xi >= -tol
                    };
                    if !inside {
                        continue;
                    }
                    let Some((ux, uy)) = self.direction(t, stall) else { continue };
                    let Some((s, _)) = self.exit(t, x, y, ux, uy) else { continue };
                    if s > 1e-9 && best.is_none_or(|(_, b)| ux > b) {
                        best = Some((t, ux));
                    }
                }
            }
        }
        best.map(|(t, _)| t)
    }

    /// Integral of `|q|/(f k₁)` from `(x, y)` to the outlet.
    fn trace(&self, mut x: f64, mut y: f64, stall: f64) -> Option<f64> {
        let p = &self.problem;
        let mut acc = 0.0;
        let mut t = self.start(x, y, stall)?;
        for _ in 0..50 * (p.n1 + p.n2) + 1000 {
            let (ux, uy) = self.direction(t, stall)?;
            let (s, edge) = self.exit(t, x, y, ux, uy)?;
            let rate = self.magnitude(t) / (self.f[t] * p.k1);
            acc += rate * s;
            x = (x + s * ux).clamp(0.0, p.w);
            y = (y + s * uy).clamp(0.0, 1.0);
            match self.neighbor(t, edge) {
                Some(next) => t = next,
                None if edge == 1 && t % 2 == 0 => return Some(acc),
                None => return None,
            }
        }
        None
    }

    /// Relative mismatch of `q·∇T = −|q|²/(f k₁)` with `T` interpolated
    /// linearly on each triangle: `Σ|q·∇T + |q|²/(f k₁)| / Σ|q|²/(f k₁)` over
    /// triangles with current and no flagged node. Where the filled fraction
    /// is below one the optimal current direction is only weakly determined,
    /// so this stays at the percent level instead of vanishing with `h`.
    pub fn temperature_residual(&self) -> Option<f64> {
        let temp = self.temperature.as_ref()?;
        let p = &self.problem;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..p.n2 {
            for i in 0..p.n1 {
                for k in 0..2 {
                    let t = 2 * (j * p.n1 + i) + k;
                    let (nodes, gx, gy) = p.triangle(i, j, k);
                    if self.magnitude(t) == 0.0 || nodes.iter().any(|&n| temp[n].is_nan()) {
                        continue;
                    }
                    let (mut tx, mut ty) = (0.0, 0.0);
                    for m in 0..3 {
                        tx += gx[m] * temp[nodes[m]];
                        ty += gy[m] * temp[nodes[m]];
                    }
                    let work = self.magnitude(t).powi(2) / (self.f[t] * p.k1);
                    num += (self.q[t][0] * tx + self.q[t][1] * ty + work).abs();
                    den += work;
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// `∫T(0, x₂) dx₂` by the trapezoid rule; `None` if any inlet node is flagged.
    pub fn inlet_drop(&self) -> Option<f64> {
        let temp = self.temperature.as_ref()?;
        let p = &self.problem;
        let vals: Vec<f64> = (0..=p.n2).map(|j| temp[p.node(0, j)]).collect();
        if vals.iter().any(|v| v.is_nan()) {
            return None;
        }
        let inner: f64 = vals[1..p.n2].iter().sum();
        Some(p.hy() * (inner + 0.5 * (vals[0] + vals[p.n2])))
    }

    /// Node table: `i,j,x1,x2,psi,T`.
    pub fn nodes_csv(&self) -> String {
        let p = &self.problem;
        let mut s = String::from("i,j,x1,x2,psi,T\n");
        for j in 0..=p.n2 {
            for i in 0..=p.n1 {
                let k = p.node(i, j);
                let t = self.temperature.as_ref().map_or(f64::NAN, |v| v[k]);
                s.push_str(&format!(
                    "{i},{j},{:?},{:?},{:?},{:?}\n",
                    i as f64 * p.hx(),
                    j as f64 * p.hy(),
                    self.psi[k],
                    t
                ));
            }
        }
        s
    }

    /// Triangle table: `i,j,tri,x1,x2,q1,q2,qabs,f,region` at centroids.
    pub fn cells_csv(&self) -> String {
        let p = &self.problem;
        let mut s = String::from("i,j,tri,x1,x2,q1,q2,qabs,f,region\n");
        for j in 0..p.n2 {
            for i in 0..p.n1 {
                for t in 0..2 {
                    let k = 2 * (j * p.n1 + i) + t;
                    let (cx, cy) = if t == 0 { (2.0 / 3.0, 1.0 / 3.0) } else { (1.0 / 3.0, 2.0 / 3.0) };
                    s.push_str(&format!(
                        "{i},{j},{t},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                        (i as f64 + cx) * p.hx(),
                        (j as f64 + cy) * p.hy(),
                        self.q[k][0],
                        self.q[k][1],
                        self.magnitude(k),
                        self.f[k],
                        match self.region[k] {
                            Region::Theta => "theta",
                            Region::ThetaC => "solid",
                        }
                    ));
                }
            }
        }
        s
    }

    /// Scalar results only.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "problem": self.problem,
            "lambda": self.lambda,
            "resistance": self.resistance,
            "iterations": self.iterations,
            "lambda_residual": self.lambda_residual,
            "budget_residual": self.budget_residual,
            "inlet_drop": self.inlet_drop(),
        })
    }
}

/// Symmetric positive definite band matrix, lower band stored row by row,
/// factored in place as `L Lᵀ`.
struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    fn new(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Entry `(i, j)` with `j ≤ i ≤ j + bw`.
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j <= i && i - j <= self.bw);
        &mut self.data[i * (self.bw + 1) + (self.bw - (i - j))]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.at(i, j) += v;
    }

    fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // L[i][j] = (A[i][j] − Σ_k L[i][k] L[j][k]) / L[j][j]
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (bw - (i - j))];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in k0..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite);
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[ri + k] * b[k];
            }
            b[i] = s / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + bw - i;
            b[i] /= self.data[ri + i];
            let bi = b[i];
            for k in i.saturating_sub(bw)..i {
                b[k] -= self.data[ri + k] * bi;
            }
        }
    }
}
