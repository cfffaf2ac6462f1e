//! Empirical geometric (spatial) quantiles.
//!
//! `Q(u)` minimizes `(1/n) Σ (‖x_i - q‖₂ - ⟨u, q⟩)` over `q` for a level `u`
//! in the open unit ball. Each distance term is replaced by a Huber-type
//! smoothing inside radius `ε` so the objective is differentiable; after the
//! quasi-Newton phase the nearest data point is tested against the exact
//! subgradient optimality condition and returned if it is the minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::SampleMatrix;

/// Lengths of the paper-grid levels; the first is the spatial median.
pub const GRID_LENGTHS: [f64; 10] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.9225, 0.945, 0.9675, 0.99];

/// Levels longer than this are flagged as extreme.
pub const EXTREME_LENGTH: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Level {
    u: Vec<f64>,
}

impl Level {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Empty("level vector".into()));
        }
        let n = euclid(&u);
        if !(n < 1.0) {
            return Err(Error::Domain(format!("level must lie in the open unit ball, |u| = {n}")));
        }
        Ok(Self { u })
    }

    pub fn zeros(d: usize) -> Self {
        Self { u: vec![0.0; d] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn norm(&self) -> f64 {
        euclid(&self.u)
    }
}

impl TryFrom<Vec<f64>> for Level {
    type Error = Error;

    fn try_from(u: Vec<f64>) -> Result<Self> {
        Level::new(u)
    }
}

impl From<Level> for Vec<f64> {
    fn from(l: Level) -> Self {
        l.u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoQuantile {
    pub level: Level,
    pub q: Vec<f64>,
    pub objective_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The result is a data point certified by the subgradient condition.
    pub at_data_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitRule {
    Median,
    Mean,
    User(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence when `‖∇‖₂ ≤ tolerance · (1 + ‖u‖₂)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Smoothing radius; `None` means `1e-9 ·` [`data_scale`].
    pub epsilon: Option<f64>,
    pub init: InitRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 500, epsilon: None, init: InitRule::Median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub index: usize,
    pub level: Level,
    pub length: f64,
    pub is_extreme: bool,
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest per-column range, or 1 for a degenerate sample.
pub fn data_scale(sample: &SampleMatrix) -> f64 {
    let d = sample.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in sample.iter_rows() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    let s = (0..d).map(|j| hi[j] - lo[j]).fold(0.0, f64::max);
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

fn check_dims(sample: &SampleMatrix, u: &[f64], q: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Empty("sample".into()));
    }
    if u.len() != sample.cols() {
        return Err(Error::Dimension { expected: sample.cols(), got: u.len() });
    }
    if q.len() != sample.cols() {
        return Err(Error::Dimension { expected: sample.cols(), got: q.len() });
    }
    Ok(())
}

/// Exact objective `(1/n) Σ (‖x_i - q‖ - ⟨u, q⟩)`.
pub fn gq_objective(sample: &SampleMatrix, u: &[f64], q: &[f64]) -> Result<f64> {
    check_dims(sample, u, q)?;
    let total: f64 = sample
        .iter_rows()
        .map(|x| x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum();
    Ok(total / sample.rows() as f64 - dot(u, q))
}

/// `(1/n) Σ (q - x_i) / max(‖q - x_i‖, ε) - u`.
pub fn gq_gradient(sample: &SampleMatrix, u: &[f64], q: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_dims(sample, u, q)?;
    let mut g = vec![0.0; q.len()];
    smoothed(sample.as_slice(), q.len(), u, q, epsilon, &mut g);
    Ok(g)
}

/// Smoothed objective and its gradient in one pass.
fn smoothed(data: &[f64], d: usize, u: &[f64], q: &[f64], eps: f64, grad: &mut [f64]) -> f64 {
    let n = (data.len() / d) as f64;
    grad.fill(0.0);
    let mut total = 0.0;
    let mut diff = [0.0f64; 8];
    let mut diff_vec;
    let diff: &mut [f64] = if d <= diff.len() {
        &mut diff[..d]
    } else {
        diff_vec = vec![0.0; d];
        &mut diff_vec
    };
    for x in data.chunks_exact(d) {
        let mut r2 = 0.0;
        for j in 0..d {
            diff[j] = q[j] - x[j];
            r2 += diff[j] * diff[j];
        }
        let r = r2.sqrt();
        let denom = if r >= eps {
            total += r;
            r
        } else {
            total += r2 / (2.0 * eps) + eps / 2.0;
            eps
        };
        for j in 0..d {
            grad[j] += diff[j] / denom;
        }
    }
    for j in 0..d {
        grad[j] = grad[j] / n - u[j];
    }
    total / n - dot(u, q)
}

/// Change of the smoothed objective from `q` to `q + step`, and the gradient at
/// `q + step`. Distance differences use `(r'² - r²)/(r' + r)` so that tiny
/// steps far from the data are not lost to cancellation.
fn objective_change(data: &[f64], d: usize, u: &[f64], q: &[f64], step: &[f64], eps: f64, grad: &mut [f64]) -> f64 {
    let n = (data.len() / d) as f64;
    grad.fill(0.0);
    let phi = |r2: f64| {
        let r = r2.sqrt();
        if r >= eps {
            r
        } else {
            r2 / (2.0 * eps) + eps / 2.0
        }
    };
    let mut total = 0.0;
    let mut comp = 0.0;
    for x in data.chunks_exact(d) {
        let (mut r2, mut rn2, mut delta2) = (0.0, 0.0, 0.0);
        for j in 0..d {
            let a = q[j] - x[j];
            let b = a + step[j];
            r2 += a * a;
            rn2 += b * b;
            delta2 += (2.0 * a + step[j]) * step[j];
        }
        let (r, rn) = (r2.sqrt(), rn2.sqrt());
        let change = if r >= eps && rn >= eps { delta2 / (r + rn) } else { phi(rn2) - phi(r2) };
        // Kahan
        let y = change - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
        let denom = rn.max(eps);
        for j in 0..d {
            grad[j] += (q[j] + step[j] - x[j]) / denom;
        }
    }
    for j in 0..d {
        grad[j] = grad[j] / n - u[j];
    }
    total / n - dot(u, step)
}

fn initial_point(sample: &SampleMatrix, rule: &InitRule) -> Result<Vec<f64>> {
    let d = sample.cols();
    Ok(match rule {
        InitRule::Mean => sample.mean(),
        InitRule::Median => (0..d)
            .map(|j| {
                let mut c = sample.column(j);
                c.sort_by(f64::total_cmp);
                let m = c.len();
                if m % 2 == 1 {
                    c[m / 2]
                } else {
                    0.5 * (c[m / 2 - 1] + c[m / 2])
                }
            })
            .collect(),
        InitRule::User(q) => {
            if q.len() != d {
                return Err(Error::Dimension { expected: d, got: q.len() });
            }
            q.clone()
        }
    })
}

/// Solves for the empirical geometric quantile at `level`.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn solve_gq(sample: &SampleMatrix, level: &Level, opts: &SolverOptions) -> Result<GeoQuantile> {
    solve(sample, level, opts, None)
}

/// [`solve_gq`], also returning the smoothed objective of every accepted
/// iterate relative to the starting point.
pub fn solve_gq_traced(sample: &SampleMatrix, level: &Level, opts: &SolverOptions) -> Result<(GeoQuantile, Vec<f64>)> {
    let mut trace = vec![0.0];
    let r = solve(sample, level, opts, Some(&mut trace))?;
    Ok((r, trace))
}

fn solve(sample: &SampleMatrix, level: &Level, opts: &SolverOptions, mut trace: Option<&mut Vec<f64>>) -> Result<GeoQuantile> {
    let d = sample.cols();
    let u = level.as_slice();
    let q0 = initial_point(sample, &opts.init)?;
    check_dims(sample, u, &q0)?;
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidParams("solver tolerance must be positive".into()));
    }
    let eps = opts.epsilon.unwrap_or(1e-9 * data_scale(sample));
    if !(eps > 0.0) {
        return Err(Error::InvalidParams("smoothing epsilon must be positive".into()));
    }
    let data = sample.as_slice();
    let tol = opts.tolerance * (1.0 + level.norm());

    let mut q = q0;
    let mut g = vec![0.0; d];
    smoothed(data, d, u, &q, eps, &mut g);
    let mut h = identity(d);
    let mut first_step = true;
    let mut iterations = 0;
    let mut step = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut p = vec![0.0; d];

    while euclid(&g) > tol && iterations < opts.max_iterations {
        iterations += 1;
        mat_vec_neg(&h, &g, &mut p);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(d);
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = dot(&g, &p);
        }
        // Backtracking on the objective change, which is evaluated without
        // cancellation; near roundoff any non-increasing step that shrinks the
        // gradient is taken.
        let mut t = 1.0;
        let mut accepted = false;
        let mut fallback = None;
        let mut df = 0.0;
        for _ in 0..60 {
            step.iter_mut().zip(&p).for_each(|(s, pj)| *s = t * pj);
            df = objective_change(data, d, u, &q, &step, eps, &mut g_new);
            if df <= 1e-4 * t * slope {
                accepted = true;
                break;
            }
            if fallback.is_none() && df <= 0.0 && euclid(&g_new) < euclid(&g) {
                fallback = Some(t);
            }
            t *= 0.5;
        }
        if !accepted {
            match fallback {
                Some(tf) => {
                    step.iter_mut().zip(&p).for_each(|(s, pj)| *s = tf * pj);
                    df = objective_change(data, d, u, &q, &step, eps, &mut g_new);
                }
                None => break,
            }
        }
        if let Some(tr) = trace.as_deref_mut() {
            let last = *tr.last().unwrap_or(&0.0);
            tr.push(last + df);
        }
        let q_prev = q.clone();
        q.iter_mut().zip(&step).for_each(|(qj, sj)| *qj += sj);
        let s: Vec<f64> = (0..d).map(|j| q[j] - q_prev[j]).collect();
        if s.iter().all(|v| *v == 0.0) {
            break;
        }
        let yv: Vec<f64> = (0..d).map(|j| g_new[j] - g[j]).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-300 && sy > 1e-12 * euclid(&s) * euclid(&yv) {
            if first_step {
                let scale = sy / dot(&yv, &yv);
                h = identity(d);
                h.iter_mut().for_each(|v| *v *= scale);
                first_step = false;
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        g.copy_from_slice(&g_new);
    }

    let mut result = GeoQuantile {
        level: level.clone(),
        objective_value: gq_objective(sample, u, &q)?,
        gradient_norm: euclid(&g),
        converged: euclid(&g) <= tol,
        q,
        iterations,
        at_data_point: false,
    };
    if let Some(xj) = certified_data_point(sample, u, &result.q) {
        result.objective_value = gq_objective(sample, u, &xj)?;
        result.q = xj;
        result.gradient_norm = 0.0;
        result.converged = true;
        result.at_data_point = true;
    }
    Ok(result)
}

/// The data point nearest to `q`, if the exact objective attains its minimum there:
/// `‖(1/n) Σ_{x_i ≠ x_j} (x_j - x_i)/‖x_j - x_i‖ - u‖ ≤ m/n` with `m` the multiplicity of `x_j`.
fn certified_data_point(sample: &SampleMatrix, u: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let d = sample.cols();
    let mut best = 0;
    let mut best_r2 = f64::INFINITY;
    for (i, x) in sample.iter_rows().enumerate() {
        let r2: f64 = x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if r2 < best_r2 {
            best_r2 = r2;
            best = i;
        }
    }
    let xj = sample.row(best).to_vec();
    let mut v = vec![0.0; d];
    let mut mult = 0usize;
    for x in sample.iter_rows() {
        let r = x.iter().zip(&xj).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        if r == 0.0 {
            mult += 1;
            continue;
        }
        for k in 0..d {
            v[k] += (xj[k] - x[k]) / r;
        }
    }
    let n = sample.rows() as f64;
    let resid: f64 = (0..d).map(|k| (v[k] / n - u[k]).powi(2)).sum::<f64>().sqrt();
    (resid <= mult as f64 / n).then_some(xj)
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_vec_neg(h: &[f64], g: &[f64], out: &mut [f64]) {
    let d = g.len();
    for i in 0..d {
        out[i] = -(0..d).map(|k| h[i * d + k] * g[k]).sum::<f64>();
    }
}

/// Inverse-Hessian BFGS update `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|k| h[i * d + k] * y[k]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// `u_j = (1/n) Σ_{i≠j} (x_j - x_i)/‖x_j - x_i‖`; rows equal to `x_j` are skipped.
pub fn spatial_rank(sample: &SampleMatrix, j: usize) -> Result<Level> {
    let n = sample.rows();
    if n < 2 {
        return Err(Error::InvalidParams("spatial rank needs at least two rows".into()));
    }
    if j >= n {
        return Err(Error::Dimension { expected: n, got: j });
    }
    let d = sample.cols();
    let xj = sample.row(j);
    let mut u = vec![0.0; d];
    let mut distinct = 0;
    for x in sample.iter_rows() {
        let r = euclid(&x.iter().zip(xj).map(|(a, b)| b - a).collect::<Vec<_>>());
        if r == 0.0 {
            continue;
        }
        distinct += 1;
        for k in 0..d {
            u[k] += (xj[k] - x[k]) / r;
        }
    }
    if distinct == 0 {
        return Err(Error::Domain(format!("every row equals row {j}")));
    }
    u.iter_mut().for_each(|v| *v /= n as f64);
    Level::new(u)
}

/// The 10-length level grid: 26 spherical directions on a π/4 angle grid for
/// `d = 3` (235 levels) and 16 planar directions for `d = 2` (145 levels).
pub fn level_grid(d: usize) -> Result<Vec<GridLevel>> {
    use std::f64::consts::PI;
    let dirs: Vec<Vec<f64>> = match d {
        2 => (0..16).map(|k| {
            let a = k as f64 * PI / 8.0;
            vec![a.cos(), a.sin()]
        }).collect(),
        3 => {
            let mut v = vec![vec![0.0, 0.0, 1.0]];
            for p in 1..4 {
                let phi = p as f64 * PI / 4.0;
                for k in 0..8 {
                    let th = k as f64 * PI / 4.0;
                    v.push(vec![phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()]);
                }
            }
            v.push(vec![0.0, 0.0, -1.0]);
            v
        }
        _ => return Err(Error::InvalidParams(format!("level grid is defined for d in {{2, 3}}, got {d}"))),
    };
    let mut out = vec![GridLevel { index: 0, level: Level::zeros(d), length: 0.0, is_extreme: false }];
    for &len in &GRID_LENGTHS[1..] {
        for dir in &dirs {
            let n = euclid(dir);
            let u: Vec<f64> = dir.iter().map(|c| len * c / n).collect();
            out.push(GridLevel { index: out.len(), level: Level::new(u)?, length: len, is_extreme: len > EXTREME_LENGTH });
        }
    }
    Ok(out)
}
