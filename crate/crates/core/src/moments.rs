//! Mean vector and covariance matrix of the norm-truncated law `X | ‖X‖ ≤ y`.
//!
//! The radial families reduce to lower-incomplete beta-prime integrals of the
//! norm, the independent family to one-dimensional truncations, and the
//! Clayton family (only at `αθ = 1`) to integrals of `(1 + x)^-c` over two
//! triangles of the square `[0, y]²`. Alternative explicit expressions are
//! kept alongside for cross-checking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{radial_density_constant, Family, FamilyParams};
use crate::rng::{domain, substream};
use crate::sample::NormKind;
use crate::special::{beta_prime_partial, gamma_sum_survival, lomax_kernel_integral, rising};

/// Minimum acceptance rate of the rejection oracle.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

const MC_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMoments {
    pub y: f64,
    pub mu: Vec<f64>,
    /// Row-major `d x d`.
    pub sigma: Vec<f64>,
}

impl TruncatedMoments {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma_at(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim() + j]
    }

    /// `E[Y_i Y_j]`.
    pub fn second_moment(&self, i: usize, j: usize) -> f64 {
        self.sigma_at(i, j) + self.mu[i] * self.mu[j]
    }

    fn from_conditional(y: f64, mu: Vec<f64>, second: &[f64]) -> Self {
        let d = mu.len();
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let s = second[i * d + j] - mu[i] * mu[j];
                sigma[i * d + j] = s;
                sigma[j * d + i] = s;
            }
        }
        Self { y, mu, sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconditionalMoments {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

/// Rejection estimate of the truncated moments with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMoments {
    pub moments: TruncatedMoments,
    pub mu_se: Vec<f64>,
    /// `E[Y_i Y_j]`, row-major.
    pub second: Vec<f64>,
    pub second_se: Vec<f64>,
    pub accepted: u64,
    pub draws: u64,
}

impl McMoments {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.draws as f64
    }
}

/// Exchangeable partial moments `E[·; ‖X‖ ≤ y]`: total mass, `E[X_1; ·]`,
/// `E[X_1²; ·]` and `E[X_1 X_2; ·]`.
struct Exchangeable {
    mass: f64,
    first: f64,
    square: f64,
    cross: f64,
}

impl Exchangeable {
    fn conditional(&self, y: f64, d: usize) -> TruncatedMoments {
        let mu = vec![self.first / self.mass; d];
        let mut second = vec![self.cross / self.mass; d * d];
        for i in 0..d {
            second[i * d + i] = self.square / self.mass;
        }
        TruncatedMoments::from_conditional(y, mu, &second)
    }
}

pub fn truncated_moments(params: &FamilyParams, norm: NormKind, y: f64) -> Result<TruncatedMoments> {
    params.check_norm(norm)?;
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("truncation level must be positive and finite, got {y}")));
    }
    let a = params.alpha();
    let d = params.dim();
    let du = d as u32;
    let df = d as f64;
    let tm = match params.family() {
        Family::MvParetoLomax => {
            // ‖X‖₁ ~ beta-prime(d, α) independent of a uniform simplex direction
            let k = radial_density_constant(a, du);
            let r1 = k * beta_prime_partial(du + 1, a - 1.0, y);
            let r2 = k * beta_prime_partial(du + 2, a - 2.0, y);
            Exchangeable {
                mass: k * beta_prime_partial(du, a, y),
                first: r1 / df,
                square: 2.0 * r2 / (df * (df + 1.0)),
                cross: r2 / (df * (df + 1.0)),
            }
            .conditional(y, d)
        }
        Family::RadialParetoLomax => {
            let c = radial_density_constant(a, du) / df;
            let j2 = beta_prime_partial(du + 2, a - 2.0, y);
            Exchangeable {
                mass: df * c * beta_prime_partial(du, a, y),
                first: c * (df + 1.0) / 2.0 * beta_prime_partial(du + 1, a - 1.0, y),
                square: c * (df + 2.0) / 3.0 * j2,
                cross: c * (df + 2.0) / 4.0 * j2,
            }
            .conditional(y, d)
        }
        Family::IndepParetoLomax => {
            let f1 = -(-a * y.ln_1p()).exp_m1();
            let mu = a * beta_prime_partial(2, a - 1.0, y) / f1;
            let sq = a * beta_prime_partial(3, a - 2.0, y) / f1;
            let mut sigma = vec![0.0; d * d];
            for i in 0..d {
                sigma[i * d + i] = sq - mu * mu;
            }
            TruncatedMoments { y, mu: vec![mu; d], sigma }
        }
        Family::ClaytonParetoLomax => clayton_unit_moments(params, y)?.conditional(y, 2),
    };
    if tm.mu.iter().chain(&tm.sigma).any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("truncated moments are not finite at y = {y}")));
    }
    Ok(tm)
}

/// Clayton at `αθ = 1`, where the law has density `α(α+1)(1 + x₁ + x₂)^-(α+2)`
/// and the L∞ ball `[0, y]²` splits along `x₁ + x₂ = y`.
fn clayton_unit_moments(params: &FamilyParams, y: f64) -> Result<Exchangeable> {
    let a = params.alpha();
    let th = params.theta().unwrap_or(f64::NAN);
    if (a * th - 1.0).abs() > 1e-12 {
        return Err(Error::Unsupported(format!(
            "closed-form truncated moments for the Clayton family with alpha*theta = {} (only alpha*theta = 1)",
            a * th
        )));
    }
    if (a - 1.0).abs() < 1e-6 {
        return Err(Error::Unsupported("closed-form Clayton truncated moments at alpha = 1".into()));
    }
    let q = lomax_kernel_integral;
    let u = (-a * y.ln_1p()).exp();
    let w = (-a * (2.0 * y).ln_1p()).exp();
    let r = y / (1.0 + y);
    let one_minus_u = -(-a * y.ln_1p()).exp_m1();
    let mass = one_minus_u * one_minus_u - w * (a * (-r * r).ln_1p()).exp_m1();
    let q_lo = q(a, 0.0, y);
    let q_hi = q(a, y, 2.0 * y);
    let q1_lo = q(a - 1.0, 0.0, y);
    let q1_hi = q(a - 1.0, y, 2.0 * y);
    let first = q_lo - y * u + y * w - q_hi;
    let square = 2.0 * (q1_lo - q_lo) - y * y * u + y * y * w - 2.0 * (q1_hi - (1.0 + y) * q_hi);
    let cross = (q1_lo - q1_hi) / (a - 1.0) - 2.0 * y * q_hi + y * y * w;
    Ok(Exchangeable { mass, first, square, cross })
}

pub fn unconditional_moments(params: &FamilyParams) -> Result<UnconditionalMoments> {
    let a = params.alpha();
    if !(a > 2.0) {
        return Err(Error::InfiniteVariance(a));
    }
    let d = params.dim();
    let df = d as f64;
    let (mean, var, cov) = match params.family() {
        Family::MvParetoLomax => {
            let m = 1.0 / (a - 1.0);
            let c = m * m / (a - 2.0);
            (m, a * c, c)
        }
        Family::IndepParetoLomax => {
            let m = 1.0 / (a - 1.0);
            (m, a * m * m / (a - 2.0), 0.0)
        }
        Family::RadialParetoLomax => {
            let m = (df + 1.0) / (2.0 * (a - 1.0));
            let base = (df + 1.0) * (df + 2.0) / ((a - 1.0) * (a - 2.0));
            (m, base / 3.0 - m * m, base / 4.0 - m * m)
        }
        Family::ClaytonParetoLomax => {
            // At αθ = 1 the law is the bivariate multivariate Pareto-Lomax.
            let th = params.theta().unwrap_or(f64::NAN);
            if (a * th - 1.0).abs() > 1e-12 {
                return Err(Error::Unsupported(format!(
                    "closed-form Clayton covariance with alpha*theta = {} (only alpha*theta = 1)",
                    a * th
                )));
            }
            let m = 1.0 / (a - 1.0);
            let c = m * m / (a - 2.0);
            (m, a * c, c)
        }
    };
    let mut c = vec![cov; d * d];
    for i in 0..d {
        c[i * d + i] = var;
    }
    Ok(UnconditionalMoments { mean: vec![mean; d], cov: c })
}

#[derive(Clone)]
struct Acc {
    n: u64,
    s1: Vec<f64>,
    q1: Vec<f64>,
    s2: Vec<f64>,
    q2: Vec<f64>,
}

impl Acc {
    fn new(d: usize) -> Self {
        Self { n: 0, s1: vec![0.0; d], q1: vec![0.0; d], s2: vec![0.0; d * d], q2: vec![0.0; d * d] }
    }

    fn push(&mut self, x: &[f64]) {
        let d = x.len();
        self.n += 1;
        for i in 0..d {
            self.s1[i] += x[i];
            self.q1[i] += x[i] * x[i];
            for j in 0..d {
                let p = x[i] * x[j];
                self.s2[i * d + j] += p;
                self.q2[i * d + j] += p * p;
            }
        }
    }

    fn merge(mut self, other: &Acc) -> Self {
        self.n += other.n;
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += b;
        }
        for (a, b) in self.q1.iter_mut().zip(&other.q1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += b;
        }
        for (a, b) in self.q2.iter_mut().zip(&other.q2) {
            *a += b;
        }
        self
    }
}

fn mean_and_se(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    let m = sum / n;
    let var = ((sum_sq - n * m * m) / (n - 1.0)).max(0.0);
    (m, (var / n).sqrt())
}

/// Rejection oracle: draw `n_mc` rows, keep those with `‖X‖ ≤ y`, average.
pub fn mc_truncated_moments(
    params: &FamilyParams,
    norm: NormKind,
    y: f64,
    n_mc: usize,
    seed: u64,
) -> Result<McMoments> {
    if n_mc < 10_000 {
        return Err(Error::InvalidParams(format!("the rejection oracle needs at least 10^4 draws, got {n_mc}")));
    }
    if !(y > 0.0) {
        return Err(Error::Domain(format!("truncation level must be positive, got {y}")));
    }
    let d = params.dim();
    let sampler = params.sampler();
    let blocks = n_mc.div_ceil(MC_BLOCK);
    let partials: Vec<Acc> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, domain::MC_MOMENTS, b as u64);
            let rows = MC_BLOCK.min(n_mc - b * MC_BLOCK);
            let mut acc = Acc::new(d);
            let mut x = vec![0.0; d];
            for _ in 0..rows {
                sampler.draw(&mut rng, &mut x);
                if norm.eval(&x) <= y {
                    acc.push(&x);
                }
            }
            acc
        })
        .collect();
    let acc = partials.iter().fold(Acc::new(d), |a, b| a.merge(b));
    let rate = acc.n as f64 / n_mc as f64;
    if rate < MIN_ACCEPTANCE || acc.n < 2 {
        return Err(Error::AcceptanceTooLow { y, rate });
    }
    let n = acc.n as f64;
    let (mu, mu_se): (Vec<f64>, Vec<f64>) = (0..d).map(|i| mean_and_se(acc.s1[i], acc.q1[i], n)).unzip();
    let (second, second_se): (Vec<f64>, Vec<f64>) =
        (0..d * d).map(|k| mean_and_se(acc.s2[k], acc.q2[k], n)).unzip();
    Ok(McMoments {
        moments: TruncatedMoments::from_conditional(y, mu, &second),
        mu_se,
        second,
        second_se,
        accepted: acc.n,
        draws: n_mc as u64,
    })
}

/// Explicit polynomial forms for the trivariate multivariate Pareto-Lomax
/// under L1: `(F(y), μ_j(y), E[Y_1²], E[Y_1 Y_2])`. Requires `α ∉ {1, 2}`.
pub fn mv_pareto_lomax_l1_d3_explicit(alpha: f64, y: f64) -> (f64, f64, f64, f64) {
    let a = alpha;
    let f = crate::families::mv_pareto_lomax_l1_d3_cdf(a, y);
    let p = (-(a + 2.0) * y.ln_1p()).exp();
    let mu = (1.0 - p * ((a + 2.0) * y * (1.0 + y * (a + 1.0) * (a * y + 3.0) / 6.0) + 1.0)) / (a - 1.0) / f;
    let poly = (a + 2.0) * y * ((a + 1.0) * y * (a * y * ((a - 1.0) * y / 24.0 + 1.0 / 6.0) + 0.5) + 1.0);
    let base = (1.0 - p * (poly + 1.0)) / ((a - 2.0) * (a - 1.0));
    (f, mu, 2.0 * base / f, base / f)
}

/// Explicit one-dimensional forms for the independent family under L∞:
/// `(μ(y), E[Y²])`. Requires `α ∉ {1, 2}`.
pub fn indep_pareto_lomax_explicit(alpha: f64, y: f64) -> (f64, f64) {
    let a = alpha;
    let u = (-a * y.ln_1p()).exp();
    let f1 = 1.0 - u;
    let mu = ((1.0 - ((1.0 - a) * y.ln_1p()).exp()) / (a - 1.0) - y * u) / f1;
    let sq = (2.0 - u * (a * y * ((a - 1.0) * y + 2.0) + 2.0)) / ((a - 2.0) * (a - 1.0)) / f1;
    (mu, sq)
}

/// Gamma-sum forms of the radial family's partial moments under L∞:
/// `(E[X_1; ·], E[X_1²; ·], E[X_1 X_2; ·])` at level `t`. Requires `α > 2`.
pub fn radial_partial_gamma_sum(alpha: f64, d: usize, t: f64) -> (f64, f64, f64) {
    let a = alpha;
    let df = d as f64;
    let du = d as u32;
    // Σ_{k≤m} Γ(α+k-s)/(Γ(k+1)Γ(α)) t^k/(1+t)^(α+k-s) = gamma_sum_survival(m+1, α-s, t) / rising(α-s, s)
    let s1 = gamma_sum_survival(du + 1, a - 1.0, t) / rising(a - 1.0, 1);
    let s2 = gamma_sum_survival(du + 2, a - 2.0, t) / rising(a - 2.0, 2);
    let inv1 = 1.0 / (a - 1.0);
    let inv2 = 1.0 / ((a - 1.0) * (a - 2.0));
    (
        (df + 1.0) / 2.0 * (inv1 - s1),
        (df + 1.0) * (df + 2.0) / 3.0 * (inv2 - s2),
        (df + 1.0) * (df + 2.0) / 4.0 * (inv2 - s2),
    )
}
