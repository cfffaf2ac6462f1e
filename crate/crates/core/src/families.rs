//! Heavy-tailed vector families on the positive orthant: samplers, closed-form
//! survival functions, norm distributions, Fréchet utilities, norming
//! sequences and angular (spectral) samplers.
//!
//! Supported families, all with Pareto-Lomax(α) type tails:
//!
//! * `MvParetoLomax` — joint survival `(1 + Σ xᵢ)^-α`, paired with the L1 norm.
//! * `IndepParetoLomax` — iid Pareto-Lomax(α) components, paired with L∞.
//! * `ClaytonParetoLomax` — `d = 2`, Pareto-Lomax margins tied by a survival
//!   Clayton copula with parameter θ, paired with L∞. For `αθ = 1` it
//!   coincides in law with the bivariate `MvParetoLomax`.
//! * `RadialParetoLomax` — density `∝ (1 + ‖x‖∞)^-(α+d)`, paired with L∞.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};
use crate::sample::{NormKind, SampleMatrix};
use crate::special::{beta_prime_partial, factorial, gamma_sum_survival, rising};

/// Rows per random stream in bulk sampling; fixed so output never depends on threading.
const ROWS_PER_STREAM: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    MvParetoLomax,
    IndepParetoLomax,
    ClaytonParetoLomax,
    RadialParetoLomax,
}

/// Raw, unvalidated family description as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub variant: Family,
    pub alpha: f64,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

/// Validated family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilySpec", into = "FamilySpec")]
pub struct FamilyParams {
    family: Family,
    alpha: f64,
    dim: usize,
    theta: Option<f64>,
}

impl TryFrom<FamilySpec> for FamilyParams {
    type Error = Error;

    fn try_from(s: FamilySpec) -> Result<Self> {
        FamilyParams::new(s.variant, s.alpha, s.d, s.theta)
    }
}

impl From<FamilyParams> for FamilySpec {
    fn from(p: FamilyParams) -> Self {
        FamilySpec { variant: p.family, alpha: p.alpha, d: p.dim, theta: p.theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormingConstants {
    /// a_n
    pub scale: f64,
    /// b_n
    pub shift: f64,
}

/// Choice of the location sequence b_n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormingShift {
    /// b_n = -1, exact for Pareto-Lomax margins.
    #[default]
    MinusOne,
    /// b_n = 0, the textbook choice.
    Zero,
}

impl NormingShift {
    pub fn value(self) -> f64 {
        match self {
            NormingShift::MinusOne => -1.0,
            NormingShift::Zero => 0.0,
        }
    }
}

/// Directions drawn from the raw family above a finite norm threshold.
#[derive(Debug, Clone)]
pub struct EmpiricalTheta {
    pub directions: SampleMatrix,
    pub threshold: f64,
    pub quantile_level: f64,
    pub raw_draws: usize,
}

impl FamilyParams {
    pub fn new(family: Family, alpha: f64, dim: usize, theta: Option<f64>) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParams(format!("alpha must be positive and finite, got {alpha}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be at least 1".into()));
        }
        match family {
            Family::ClaytonParetoLomax => {
                if dim != 2 {
                    return Err(Error::InvalidParams(format!("Clayton family requires d = 2, got {dim}")));
                }
                match theta {
                    Some(t) if t.is_finite() && t > 0.0 => {}
                    _ => {
                        return Err(Error::InvalidParams(
                            "Clayton family requires a positive finite theta".into(),
                        ))
                    }
                }
            }
            _ => {
                if theta.is_some() {
                    return Err(Error::InvalidParams(format!("theta is only meaningful for the Clayton family, not {family:?}")));
                }
            }
        }
        Ok(Self { family, alpha, dim, theta })
    }

    pub fn mv_pareto_lomax(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(Family::MvParetoLomax, alpha, dim, None)
    }

    pub fn indep_pareto_lomax(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(Family::IndepParetoLomax, alpha, dim, None)
    }

    pub fn clayton_pareto_lomax(alpha: f64, theta: f64) -> Result<Self> {
        Self::new(Family::ClaytonParetoLomax, alpha, 2, Some(theta))
    }

    pub fn radial_pareto_lomax(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(Family::RadialParetoLomax, alpha, dim, None)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    /// The norm for which this family has closed forms.
    pub fn natural_norm(&self) -> NormKind {
        match self.family {
            Family::MvParetoLomax => NormKind::L1,
            _ => NormKind::Linf,
        }
    }

    pub fn check_norm(&self, norm: NormKind) -> Result<()> {
        // In one dimension every norm is |x|.
        if norm == self.natural_norm() || self.dim == 1 {
            Ok(())
        } else {
            Err(Error::UnsupportedPair { family: self.family, norm })
        }
    }

    fn clayton_theta(&self) -> f64 {
        self.theta.expect("validated Clayton parameters carry theta")
    }

    // ---------------------------------------------------------------------
    // Sampling
    // ---------------------------------------------------------------------

    pub fn sampler(&self) -> FamilySampler {
        let gamma = match self.family {
            Family::ClaytonParetoLomax => Some(Gamma::new(1.0 / self.clayton_theta(), 1.0).expect("positive shape")),
            Family::RadialParetoLomax => Some(Gamma::new(self.alpha, 1.0).expect("positive shape")),
            _ => None,
        };
        let radial_shape = match self.family {
            Family::RadialParetoLomax => Some(Gamma::new(self.dim as f64, 1.0).expect("positive shape")),
            _ => None,
        };
        FamilySampler { params: *self, gamma, radial_shape }
    }

    /// `count` iid rows, deterministic in `(self, count, seed)`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        if count == 0 {
            return Err(Error::InvalidParams("count must be at least 1".into()));
        }
        let d = self.dim;
        let sampler = self.sampler();
        let mut data = vec![0.0; count * d];
        data.par_chunks_mut(ROWS_PER_STREAM * d).enumerate().for_each(|(block, chunk)| {
            let mut rng = substream(seed, domain::FAMILY, block as u64);
            for row in chunk.chunks_exact_mut(d) {
                sampler.draw(&mut rng, row);
            }
        });
        Ok(SampleMatrix::from_vec_unchecked(count, d, data))
    }

    // ---------------------------------------------------------------------
    // Closed-form distribution functions
    // ---------------------------------------------------------------------

    /// `P(X_j > x) = (1 + x)^-α` for the Pareto-Lomax-margin families.
    pub fn marginal_survival(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("marginal survival needs x >= 0, got {x}")));
        }
        match self.family {
            Family::RadialParetoLomax => Err(Error::Unsupported("closed-form marginal survival".into())),
            _ => Ok((-self.alpha * x.ln_1p()).exp()),
        }
    }

    /// `P(X_i > x_i for all i)`.
    pub fn joint_survival(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("joint survival needs nonnegative arguments".into()));
        }
        let a = self.alpha;
        match self.family {
            Family::MvParetoLomax => Ok((1.0 + x.iter().sum::<f64>()).powf(-a)),
            Family::IndepParetoLomax => Ok((-a * x.iter().map(|v| v.ln_1p()).sum::<f64>()).exp()),
            Family::ClaytonParetoLomax if x[0] == 0.0 || x[1] == 0.0 => self.marginal_survival(x[0].max(x[1])),
            Family::ClaytonParetoLomax => {
                let th = self.clayton_theta();
                // p1 + p2 - 1 written as 1 + (p1 - 1) + (p2 - 1)
                let base = 1.0 + (a * th * x[0].ln_1p()).exp_m1() + (a * th * x[1].ln_1p()).exp_m1();
                Ok(base.powf(-1.0 / th))
            }
            Family::RadialParetoLomax => Err(Error::Unsupported("closed-form joint survival".into())),
        }
    }

    /// `F_‖X‖(y)`.
    pub fn norm_cdf(&self, norm: NormKind, y: f64) -> Result<f64> {
        self.check_norm(norm)?;
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("norm cdf needs y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let a = self.alpha;
        let d = self.dim as u32;
        Ok(match self.family {
            Family::MvParetoLomax | Family::RadialParetoLomax => {
                let f = radial_density_constant(a, d) * beta_prime_partial(d, a, y);
                if f < 0.5 {
                    f
                } else {
                    1.0 - gamma_sum_survival(d, a, y)
                }
            }
            Family::IndepParetoLomax => (-(-a * y.ln_1p()).exp_m1()).powi(d as i32),
            Family::ClaytonParetoLomax => {
                // 1 - 2u + w = (1 - u)^2 - (u^2 - w), and with p = (1+y)^(αθ)
                // u^2 - w = w · expm1(ln(1 - ((p-1)/p)^2) / θ), free of cancellation.
                let th = self.clayton_theta();
                let l = a * th * y.ln_1p();
                let q = -(-l).exp_m1();
                let w = clayton_diagonal_term(l, th);
                let one_minus_u = -(-a * y.ln_1p()).exp_m1();
                one_minus_u * one_minus_u - w * ((-q * q).ln_1p() / th).exp_m1()
            }
        })
    }

    /// `P(‖X‖ > y)`, accurate in the far tail.
    pub fn norm_survival(&self, norm: NormKind, y: f64) -> Result<f64> {
        self.check_norm(norm)?;
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("norm survival needs y >= 0, got {y}")));
        }
        let a = self.alpha;
        let d = self.dim as u32;
        Ok(match self.family {
            Family::MvParetoLomax | Family::RadialParetoLomax => {
                let f = radial_density_constant(a, d) * beta_prime_partial(d, a, y);
                if f < 0.5 {
                    1.0 - f
                } else {
                    gamma_sum_survival(d, a, y)
                }
            }
            Family::IndepParetoLomax => {
                let u = (-a * y.ln_1p()).exp();
                -((d as f64) * (-u).ln_1p()).exp_m1()
            }
            Family::ClaytonParetoLomax => {
                let th = self.clayton_theta();
                2.0 * (-a * y.ln_1p()).exp() - clayton_diagonal_term(a * th * y.ln_1p(), th)
            }
        })
    }

    /// `c^α = lim y^α P(‖X‖ > y)`.
    pub fn tail_constant(&self, norm: NormKind) -> Result<f64> {
        self.check_norm(norm)?;
        let a = self.alpha;
        Ok(match self.family {
            Family::MvParetoLomax | Family::RadialParetoLomax => {
                // every term of the Gamma-sum survival decays like y^-α:
                // Σ_{k<d} Γ(α+k)/(Γ(k+1)Γ(α)) = Γ(α+d)/(Γ(d)Γ(α+1))
                let d = self.dim as u32;
                rising(a + 1.0, d - 1) / factorial(d - 1)
            }
            Family::IndepParetoLomax => self.dim as f64,
            Family::ClaytonParetoLomax => 2.0 - 2f64.powf(-1.0 / self.clayton_theta()),
        })
    }

    /// `a_n = (c^α n)^(1/α)` with the requested `b_n`.
    pub fn norming_constants(&self, norm: NormKind, n: u64, shift: NormingShift) -> Result<NormingConstants> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        let c_alpha = self.tail_constant(norm)?;
        Ok(NormingConstants { scale: (c_alpha * n as f64).powf(1.0 / self.alpha), shift: shift.value() })
    }

    // ---------------------------------------------------------------------
    // Angular measure
    // ---------------------------------------------------------------------

    /// Closed-form sampler for the limiting direction Θ, if one is known.
    pub fn theta_sampler(&self, norm: NormKind) -> Result<ThetaSampler> {
        self.check_norm(norm)?;
        let d = self.dim;
        Ok(match self.family {
            Family::IndepParetoLomax => ThetaSampler::BasisVectors { d },
            Family::MvParetoLomax => ThetaSampler::Simplex { d },
            Family::RadialParetoLomax => ThetaSampler::CubeFaces { d },
            Family::ClaytonParetoLomax => {
                let th = self.clayton_theta();
                ThetaSampler::ClaytonFaces { kappa: 1.0 / th + 1.0, inv_alpha_theta: 1.0 / (self.alpha * th) }
            }
        })
    }

    /// `count` draws of Θ on the unit sphere of `norm`.
    pub fn sample_theta(&self, norm: NormKind, count: usize, seed: u64) -> Result<SampleMatrix> {
        if count == 0 {
            return Err(Error::InvalidParams("count must be at least 1".into()));
        }
        let ts = self.theta_sampler(norm)?;
        let d = self.dim;
        let mut data = vec![0.0; count * d];
        data.par_chunks_mut(ROWS_PER_STREAM * d).enumerate().for_each(|(block, chunk)| {
            let mut rng = substream(seed, domain::THETA, block as u64);
            for row in chunk.chunks_exact_mut(d) {
                ts.draw(&mut rng, row);
            }
        });
        Ok(SampleMatrix::from_vec_unchecked(count, d, data))
    }

    /// Directions `X / ‖X‖` of raw draws whose norm exceeds the empirical
    /// `quantile_level` quantile of a pilot sample. Works for every family and
    /// norm; biased at the finite threshold, which is reported.
    pub fn sample_theta_empirical(
        &self,
        norm: NormKind,
        count: usize,
        quantile_level: f64,
        seed: u64,
    ) -> Result<EmpiricalTheta> {
        if count == 0 {
            return Err(Error::InvalidParams("count must be at least 1".into()));
        }
        if !(quantile_level > 0.0 && quantile_level < 1.0) {
            return Err(Error::InvalidParams(format!("quantile level must be in (0,1), got {quantile_level}")));
        }
        let d = self.dim;
        let pilot = ((count as f64 / (1.0 - quantile_level)).ceil() as usize).max(1000);
        let sampler = self.sampler();
        let draw_batch = |batch: u64, size: usize| -> Vec<f64> {
            let mut data = vec![0.0; size * d];
            data.par_chunks_mut(ROWS_PER_STREAM * d).enumerate().for_each(|(block, chunk)| {
                let idx = (batch << 32) | block as u64;
                let mut rng = substream(seed, domain::THETA_EMPIRICAL, idx);
                for row in chunk.chunks_exact_mut(d) {
                    sampler.draw(&mut rng, row);
                }
            });
            data
        };
        let first = draw_batch(0, pilot);
        let mut norms: Vec<f64> = first.chunks_exact(d).map(|r| norm.eval(r)).collect();
        norms.sort_by(f64::total_cmp);
        let k = ((quantile_level * pilot as f64).ceil() as usize).clamp(1, pilot) - 1;
        let threshold = norms[k];

        let mut out = Vec::with_capacity(count * d);
        let mut raw_draws = 0usize;
        let mut batch = 0u64;
        let mut data = first;
        loop {
            raw_draws += data.len() / d;
            for r in data.chunks_exact(d) {
                let nr = norm.eval(r);
                if nr > threshold {
                    out.extend(r.iter().map(|v| v / nr));
                    if out.len() == count * d {
                        return Ok(EmpiricalTheta {
                            directions: SampleMatrix::from_vec(count, d, out)?,
                            threshold,
                            quantile_level,
                            raw_draws,
                        });
                    }
                }
            }
            batch += 1;
            data = draw_batch(batch, pilot);
        }
    }
}

/// `(2p − 1)^(−1/θ)` with `p = e^l`, without overflowing for large `l`.
fn clayton_diagonal_term(l: f64, theta: f64) -> f64 {
    (-(std::f64::consts::LN_2 + l + (-0.5 * (-l).exp()).ln_1p()) / theta).exp()
}

/// `Γ(α+d) / (Γ(d) Γ(α))`, the density constant of `‖X‖` for the radial families.
pub(crate) fn radial_density_constant(alpha: f64, d: u32) -> f64 {
    rising(alpha, d) / factorial(d - 1)
}

/// Three-term norm cdf of the trivariate multivariate Pareto-Lomax under L1.
pub fn mv_pareto_lomax_l1_d3_cdf(alpha: f64, y: f64) -> f64 {
    let a = alpha;
    let l = y.ln_1p();
    -(-a * l).exp_m1() - a * y * (-(a + 1.0) * l).exp() - a * (a + 1.0) / 2.0 * y * y * (-(a + 2.0) * l).exp()
}

/// Gamma-sum norm cdf `1 - Σ_{k<d} Γ(α+k)/(Γ(k+1)Γ(α)) y^k/(1+y)^(α+k)` shared by
/// the multivariate Pareto-Lomax (L1) and radial (L∞) families.
pub fn radial_norm_cdf_gamma_sum(alpha: f64, d: usize, y: f64) -> f64 {
    1.0 - gamma_sum_survival(d as u32, alpha, y)
}

/// Per-row sampler holding the distributions a family needs.
#[derive(Debug, Clone)]
pub struct FamilySampler {
    params: FamilyParams,
    gamma: Option<Gamma<f64>>,
    radial_shape: Option<Gamma<f64>>,
}

impl FamilySampler {
    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    /// Writes one draw into `out` (length `d`).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let a = self.params.alpha;
        match self.params.family {
            Family::MvParetoLomax => {
                // X^(k+1) | X^(1..k) = (1 + x^(1) + ... + x^(k)) · Pareto-Lomax(α + k)
                let mut partial = 0.0;
                for (k, slot) in out.iter_mut().enumerate() {
                    let e: f64 = Exp1.sample(rng);
                    let v = (1.0 + partial) * (e / (a + k as f64)).exp_m1();
                    *slot = v;
                    partial += v;
                }
            }
            Family::IndepParetoLomax => {
                for slot in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *slot = (e / a).exp_m1();
                }
            }
            Family::ClaytonParetoLomax => {
                // Gamma frailty: U_i = (1 + E_i / V)^(-1/θ) has the Clayton copula as
                // its joint cdf; X_i = U_i^(-1/α) - 1 turns it into a survival copula.
                let th = self.params.clayton_theta();
                let v = self.gamma.as_ref().expect("Clayton sampler has frailty").sample(rng);
                for slot in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *slot = ((e / v).ln_1p() / (a * th)).exp_m1();
                }
            }
            Family::RadialParetoLomax => {
                // ‖X‖∞ ~ beta-prime(d, α) = Gamma(d) / Gamma(α), direction uniform on the faces.
                let num = self.radial_shape.as_ref().expect("radial sampler").sample(rng);
                let den = self.gamma.as_ref().expect("radial sampler").sample(rng);
                let r = num / den;
                let d = out.len();
                let face = rng.random_range(0..d);
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = if i == face { r } else { r * rng.random::<f64>() };
                }
            }
        }
    }
}

/// Exact samplers for the limiting direction Θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSampler {
    /// Uniform over e₁ … e_d.
    BasisVectors { d: usize },
    /// Uniform on the unit simplex (L1 sphere of the orthant).
    Simplex { d: usize },
    /// Uniform on the faces `{u_i = 1}` of the unit L∞ sphere.
    CubeFaces { d: usize },
    /// Survival-Clayton limit on the L∞ sphere in two dimensions: face chosen
    /// uniformly, free coordinate `t = s^(1/(αθ))` with `s` having density
    /// `∝ (1 + s)^-(κ+1)` on `[0, 1]`, `κ = 1/θ + 1`.
    ClaytonFaces { kappa: f64, inv_alpha_theta: f64 },
}

impl ThetaSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            ThetaSampler::BasisVectors { d } => {
                let i = rng.random_range(0..d);
                out.iter_mut().enumerate().for_each(|(j, v)| *v = if i == j { 1.0 } else { 0.0 });
            }
            ThetaSampler::Simplex { .. } => {
                let mut total = 0.0;
                for v in out.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    *v = e;
                    total += e;
                }
                out.iter_mut().for_each(|v| *v /= total);
            }
            ThetaSampler::CubeFaces { d } => {
                let face = rng.random_range(0..d);
                for (i, v) in out.iter_mut().enumerate() {
                    *v = if i == face { 1.0 } else { rng.random::<f64>() };
                }
            }
            ThetaSampler::ClaytonFaces { kappa, inv_alpha_theta } => {
                let face = rng.random_range(0..2usize);
                let t = clayton_face_quantile(kappa, inv_alpha_theta, rng.random::<f64>());
                out[face] = 1.0;
                out[1 - face] = t;
            }
        }
    }
}

/// Inverse cdf of the free coordinate on one face of the Clayton Θ law.
pub(crate) fn clayton_face_quantile(kappa: f64, inv_alpha_theta: f64, v: f64) -> f64 {
    // G(s) = (1 - (1+s)^-κ) / (1 - 2^-κ)
    let mass = -(-kappa * std::f64::consts::LN_2).exp_m1();
    let s = ((-(v * mass)).ln_1p() / -kappa).exp_m1();
    s.clamp(0.0, 1.0).powf(inv_alpha_theta)
}

/// Density of the free coordinate `t ∈ [0, 1]` on one face of the Clayton Θ law.
pub fn clayton_face_density(alpha: f64, theta: f64, t: f64) -> f64 {
    let at = alpha * theta;
    let kappa = 1.0 / theta + 1.0;
    let mass = -(-kappa * std::f64::consts::LN_2).exp_m1();
    // s = t^(αθ), ds = αθ t^(αθ-1) dt, density of s is κ (1+s)^-(κ+1) / mass
    let s = t.powf(at);
    kappa * (1.0 + s).powf(-(kappa + 1.0)) / mass * at * t.powf(at - 1.0)
}

pub fn frechet_cdf(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("Fréchet cdf needs x > 0, got {x}")));
    }
    Ok((-x.powf(-alpha)).exp())
}

pub fn frechet_quantile(alpha: f64, u: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("Fréchet quantile needs u in (0,1), got {u}")));
    }
    Ok((-u.ln()).powf(-1.0 / alpha))
}
