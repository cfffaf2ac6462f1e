//! Generators for the law of `S_n = X_1 + … + X_n`: direct summation, the
//! Gaussian CLT baseline, d-Normex (exact maximum plus a Gaussian with
//! truncated moments) and MRV-Normex (Fréchet norm times limiting direction
//! plus the same Gaussian).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{frechet_quantile, FamilyParams, NormingConstants, NormingShift};
use crate::moments::{truncated_moments, unconditional_moments};
use crate::rng::{domain, substream};
use crate::sample::{NormKind, SampleMatrix};

pub const DEFAULT_Y_FLOOR: f64 = 1e-8;

const ROW_BLOCK: usize = 256;

/// Consecutive failed attempts tolerated for one output row.
const MAX_ROW_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    DirectSum,
    #[serde(rename = "CLT")]
    Clt,
    DNormex,
    #[serde(rename = "MRVNormex")]
    MrvNormex,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DirectSum, Method::Clt, Method::DNormex, Method::MrvNormex];

    pub fn name(self) -> &'static str {
        match self {
            Method::DirectSum => "DirectSum",
            Method::Clt => "CLT",
            Method::DNormex => "DNormex",
            Method::MrvNormex => "MRVNormex",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormexConfig {
    pub family: FamilyParams,
    pub norm: NormKind,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub y_floor: f64,
    pub shift: NormingShift,
}

impl NormexConfig {
    pub fn new(family: FamilyParams, norm: NormKind, n: usize, count: usize, seed: u64) -> Self {
        Self { family, norm, n, count, seed, y_floor: DEFAULT_Y_FLOOR, shift: NormingShift::MinusOne }
    }

    /// Checks every precondition of `method` without sampling.
    pub fn validate(&self, method: Method) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParams("count must be at least 1".into()));
        }
        if !(self.y_floor > 0.0 && self.y_floor.is_finite()) {
            return Err(Error::InvalidParams(format!("y_floor must be positive, got {}", self.y_floor)));
        }
        match method {
            Method::DirectSum => {
                if self.n == 0 {
                    return Err(Error::InvalidParams("n must be at least 1".into()));
                }
            }
            _ => {
                if self.n < 2 {
                    return Err(Error::InvalidParams(format!("{method} needs n >= 2, got {}", self.n)));
                }
            }
        }
        match method {
            Method::DirectSum => Ok(()),
            Method::Clt => unconditional_moments(&self.family).map(|_| ()),
            Method::DNormex => truncated_moments(&self.family, self.norm, 1.0).map(|_| ()),
            Method::MrvNormex => {
                self.family.theta_sampler(self.norm)?;
                self.family.norming_constants(self.norm, self.n as u64, self.shift)?;
                truncated_moments(&self.family, self.norm, 1.0).map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumMetadata {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub count: usize,
    pub norming: Option<NormingConstants>,
    pub y_floor: f64,
    /// Rows redrawn because the conditioning norm fell below `y_floor`.
    pub y_floor_hits: u64,
    /// Covariance factorizations that needed diagonal jitter.
    pub jitter_events: u64,
    /// Rows redrawn because factorization failed even with jitter.
    pub factorization_failures: u64,
}

#[derive(Debug, Clone)]
pub struct SumSample {
    pub sample: SampleMatrix,
    pub meta: SumMetadata,
}

/// Mean and lower Cholesky factor of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    pub mean: Vec<f64>,
    /// Row-major lower triangle, `d x d`.
    pub lower: Vec<f64>,
    pub jittered: bool,
}

impl GaussianFactor {
    /// Factors `cov` (row-major), adding `1e-12 · trace` to the diagonal once
    /// if the plain factorization fails.
    pub fn new(mean: Vec<f64>, cov: &[f64], y: f64) -> Result<Self> {
        let d = mean.len();
        let m = DMatrix::from_row_slice(d, d, cov);
        if let Some(ch) = m.clone().cholesky() {
            return Ok(Self { lower: row_major(&ch.l()), mean, jittered: false });
        }
        let jitter = 1e-12 * m.trace().abs().max(f64::MIN_POSITIVE);
        let mj = m + DMatrix::identity(d, d) * jitter;
        match mj.cholesky() {
            Some(ch) => Ok(Self { lower: row_major(&ch.l()), mean, jittered: true }),
            None => Err(Error::Factorization { y }),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes `mean + L ξ` into `out`, with `ξ` standard normal.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut xi = [0.0f64; 16];
        let mut xi_vec;
        let xi: &mut [f64] = if d <= xi.len() {
            &mut xi[..d]
        } else {
            xi_vec = vec![0.0; d];
            &mut xi_vec
        };
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let mut s = self.mean[i];
            for (k, xk) in xi.iter().enumerate().take(i + 1) {
                s += self.lower[i * d + k] * xk;
            }
            out[i] = s;
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Gaussian with mean `(n-1) μ(y)` and covariance `(n-1) Σ(y)`.
pub fn conditional_factor(params: &FamilyParams, norm: NormKind, y: f64, n: usize) -> Result<GaussianFactor> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("n must be at least 2, got {n}")));
    }
    let tm = truncated_moments(params, norm, y)?;
    let k = (n - 1) as f64;
    let mean = tm.mu.iter().map(|v| k * v).collect();
    let cov: Vec<f64> = tm.sigma.iter().map(|v| k * v).collect();
    GaussianFactor::new(mean, &cov, y)
}

/// One draw of the conditional Gaussian at norm level `y`.
pub fn conditional_gaussian(y: f64, n: usize, params: &FamilyParams, norm: NormKind, seed: u64) -> Result<Vec<f64>> {
    let f = conditional_factor(params, norm, y, n)?;
    let mut rng = substream(seed, domain::GAUSSIAN, 0);
    let mut out = vec![0.0; f.dim()];
    f.draw(&mut rng, &mut out);
    Ok(out)
}

/// Index of the row of largest norm, lowest index on ties.
pub fn select_max(rows: &[f64], d: usize, norm: NormKind) -> usize {
    let mut best = 0;
    let mut best_norm = f64::NEG_INFINITY;
    for (i, r) in rows.chunks_exact(d).enumerate() {
        let v = norm.eval(r);
        if v > best_norm {
            best_norm = v;
            best = i;
        }
    }
    best
}

#[derive(Default, Clone, Copy)]
struct Counters {
    floor: u64,
    jitter: u64,
    fact_fail: u64,
}

impl Counters {
    fn add(self, o: Counters) -> Counters {
        Counters { floor: self.floor + o.floor, jitter: self.jitter + o.jitter, fact_fail: self.fact_fail + o.fact_fail }
    }
}

/// Fills `count` rows in parallel; `row_fn(row_index, out)` owns all randomness of a row.
fn fill_rows<F>(count: usize, d: usize, row_fn: F) -> Result<(SampleMatrix, Counters)>
where
    F: Fn(u64, &mut [f64]) -> Result<Counters> + Sync,
{
    let mut data = vec![0.0; count * d];
    let per_block: Vec<Result<Counters>> = data
        .par_chunks_mut(ROW_BLOCK * d)
        .enumerate()
        .map(|(b, chunk)| {
            let mut c = Counters::default();
            for (k, row) in chunk.chunks_exact_mut(d).enumerate() {
                c = c.add(row_fn((b * ROW_BLOCK + k) as u64, row)?);
            }
            Ok(c)
        })
        .collect();
    let mut total = Counters::default();
    for c in per_block {
        total = total.add(c?);
    }
    let sample = SampleMatrix::from_vec(count, d, data)?;
    Ok((sample, total))
}

fn finish(cfg: &NormexConfig, method: Method, norming: Option<NormingConstants>, out: (SampleMatrix, Counters)) -> SumSample {
    let (sample, c) = out;
    SumSample {
        sample,
        meta: SumMetadata {
            method,
            seed: cfg.seed,
            n: cfg.n,
            count: cfg.count,
            norming,
            y_floor: cfg.y_floor,
            y_floor_hits: c.floor,
            jitter_events: c.jitter,
            factorization_failures: c.fact_fail,
        },
    }
}

pub fn sample_method(cfg: &NormexConfig, method: Method) -> Result<SumSample> {
    match method {
        Method::DirectSum => sample_sum(cfg),
        Method::Clt => sample_clt(cfg),
        Method::DNormex => sample_d_normex(cfg),
        Method::MrvNormex => sample_mrv_normex(cfg),
    }
}

/// Exact sums of `n` fresh family draws.
pub fn sample_sum(cfg: &NormexConfig) -> Result<SumSample> {
    cfg.validate(Method::DirectSum)?;
    let d = cfg.family.dim();
    let sampler = cfg.family.sampler();
    let out = fill_rows(cfg.count, d, |row, out| {
        let mut rng = substream(cfg.seed, domain::SUM, row);
        let mut x = vec![0.0; d];
        out.fill(0.0);
        for _ in 0..cfg.n {
            sampler.draw(&mut rng, &mut x);
            for (o, v) in out.iter_mut().zip(&x) {
                *o += v;
            }
        }
        Ok(Counters::default())
    })?;
    Ok(finish(cfg, Method::DirectSum, None, out))
}

/// Gaussian with mean `n · E[X]` and covariance `n · Cov(X)`.
pub fn sample_clt(cfg: &NormexConfig) -> Result<SumSample> {
    cfg.validate(Method::Clt)?;
    let um = unconditional_moments(&cfg.family)?;
    let nf = cfg.n as f64;
    let mean = um.mean.iter().map(|v| nf * v).collect();
    let cov: Vec<f64> = um.cov.iter().map(|v| nf * v).collect();
    let g = GaussianFactor::new(mean, &cov, f64::INFINITY)?;
    let jitter = g.jittered as u64;
    let out = fill_rows(cfg.count, cfg.family.dim(), |row, out| {
        let mut rng = substream(cfg.seed, domain::CLT, row);
        g.draw(&mut rng, out);
        Ok(Counters::default())
    })?;
    let mut s = finish(cfg, Method::Clt, None, out);
    s.meta.jitter_events = jitter;
    Ok(s)
}

/// Exact norm-maximum of `n` draws plus the conditional Gaussian at its norm.
pub fn sample_d_normex(cfg: &NormexConfig) -> Result<SumSample> {
    cfg.validate(Method::DNormex)?;
    let d = cfg.family.dim();
    let sampler = cfg.family.sampler();
    let out = fill_rows(cfg.count, d, |row, out| {
        let mut rng = substream(cfg.seed, domain::D_NORMEX_MAX, row);
        let mut grng = substream(cfg.seed, domain::D_NORMEX_GAUSS, row);
        let mut draws = vec![0.0; cfg.n * d];
        let mut c = Counters::default();
        for _ in 0..MAX_ROW_ATTEMPTS {
            for x in draws.chunks_exact_mut(d) {
                sampler.draw(&mut rng, x);
            }
            let k = select_max(&draws, d, cfg.norm);
            let xmax = &draws[k * d..(k + 1) * d];
            let y = cfg.norm.eval(xmax);
            if y < cfg.y_floor {
                c.floor += 1;
                continue;
            }
            let g = match conditional_factor(&cfg.family, cfg.norm, y, cfg.n) {
                Ok(g) => g,
                Err(Error::Factorization { .. }) => {
                    c.fact_fail += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            c.jitter += g.jittered as u64;
            g.draw(&mut grng, out);
            for (o, v) in out.iter_mut().zip(xmax) {
                *o += v;
            }
            return Ok(c);
        }
        Err(Error::Domain(format!("row {row}: no admissible draw in {MAX_ROW_ATTEMPTS} attempts")))
    })?;
    Ok(finish(cfg, Method::DNormex, None, out))
}

/// `y Θ + Z` with `y = a_n H + b_n`, `H` standard Fréchet(α) and `Z` the
/// conditional Gaussian at level `y`.
pub fn sample_mrv_normex(cfg: &NormexConfig) -> Result<SumSample> {
    cfg.validate(Method::MrvNormex)?;
    let d = cfg.family.dim();
    let alpha = cfg.family.alpha();
    let theta = cfg.family.theta_sampler(cfg.norm)?;
    let nc = cfg.family.norming_constants(cfg.norm, cfg.n as u64, cfg.shift)?;
    let out = fill_rows(cfg.count, d, |row, out| {
        let mut rng = substream(cfg.seed, domain::MRV_NORMEX, row);
        let mut c = Counters::default();
        let mut dir = vec![0.0; d];
        for _ in 0..MAX_ROW_ATTEMPTS {
            theta.draw(&mut rng, &mut dir);
            let u: f64 = rng.random();
            if u <= 0.0 {
                continue;
            }
            let y = nc.scale * frechet_quantile(alpha, u)? + nc.shift;
            if !(y >= cfg.y_floor) {
                c.floor += 1;
                continue;
            }
            let g = match conditional_factor(&cfg.family, cfg.norm, y, cfg.n) {
                Ok(g) => g,
                Err(Error::Factorization { .. }) => {
                    c.fact_fail += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            c.jitter += g.jittered as u64;
            g.draw(&mut rng, out);
            for (o, v) in out.iter_mut().zip(&dir) {
                *o += y * v;
            }
            return Ok(c);
        }
        Err(Error::Domain(format!("row {row}: no admissible draw in {MAX_ROW_ATTEMPTS} attempts")))
    })?;
    Ok(finish(cfg, Method::MrvNormex, Some(nc), out))
}

/// Norm levels `y = a_n H + b_n` exactly as drawn by [`sample_mrv_normex`].
pub fn mrv_levels(cfg: &NormexConfig) -> Result<Vec<f64>> {
    cfg.validate(Method::MrvNormex)?;
    let d = cfg.family.dim();
    let alpha = cfg.family.alpha();
    let theta = cfg.family.theta_sampler(cfg.norm)?;
    let nc = cfg.family.norming_constants(cfg.norm, cfg.n as u64, cfg.shift)?;
    (0..cfg.count as u64)
        .into_par_iter()
        .map(|row| {
            let mut rng = substream(cfg.seed, domain::MRV_NORMEX, row);
            let mut dir = vec![0.0; d];
            loop {
                theta.draw(&mut rng, &mut dir);
                let u: f64 = rng.random();
                if u <= 0.0 {
                    continue;
                }
                let y = nc.scale * frechet_quantile(alpha, u)? + nc.shift;
                if y >= cfg.y_floor {
                    return Ok(y);
                }
            }
        })
        .collect()
}
