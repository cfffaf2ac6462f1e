//! Distances between empirical laws: geometric-quantile QQ tables, their
//! deviation from the diagonal, an orthant-based sup distance and the
//! log-log convergence-rate experiment built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{sample_method, sample_sum, Method, NormexConfig};
use crate::error::{Error, Result};
use crate::families::{FamilyParams, NormingShift};
use crate::geoquantile::{solve_gq, GeoQuantile, GridLevel, SolverOptions};
use crate::rng::child_seed;
use crate::sample::{NormKind, SampleMatrix};
use crate::stats::{ks_two_sample_statistic, ols};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQRow {
    pub level_index: usize,
    pub level_norm: f64,
    pub is_extreme: bool,
    pub component: usize,
    pub q_ref: f64,
    pub q_cmp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQTable {
    pub rows: Vec<QQRow>,
    /// Levels at which either solve stopped before reaching tolerance.
    pub nonconverged: usize,
}

/// Geometric quantiles of one sample at every level, solved in parallel.
pub fn quantiles_at(sample: &SampleMatrix, levels: &[GridLevel], opts: &SolverOptions) -> Result<Vec<GeoQuantile>> {
    levels.par_iter().map(|l| solve_gq(sample, &l.level, opts)).collect()
}

/// Pairs precomputed quantiles component by component.
pub fn qq_from_quantiles(levels: &[GridLevel], q_ref: &[GeoQuantile], q_cmp: &[GeoQuantile]) -> Result<QQTable> {
    if q_ref.len() != levels.len() || q_cmp.len() != levels.len() {
        return Err(Error::Dimension { expected: levels.len(), got: q_ref.len().min(q_cmp.len()) });
    }
    let mut rows = Vec::new();
    let mut nonconverged = 0;
    for ((l, a), b) in levels.iter().zip(q_ref).zip(q_cmp) {
        if a.q.len() != b.q.len() {
            return Err(Error::Dimension { expected: a.q.len(), got: b.q.len() });
        }
        if !(a.converged && b.converged) {
            nonconverged += 1;
        }
        for (c, (x, y)) in a.q.iter().zip(&b.q).enumerate() {
            rows.push(QQRow {
                level_index: l.index,
                level_norm: l.length,
                is_extreme: l.is_extreme,
                component: c,
                q_ref: *x,
                q_cmp: *y,
            });
        }
    }
    Ok(QQTable { rows, nonconverged })
}

pub fn qq_table(reference: &SampleMatrix, cmp: &SampleMatrix, levels: &[GridLevel], opts: &SolverOptions) -> Result<QQTable> {
    if reference.cols() != cmp.cols() {
        return Err(Error::Dimension { expected: reference.cols(), got: cmp.cols() });
    }
    let a = quantiles_at(reference, levels, opts)?;
    let b = quantiles_at(cmp, levels, opts)?;
    qq_from_quantiles(levels, &a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviationStats {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_rel: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineDeviation {
    pub overall: DeviationStats,
    pub extreme: DeviationStats,
    pub moderate: DeviationStats,
}

fn deviation_stats<'a>(rows: impl Iterator<Item = &'a QQRow>) -> DeviationStats {
    let mut s = DeviationStats::default();
    let mut total = 0.0;
    for r in rows {
        let dev = (r.q_cmp - r.q_ref).abs();
        s.max_abs = s.max_abs.max(dev);
        if dev > 0.0 {
            s.max_rel = s.max_rel.max(dev / r.q_ref.abs().max(f64::MIN_POSITIVE));
        }
        total += dev;
        s.rows += 1;
    }
    if s.rows > 0 {
        s.mean_abs = total / s.rows as f64;
    }
    s
}

/// `|q_cmp - q_ref|` aggregated over all rows and split by the extreme flag.
pub fn line_deviation(table: &QQTable) -> Result<LineDeviation> {
    if table.rows.is_empty() {
        return Err(Error::Empty("QQ table".into()));
    }
    Ok(LineDeviation {
        overall: deviation_stats(table.rows.iter()),
        extreme: deviation_stats(table.rows.iter().filter(|r| r.is_extreme)),
        moderate: deviation_stats(table.rows.iter().filter(|r| !r.is_extreme)),
    })
}

/// Largest gap between empirical joint cdfs over lower-left orthants with
/// corners on a grid of pooled marginal quantiles (levels 1% … 99%,
/// `grid_per_dim` per axis). In one dimension this is the exact two-sample
/// KS statistic instead. Lower-bounds the sup over convex sets.
pub fn orthant_sup_distance(a: &SampleMatrix, b: &SampleMatrix, grid_per_dim: usize) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension { expected: a.cols(), got: b.cols() });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("orthant distance sample".into()));
    }
    if grid_per_dim < 2 {
        return Err(Error::InvalidParams(format!("grid_per_dim must be at least 2, got {grid_per_dim}")));
    }
    let d = a.cols();
    if d == 1 {
        return ks_two_sample_statistic(a.as_slice(), b.as_slice());
    }
    let cells = (grid_per_dim + 1)
        .checked_pow(d as u32)
        .filter(|c| *c <= 50_000_000)
        .ok_or_else(|| Error::InvalidParams("orthant grid too large".into()))?;
    let g = grid_per_dim;
    let thresholds: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut pooled: Vec<f64> = a.iter_rows().chain(b.iter_rows()).map(|r| r[j]).collect();
            pooled.sort_by(f64::total_cmp);
            let m = pooled.len();
            (0..g)
                .map(|k| {
                    let p = 0.01 + 0.98 * k as f64 / (g - 1) as f64;
                    pooled[((p * m as f64).ceil() as usize).clamp(1, m) - 1]
                })
                .collect()
        })
        .collect();
    let cdf = |s: &SampleMatrix| -> Vec<f64> {
        let mut hist = vec![0.0f64; cells];
        for r in s.iter_rows() {
            // x_j ≤ t_k  ⇔  k ≥ c_j with c_j = #{k : t_k < x_j}
            let mut idx = 0;
            for j in 0..d {
                let c = thresholds[j].partition_point(|t| *t < r[j]);
                idx = idx * (g + 1) + c;
            }
            hist[idx] += 1.0;
        }
        // cumulative sums along every axis
        let mut stride = 1;
        for _ in 0..d {
            for i in 0..cells {
                if (i / stride) % (g + 1) != 0 {
                    hist[i] += hist[i - stride];
                }
            }
            stride *= g + 1;
        }
        let n = s.rows() as f64;
        hist.iter_mut().for_each(|v| *v /= n);
        hist
    };
    let fa = cdf(a);
    let fb = cdf(b);
    let mut best: f64 = 0.0;
    for i in 0..cells {
        // skip cells with any coordinate index g (beyond the last threshold)
        let mut k = i;
        let mut inside = true;
        for _ in 0..d {
            if k % (g + 1) == g {
                inside = false;
                break;
            }
            k /= g + 1;
        }
        if inside {
            best = best.max((fa[i] - fb[i]).abs());
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRate {
    pub method: Method,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub theoretical_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub methods: Vec<MethodRate>,
    /// Distance between two independent direct-sum samples at each `n`.
    pub noise_floor: Vec<RatePoint>,
    pub count: usize,
    pub grid_per_dim: usize,
}

impl RateReport {
    pub fn method(&self, m: Method) -> Option<&MethodRate> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn mean_noise_floor(&self) -> f64 {
        self.noise_floor.iter().map(|p| p.distance).sum::<f64>() / self.noise_floor.len().max(1) as f64
    }
}

/// Leading theoretical decay exponent of the distance to the sum's law, for `α ∈ (2, 3)`.
pub fn theoretical_exponent(method: Method, alpha: f64) -> Option<f64> {
    if !(alpha > 2.0 && alpha < 3.0) {
        return None;
    }
    match method {
        Method::Clt => Some(-(alpha - 2.0) / 2.0),
        Method::DNormex | Method::MrvNormex => Some(-(0.5 - (3.0 - alpha) / alpha)),
        Method::DirectSum => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub family: FamilyParams,
    pub norm: NormKind,
    pub methods: Vec<Method>,
    pub n_list: Vec<usize>,
    pub count: usize,
    pub seed: u64,
    pub grid_per_dim: usize,
    #[serde(default)]
    pub shift: NormingShift,
}

/// For each `n`, the orthant distance of every method's sample to a direct-sum
/// sample, plus the direct-sum-vs-direct-sum noise floor; slopes by OLS on log-log.
pub fn rate_experiment(spec: &RateSpec) -> Result<RateReport> {
    if spec.n_list.len() < 2 || spec.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("n_list needs at least two strictly increasing values".into()));
    }
    if spec.methods.contains(&Method::DirectSum) {
        return Err(Error::InvalidParams("DirectSum is the reference, not a compared method".into()));
    }
    let mut dist: Vec<Vec<RatePoint>> = vec![Vec::new(); spec.methods.len()];
    let mut noise = Vec::new();
    for &n in &spec.n_list {
        let at = |tag: u64| {
            let mut c = NormexConfig::new(spec.family, spec.norm, n, spec.count, child_seed(spec.seed, (n as u64) << 8 | tag));
            c.seed = child_seed(c.seed, tag);
            c.shift = spec.shift;
            c
        };
        for m in &spec.methods {
            at(0).validate(*m)?;
        }
        let reference = sample_sum(&at(0))?.sample;
        {
            let other = sample_sum(&at(1))?.sample;
            noise.push(RatePoint { n, distance: orthant_sup_distance(&reference, &other, spec.grid_per_dim)? });
        }
        for (k, m) in spec.methods.iter().enumerate() {
            let s = sample_method(&at(2 + k as u64), *m)?.sample;
            dist[k].push(RatePoint { n, distance: orthant_sup_distance(&reference, &s, spec.grid_per_dim)? });
        }
    }
    let methods = spec
        .methods
        .iter()
        .zip(dist)
        .map(|(m, points)| {
            let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
            let y: Vec<f64> = points.iter().map(|p| p.distance.max(f64::MIN_POSITIVE).ln()).collect();
            let fit = ols(&x, &y)?;
            Ok(MethodRate {
                method: *m,
                points,
                slope: fit.slope,
                slope_se: fit.slope_se,
                intercept: fit.intercept,
                theoretical_slope: theoretical_exponent(*m, spec.family.alpha()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport { methods, noise_floor: noise, count: spec.count, grid_per_dim: spec.grid_per_dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoquantile::level_grid;

    fn grid_sample(seed: u64, rows: usize, d: usize, shift: f64) -> SampleMatrix {
        let p = FamilyParams::indep_pareto_lomax(3.0, d).unwrap();
        let s = p.sample(rows, seed).unwrap();
        s.map_rows(|a, b| b.iter_mut().zip(a).for_each(|(o, v)| *o = v + shift)).unwrap()
    }

    #[test]
    fn identical_and_shifted_tables() {
        let a = grid_sample(1, 400, 2, 0.0);
        let levels = level_grid(2).unwrap();
        let opts = SolverOptions::default();
        let t = qq_table(&a, &a, &levels, &opts).unwrap();
        assert_eq!(t.rows.len(), 145 * 2);
        assert!(t.rows.iter().all(|r| r.q_ref == r.q_cmp));
        let dev = line_deviation(&t).unwrap();
        assert_eq!((dev.overall.max_abs, dev.overall.mean_abs, dev.overall.max_rel), (0.0, 0.0, 0.0));

        let b = a.map_rows(|x, y| y.iter_mut().zip(x).for_each(|(o, v)| *o = v + 1.0)).unwrap();
        let t = qq_table(&a, &b, &levels, &opts).unwrap();
        for r in &t.rows {
            assert!((r.q_cmp - r.q_ref - 1.0).abs() < 1e-6);
        }
        assert!((line_deviation(&t).unwrap().overall.max_abs - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthant_distance_edges() {
        let a = grid_sample(3, 500, 2, 0.0);
        assert_eq!(orthant_sup_distance(&a, &a, 20).unwrap(), 0.0);
        let u = |seed| {
            let s = FamilyParams::indep_pareto_lomax(50.0, 3).unwrap().sample(300, seed).unwrap();
            s.map_rows(|x, y| y.iter_mut().zip(x).for_each(|(o, v)| *o = v.min(1.0))).unwrap()
        };
        let lo = u(1);
        let hi = u(2).map_rows(|x, y| y.iter_mut().zip(x).for_each(|(o, v)| *o = v + 10.0)).unwrap();
        assert_eq!(orthant_sup_distance(&lo, &hi, 10).unwrap(), 1.0);
        let b = grid_sample(4, 700, 2, 0.0);
        let ab = orthant_sup_distance(&a, &b, 30).unwrap();
        assert_eq!(ab, orthant_sup_distance(&b, &a, 30).unwrap());
        assert!(ab > 0.0 && ab <= 1.0);
    }

    #[test]
    fn orthant_distance_matches_brute_force() {
        let a = grid_sample(5, 200, 3, 0.0);
        let b = grid_sample(6, 150, 3, 0.2);
        let g = 7;
        let got = orthant_sup_distance(&a, &b, g).unwrap();
        // brute force over the same corners
        let thr: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                let mut p: Vec<f64> = a.iter_rows().chain(b.iter_rows()).map(|r| r[j]).collect();
                p.sort_by(f64::total_cmp);
                (0..g)
                    .map(|k| {
                        let q = 0.01 + 0.98 * k as f64 / (g - 1) as f64;
                        p[((q * p.len() as f64).ceil() as usize).clamp(1, p.len()) - 1]
                    })
                    .collect()
            })
            .collect();
        let f = |s: &SampleMatrix, t: &[f64]| {
            s.iter_rows().filter(|r| r.iter().zip(t).all(|(x, c)| x <= c)).count() as f64 / s.rows() as f64
        };
        let mut want: f64 = 0.0;
        for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    let t = [thr[0][i], thr[1][j], thr[2][k]];
                    want = want.max((f(&a, &t) - f(&b, &t)).abs());
                }
            }
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn exponents() {
        assert!((theoretical_exponent(Method::Clt, 2.3).unwrap() + 0.15).abs() < 1e-12);
        assert!((theoretical_exponent(Method::DNormex, 2.3).unwrap() + 0.1957).abs() < 1e-4);
        assert!(theoretical_exponent(Method::Clt, 1.5).is_none());
    }
}
