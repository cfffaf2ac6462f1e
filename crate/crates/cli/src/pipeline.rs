//! The experiment pipeline: sample, optional moment checks, geometric
//! quantiles, QQ tables, deviations, optional rate experiment, plots and the
//! run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use normex_core::compare::{qq_from_quantiles, quantiles_at};
use normex_core::rng::{child_seed, DERIVATION_RULE};
use normex_core::{
    line_deviation, mc_truncated_moments, rate_experiment, sample_method, truncated_moments, FamilyParams,
    GeoQuantile, LineDeviation, Method, NormKind, QQRow, RateReport, RateSpec, SolverOptions, SumMetadata,
};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::{self, MomentRow};
use crate::svg;

/// Seed tags under the configured base seed.
pub mod seed_tags {
    use normex_core::Method;

    pub const REFERENCE: u64 = 0x100;
    pub const MOMENTS: u64 = 0x200;
    pub const RATES: u64 = 0x300;

    pub fn method(m: Method) -> u64 {
        match m {
            Method::DirectSum => 0x101,
            Method::Clt => 0x102,
            Method::DNormex => 0x103,
            Method::MrvNormex => 0x104,
        }
    }
}

/// `|z|` above which a closed-form moment is flagged against its oracle.
pub const MOMENT_Z_LIMIT: f64 = 4.0;
/// Fraction of rows redrawn below `y_floor` above which a run is flagged.
pub const Y_FLOOR_RATE_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub moments: bool,
    pub qq: bool,
    pub rates: bool,
    pub plots: bool,
}

impl Stages {
    /// What `run` does for a given configuration.
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self { moments: c.moment_checks.is_some(), qq: true, rates: c.rate_n_list.is_some(), plots: c.plots }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedInfo {
    pub base: u64,
    pub derivation_rule: String,
    pub samples: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantileInfo {
    pub sample: String,
    pub levels: usize,
    pub nonconverged: usize,
    pub at_data_point: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: SeedInfo,
    pub stages: Vec<StageTime>,
    pub samples: Vec<SumMetadata>,
    pub quantiles: Vec<QuantileInfo>,
    pub deviations: BTreeMap<String, LineDeviation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateReport>,
    pub artifacts: Vec<String>,
    pub anomalies: Vec<String>,
    pub exit_status: i32,
}

pub struct Outcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

impl Outcome {
    pub fn exit_status(&self) -> i32 {
        self.manifest.exit_status
    }
}

struct Run<'a> {
    exp: &'a Experiment,
    out: &'a Path,
    manifest: RunManifest,
    clock: Instant,
}

impl<'a> Run<'a> {
    fn stage_done(&mut self, stage: &str) {
        let now = Instant::now();
        self.manifest.stages.push(StageTime { stage: stage.into(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        output::write_atomic(&self.out.join(name), bytes)?;
        self.manifest.artifacts.push(name.into());
        Ok(())
    }

    fn anomaly(&mut self, what: String) {
        self.manifest.anomalies.push(what);
    }
}

pub fn method_seed(base: u64, m: Method) -> u64 {
    child_seed(base, seed_tags::method(m))
}

pub fn reference_seed(base: u64) -> u64 {
    child_seed(base, seed_tags::REFERENCE)
}

/// Closed-form truncated moments against the rejection oracle at each level.
pub fn moment_rows(
    family: &FamilyParams,
    norm: NormKind,
    levels: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    let d = family.dim();
    let mut rows = Vec::new();
    for (k, &y) in levels.iter().enumerate() {
        let tm = truncated_moments(family, norm, y)?;
        let mc = mc_truncated_moments(family, norm, y, draws, child_seed(seed, k as u64))?;
        let mut push = |quantity: String, closed: f64, oracle: f64, se: f64| {
            rows.push(MomentRow { y, quantity, closed_form: closed, oracle, oracle_se: se, z: (closed - oracle) / se });
        };
        for i in 0..d {
            push(format!("mu_{i}"), tm.mu[i], mc.moments.mu[i], mc.mu_se[i]);
        }
        for i in 0..d {
            for j in i..d {
                push(format!("E[Y{i}Y{j}]"), tm.second_moment(i, j), mc.second[i * d + j], mc.second_se[i * d + j]);
            }
        }
    }
    Ok(rows)
}

fn quantile_info(sample: &str, qs: &[GeoQuantile]) -> QuantileInfo {
    QuantileInfo {
        sample: sample.into(),
        levels: qs.len(),
        nonconverged: qs.iter().filter(|q| !q.converged).count(),
        at_data_point: qs.iter().filter(|q| q.at_data_point).count(),
        iterations: qs.iter().map(|q| q.iterations).sum(),
    }
}

pub fn qq_file_name(m: Method) -> String {
    format!("qq_{}.csv", m.name())
}

/// Writes one SVG per component next to `csv_name` and returns their names.
pub fn plot_rows(out: &Path, stem: &str, title: &str, rows: &[QQRow]) -> Result<Vec<String>> {
    let mut comps: Vec<usize> = rows.iter().map(|r| r.component).collect();
    comps.sort_unstable();
    comps.dedup();
    let mut names = Vec::new();
    for c in comps {
        let subset: Vec<&QQRow> = rows.iter().filter(|r| r.component == c).collect();
        let svg = svg::qq_scatter(&format!("{title}, component {c}"), "direct sum quantile", "approximation quantile", &subset);
        let name = format!("{stem}_{c}.svg");
        output::write_atomic(&out.join(&name), svg.as_bytes())?;
        names.push(name);
    }
    Ok(names)
}

pub fn execute(exp: &Experiment, command: &str, stages: Stages) -> Result<Outcome> {
    let cfg = &exp.config;
    if stages.qq && exp.levels.is_empty() {
        return Err(CliError::Config(format!(
            "the paper grid is defined for d in {{2, 3}}; give explicit levels for d = {}",
            exp.family.dim()
        )));
    }
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("output directory {}: {e}", out.display())))?;
    let mut samples = BTreeMap::new();
    if stages.qq {
        samples.insert("reference".to_string(), reference_seed(cfg.seed));
        for m in &cfg.methods {
            samples.insert(m.name().to_string(), method_seed(cfg.seed, *m));
        }
    }
    let mut run = Run {
        exp,
        out,
        clock: Instant::now(),
        manifest: RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: cfg.clone(),
            seeds: SeedInfo {
                base: cfg.seed,
                derivation_rule: format!(
                    "sample seed = splitmix64(base ^ rotl(tag, 32)) with tags reference=0x100, DirectSum=0x101, CLT=0x102, DNormex=0x103, MRVNormex=0x104, moments=0x200, rates=0x300; rows use {DERIVATION_RULE}"
                ),
                samples,
                moments: stages.moments.then(|| child_seed(cfg.seed, seed_tags::MOMENTS)),
                rates: stages.rates.then(|| child_seed(cfg.seed, seed_tags::RATES)),
            },
            stages: Vec::new(),
            samples: Vec::new(),
            quantiles: Vec::new(),
            deviations: BTreeMap::new(),
            rates: None,
            artifacts: Vec::new(),
            anomalies: Vec::new(),
            exit_status: 0,
        },
    };

    if stages.moments {
        if let Some(mc) = &cfg.moment_checks {
            let rows = moment_rows(&exp.family, cfg.norm, &mc.levels, mc.draws, child_seed(cfg.seed, seed_tags::MOMENTS))?;
            for r in rows.iter().filter(|r| !(r.z.abs() <= MOMENT_Z_LIMIT)) {
                run.anomaly(format!("moment check: {} at y = {} differs from the oracle by {:.2} SE", r.quantity, r.y, r.z));
            }
            run.write("moments.csv", &output::moments_csv(&rows)?)?;
            run.stage_done("moments");
        }
    }

    if stages.qq {
        qq_stage(&mut run, stages.plots)?;
    }

    if stages.rates {
        if let Some(n_list) = &cfg.rate_n_list {
            let spec = RateSpec {
                family: exp.family,
                norm: cfg.norm,
                methods: exp.approximations(),
                n_list: n_list.clone(),
                count: cfg.rate_count.unwrap_or(cfg.count),
                seed: child_seed(cfg.seed, seed_tags::RATES),
                grid_per_dim: cfg.grid_per_dim,
                shift: cfg.shift,
            };
            let report = rate_experiment(&spec)?;
            run.write("rates.csv", &output::rates_csv(&report)?)?;
            run.manifest.rates = Some(report);
            run.stage_done("rates");
        }
    }

    let status = if run.manifest.anomalies.is_empty() { 0 } else { 1 };
    run.manifest.exit_status = status;
    let manifest_path = out.join("manifest.json");
    let json = serde_json::to_vec_pretty(&run.manifest)?;
    output::write_atomic(&manifest_path, &json)?;
    Ok(Outcome { manifest: run.manifest, manifest_path })
}

fn qq_stage(run: &mut Run<'_>, plots: bool) -> Result<()> {
    let exp = run.exp;
    let cfg = &exp.config;
    let opts = SolverOptions::default();

    let reference = sample_method(&exp.engine_config(cfg.n, cfg.count, reference_seed(cfg.seed)), Method::DirectSum)?;
    let mut others = Vec::new();
    for m in &cfg.methods {
        others.push((*m, sample_method(&exp.engine_config(cfg.n, cfg.count, method_seed(cfg.seed, *m)), *m)?));
    }
    run.manifest.samples.push(reference.meta.clone());
    for (m, s) in &others {
        run.manifest.samples.push(s.meta.clone());
        let meta = &s.meta;
        if meta.factorization_failures > 0 {
            run.anomaly(format!("{m}: {} rows redrawn after factorization failure", meta.factorization_failures));
        }
        if meta.y_floor_hits as f64 > Y_FLOOR_RATE_LIMIT * meta.count as f64 {
            run.anomaly(format!("{m}: {} rows redrawn below y_floor", meta.y_floor_hits));
        }
    }
    run.stage_done("sample");

    let q_ref = quantiles_at(&reference.sample, &exp.levels, &opts)?;
    run.manifest.quantiles.push(quantile_info("reference", &q_ref));
    let mut tables = Vec::new();
    for (m, s) in &others {
        let q = quantiles_at(&s.sample, &exp.levels, &opts)?;
        run.manifest.quantiles.push(quantile_info(m.name(), &q));
        tables.push((*m, qq_from_quantiles(&exp.levels, &q_ref, &q)?));
    }
    let nonconv: usize = run.manifest.quantiles.iter().map(|q| q.nonconverged).sum();
    if nonconv > 0 {
        run.anomaly(format!("{nonconv} geometric-quantile solves did not reach tolerance"));
    }
    run.stage_done("geoquantiles");

    let mut dev_rows = Vec::new();
    for (m, t) in &tables {
        run.write(&qq_file_name(*m), &output::qq_csv(&t.rows)?)?;
        let dev = line_deviation(t)?;
        dev_rows.extend(output::deviation_rows(*m, &dev));
        run.manifest.deviations.insert(m.name().into(), dev);
    }
    run.write("deviations.csv", &output::deviations_csv(&dev_rows)?)?;
    run.stage_done("qq");

    if plots {
        for (m, t) in &tables {
            let names = plot_rows(run.out, &format!("qq_{}", m.name()), &format!("{m} vs direct sum"), &t.rows)?;
            run.manifest.artifacts.extend(names);
        }
        run.stage_done("plots");
    }
    Ok(())
}

pub fn child_moment_seed(base: u64) -> u64 {
    child_seed(base, seed_tags::MOMENTS)
}
