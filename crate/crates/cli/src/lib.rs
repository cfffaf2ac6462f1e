//! The `normex` command-line tool: seeded experiment runs that compare
//! Normex approximations with direct summation, plus one subcommand per
//! library operation.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use normex_core::geoquantile::InitRule;
use normex_core::{solve_gq, Family, FamilyParams, Level, Method, NormKind, SolverOptions};
use serde::de::DeserializeOwned;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Result};
pub use pipeline::{RunManifest, Stages};

#[derive(Debug, Parser)]
#[command(name = "normex", version, about = "Normex approximations for sums of heavy-tailed random vectors")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline described by a configuration file.
    Run(RunArgs),
    /// Write QQ tables and deviations only.
    Qq(RunArgs),
    /// Run the convergence-rate experiment only.
    Rates(RunArgs),
    /// Write one sample as CSV.
    Sample(SampleArgs),
    /// Compare closed-form truncated moments with the rejection oracle.
    Moments(MomentsArgs),
    /// Solve one geometric quantile of a CSV sample.
    Geoquantile(GeoquantileArgs),
    /// Render a QQ CSV as one SVG per component.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured sample size.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Defaults to DirectSum.
    #[arg(long, value_parser = parse_name::<Method>)]
    pub method: Option<Method>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Take the family and norm from a configuration file.
    #[arg(long, conflicts_with_all = ["variant", "alpha", "d", "theta", "norm"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_name::<Family>, requires = "alpha")]
    pub variant: Option<Family>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Defaults to the family's natural norm.
    #[arg(long, value_parser = parse_name::<NormKind>)]
    pub norm: Option<NormKind>,
    /// Truncation levels; defaults to the configured checks, or 5.
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write `moments.csv` into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GeoquantileArgs {
    /// CSV sample with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated level vector inside the unit ball.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub u: Vec<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// A `qq_<method>.csv` table.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the directory of the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses a unit enum by its configuration-file name.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(a) => {
            let exp = load_experiment(&a)?;
            let stages = Stages::from_config(&exp.config);
            finish(pipeline::execute(&exp, "run", stages)?)
        }
        Command::Qq(a) => {
            let exp = load_experiment(&a)?;
            let stages = Stages { moments: false, qq: true, rates: false, plots: exp.config.plots };
            finish(pipeline::execute(&exp, "qq", stages)?)
        }
        Command::Rates(a) => {
            let exp = load_experiment(&a)?;
            if exp.config.rate_n_list.is_none() {
                return Err(CliError::Config("rates needs rate_n_list in the configuration".into()));
            }
            let stages = Stages { moments: false, qq: false, rates: true, plots: false };
            finish(pipeline::execute(&exp, "rates", stages)?)
        }
        Command::Sample(a) => sample(a),
        Command::Moments(a) => moments(a),
        Command::Geoquantile(a) => geoquantile(a),
        Command::Plot(a) => plot(a),
    }
}

fn load_experiment(a: &RunArgs) -> Result<Experiment> {
    let mut c = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(o) = &a.out {
        c.output_dir = o.clone();
    }
    if let Some(n) = a.count {
        c.count = n;
    }
    c.validate()
}

fn finish(outcome: pipeline::Outcome) -> Result<i32> {
    let m = &outcome.manifest;
    let dir = &m.config.output_dir;
    let mut out = std::io::stdout().lock();
    for a in &m.artifacts {
        let _ = writeln!(out, "{}", dir.join(a).display());
    }
    let _ = writeln!(out, "{}", outcome.manifest_path.display());
    for s in &m.stages {
        eprintln!("{:>14}: {:.2} s", s.stage, s.seconds);
    }
    if m.anomalies.is_empty() {
        eprintln!("no anomalies");
    } else {
        eprintln!("{} anomalies:", m.anomalies.len());
        for a in &m.anomalies {
            eprintln!("  {a}");
        }
    }
    let jitter: u64 = m.samples.iter().map(|s| s.jitter_events).sum();
    if jitter > 0 {
        eprintln!("covariance jitter applied {jitter} times");
    }
    Ok(outcome.exit_status())
}

fn sample(a: SampleArgs) -> Result<i32> {
    let exp = load_experiment(&a.run)?;
    let cfg = &exp.config;
    let method = a.method.unwrap_or(Method::DirectSum);
    let seed = pipeline::method_seed(cfg.seed, method);
    let s = normex_core::sample_method(&exp.engine_config(cfg.n, cfg.count, seed), method)?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
    let path = dir.join(format!("sample_{}.csv", method.name()));
    output::write_atomic(&path, &output::sample_csv(&s.sample)?)?;
    println!("{}", path.display());
    eprintln!("{}", serde_json::to_string(&s.meta)?);
    Ok(0)
}

fn moments(a: MomentsArgs) -> Result<i32> {
    let (family, norm, mut levels, mut draws, mut seed) = match &a.config {
        Some(path) => {
            let exp = ExperimentConfig::load(path)?.validate()?;
            let c = &exp.config;
            let (levels, draws) = match &c.moment_checks {
                Some(mc) => (mc.levels.clone(), mc.draws),
                None => (Vec::new(), config::DEFAULT_ORACLE_DRAWS),
            };
            (exp.family, c.norm, levels, draws, pipeline::child_moment_seed(c.seed))
        }
        None => {
            let variant = a.variant.ok_or_else(|| CliError::Config("give --config or --variant and --alpha".into()))?;
            let alpha = a.alpha.ok_or_else(|| CliError::Config("--alpha is required".into()))?;
            let d = match (variant, a.d) {
                (_, Some(d)) => d,
                (Family::ClaytonParetoLomax, None) => 2,
                (_, None) => return Err(CliError::Config("--d is required".into())),
            };
            let family = FamilyParams::new(variant, alpha, d, a.theta).map_err(|e| CliError::Config(e.to_string()))?;
            let norm = a.norm.unwrap_or_else(|| family.natural_norm());
            family.check_norm(norm).map_err(|e| CliError::Config(e.to_string()))?;
            (family, norm, Vec::new(), config::DEFAULT_ORACLE_DRAWS, 0)
        }
    };
    if !a.y.is_empty() {
        levels = a.y.clone();
    }
    if levels.is_empty() {
        levels = vec![5.0];
    }
    if let Some(d) = a.draws {
        draws = d;
    }
    if let Some(s) = a.seed {
        seed = s;
    }
    for &y in &levels {
        if !(y > 0.0 && y.is_finite()) {
            return Err(CliError::Config(format!("truncation level must be positive, got {y}")));
        }
    }
    if draws < 10_000 {
        return Err(CliError::Config(format!("--draws must be at least 10000, got {draws}")));
    }
    let rows = pipeline::moment_rows(&family, norm, &levels, draws, seed)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:>10} {:>10} {:>16} {:>16} {:>12} {:>8}", "y", "quantity", "closed_form", "oracle", "oracle_se", "z");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>16.10} {:>16.10} {:>12.3e} {:>8.2}",
            r.y, r.quantity, r.closed_form, r.oracle, r.oracle_se, r.z
        );
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
        output::write_atomic(&dir.join("moments.csv"), &output::moments_csv(&rows)?)?;
    }
    let failed = rows.iter().filter(|r| !(r.z.abs() <= pipeline::MOMENT_Z_LIMIT)).count();
    if failed > 0 {
        eprintln!("{failed} of {} quantities differ from the oracle by more than {} SE", rows.len(), pipeline::MOMENT_Z_LIMIT);
        return Ok(1);
    }
    Ok(0)
}

fn geoquantile(a: GeoquantileArgs) -> Result<i32> {
    let sample = output::read_sample_csv(&a.input)?;
    if a.u.len() != sample.cols() {
        return Err(CliError::Input(format!("--u has {} entries but the sample has {} columns", a.u.len(), sample.cols())));
    }
    let level = Level::new(a.u.clone()).map_err(|e| CliError::Input(e.to_string()))?;
    let mut opts = SolverOptions { init: InitRule::Median, ..SolverOptions::default() };
    if let Some(t) = a.tolerance {
        opts.tolerance = t;
    }
    if let Some(e) = a.epsilon {
        opts.epsilon = Some(e);
    }
    if let Some(m) = a.max_iterations {
        opts.max_iterations = m;
    }
    let q = solve_gq(&sample, &level, &opts)?;
    println!("{}", serde_json::to_string_pretty(&q)?);
    Ok(if q.converged { 0 } else { 1 })
}

fn plot(a: PlotArgs) -> Result<i32> {
    let rows = output::read_qq_csv(&a.input)?;
    let dir = match &a.out {
        Some(d) => d.clone(),
        None => a.input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("qq").to_string();
    for name in pipeline::plot_rows(&dir, &stem, &stem, &rows)? {
        println!("{}", dir.join(name).display());
    }
    Ok(0)
}
