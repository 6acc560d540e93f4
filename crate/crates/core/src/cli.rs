//! Command-line front end. Lives in the library so tests can drive it
//! in-process; the `causal-gap` binary only forwards its arguments.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::hsic::direction_by_dependence;
use crate::pairs::{self, Restriction};
use crate::population::{curve, Family, Fit, QuadratureConfig, Scenario};
use crate::rng::child_seed;
use crate::scoring::{gaussian_direction, verify_theorem1, Direction, Theorem1Config};
use crate::sem::{sample_bivariate, LinearSem};
use crate::specfun::NoiseSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Population totals must agree with the true total to this tolerance.
pub const THEOREM1_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "causal-gap",
    version,
    about = "Gaussian score gaps for causal direction problems"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gauss,
    GaussHet,
    Hsic,
    All,
}

impl MethodArg {
    fn expand(self) -> Vec<Method> {
        match self {
            MethodArg::Gauss => vec![Method::Gauss],
            MethodArg::GaussHet => vec![Method::GaussHet],
            MethodArg::Hsic => vec![Method::Hsic],
            MethodArg::All => vec![Method::Gauss, Method::GaussHet, Method::Hsic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Gauss,
    GaussHet,
    Hsic,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Gauss => "gauss",
            Method::GaussHet => "gauss-het",
            Method::Hsic => "hsic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    Homo,
    Het,
}

impl From<FitArg> for Fit {
    fn from(f: FitArg) -> Fit {
        match f {
            FitArg::Homo => Fit::Homoskedastic,
            FitArg::Het => Fit::Heteroskedastic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RestrictArg {
    None,
    Summer,
    First183,
}

impl From<RestrictArg> for Restriction {
    fn from(r: RestrictArg) -> Restriction {
        match r {
            RestrictArg::None => Restriction::None,
            RestrictArg::Summer => Restriction::SummerWindow,
            RestrictArg::First183 => Restriction::First183,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Uniform,
    Gaussian,
    Chi2,
    Mixed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population gap curves over a parameter grid.
    Curves(CurvesArgs),
    /// Direction analysis of one cause-effect pair.
    Pair(PairArgs),
    /// Monte Carlo replicates of the sample-level decisions.
    Simulate(SimulateArgs),
    /// Population and sample checks of the permutation-score inequality.
    #[command(name = "verify-theorem1")]
    VerifyTheorem1(VerifyArgs),
    /// Download pair files into a data directory.
    Fetch(FetchArgs),
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub scenario: String,
    /// Fixed β of the power families.
    #[arg(long)]
    pub beta: Option<f64>,
    /// `lo:hi:count[:log]`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_enum)]
    pub fit: Option<FitArg>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Pair id, looked up in the data directory.
    #[arg(long, conflicts_with = "file")]
    pub id: Option<u32>,
    /// Two-column pair file (cause first).
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    pub restrict: RestrictArg,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 499)]
    pub perms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Exponent of the power families.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "gauss")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 499)]
    pub perms: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub noise: NoiseArg,
    /// Use a chain with this weight on every edge instead of a random DAG.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Comma-separated pair ids.
    #[arg(long, value_delimiter = ',', default_value = "42,77")]
    pub ids: Vec<u32>,
    #[arg(long, default_value = pairs::DEFAULT_BASE_URL)]
    pub base_url: String,
    /// Destination (defaults to the data directory).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

/// Parses a grid spec `lo:hi:count[:log]`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::domain(format!("grid '{spec}' is not lo:hi:count[:log]"));
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(_) => return Err(bad()),
    };
    if count == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo || (log && lo <= 0.0) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else if log {
                (lo.ln() + (hi.ln() - lo.ln()) * step(i)).exp()
            } else {
                lo + (hi - lo) * step(i)
            }
        })
        .collect())
}

fn default_grid(family: Family) -> &'static str {
    if family.sweeps_nu() {
        "0.5:3:26"
    } else {
        "0.05:20:60:log"
    }
}

fn metadata_line(seed: Option<u64>, method: &str) -> String {
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    format!("# seed={seed}, version={VERSION}, method={method}\n")
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

fn cmd_curves(a: &CurvesArgs, format: Format) -> Result<String> {
    let family: Family = a.scenario.parse()?;
    let scenario = Scenario::new(family, a.beta);
    let grid = parse_grid(a.grid.as_deref().unwrap_or(default_grid(family)))?;
    let fit = a.fit.map(Fit::from).unwrap_or(family.default_fit());
    let rows = curve(&scenario, &grid, fit, &QuadratureConfig::default())?;
    match format {
        Format::Csv => {
            let mut s = String::from("param,delta,exp_delta_sq,method,fit\n");
            for r in &rows {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.param,
                    r.delta,
                    r.exp_delta_sq,
                    r.method.as_str(),
                    r.fit
                )
                .unwrap();
            }
            s.push_str(&metadata_line(None, &format!("population/{}", family.name())));
            Ok(s)
        }
        Format::Json => to_json(&json!({
            "command": "curves",
            "version": VERSION,
            "scenario": family.name(),
            "beta": scenario.beta,
            "param": scenario.param_name(),
            "fit": fit,
            "rows": rows,
        })),
    }
}

fn load_pair_for(a: &PairArgs) -> Result<(pairs::CauseEffectPair, PathBuf)> {
    if let Some(file) = &a.file {
        let meta = pairs::PairMeta::two_column(a.id.unwrap_or(0));
        return Ok((pairs::load_pair(file, &meta)?, file.clone()));
    }
    let id = a.id.ok_or_else(|| Error::domain("either --id or --file is required"))?;
    let dir = pairs::resolve_data_dir(a.data_dir.as_deref()).ok_or_else(|| {
        Error::domain(format!(
            "no data directory: pass --data-dir or set {}",
            pairs::DATA_DIR_ENV
        ))
    })?;
    let path = dir.join(pairs::pair_file_name(id));
    Ok((pairs::load_pair_by_id(&dir, id)?, path))
}

fn cmd_pair(a: &PairArgs, format: Format) -> Result<String> {
    let (raw, path) = load_pair_for(a)?;
    let restriction = Restriction::from(a.restrict);
    let pair = pairs::restrict_days(&raw, restriction)?;
    let methods = a.method.expand();
    let mut gauss = None;
    let mut gauss_het = None;
    let mut hsic = None;
    for m in &methods {
        match m {
            Method::Gauss => gauss = Some(gaussian_direction(&pair.x, &pair.y, Fit::Homoskedastic)?),
            Method::GaussHet => gauss_het = Some(gaussian_direction(&pair.x, &pair.y, Fit::Heteroskedastic)?),
            Method::Hsic => hsic = Some(direction_by_dependence(&pair.x, &pair.y, a.perms, a.seed)?),
        }
    }
    let headline = gauss.as_ref().or(gauss_het.as_ref()).map(|r| r.exp_delta_sq_hat);
    match format {
        Format::Json => to_json(&json!({
            "command": "pair",
            "version": VERSION,
            "pair_id": pair.id,
            "source": path.display().to_string(),
            "seed": a.seed,
            "perms": a.perms,
            "restriction": restriction.as_str(),
            "preprocessing": {
                "rows_in": raw.rows_in,
                "rows_dropped": raw.rows_dropped,
                "rows_used": raw.rows_used(),
                "rows_after_restriction": pair.n(),
            },
            "smoother": "local-linear regression, Gaussian kernel, leave-one-out bandwidth",
            "exp_delta_sq_hat": headline,
            "gauss": gauss,
            "gauss_het": gauss_het,
            "hsic": hsic,
        })),
        Format::Csv => {
            let mut s = String::from("method,score_fwd,score_bwd,exp_delta_sq_hat,decision,p_fwd,p_bwd\n");
            for (name, r) in [("gauss", &gauss), ("gauss-het", &gauss_het)] {
                if let Some(r) = r {
                    writeln!(
                        s,
                        "{name},{},{},{},{},,",
                        r.score_fwd, r.score_bwd, r.exp_delta_sq_hat, r.decision
                    )
                    .unwrap();
                }
            }
            if let Some(h) = &hsic {
                writeln!(
                    s,
                    "hsic,{},{},,{},{},{}",
                    h.fwd.statistic, h.bwd.statistic, h.decision, h.fwd.p_value, h.bwd.p_value
                )
                .unwrap();
            }
            s.push_str(&metadata_line(
                Some(a.seed),
                &format!("pair{}/{}", pair.id, restriction),
            ));
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimRow {
    rep: usize,
    method: &'static str,
    exp_delta_sq_hat: Option<f64>,
    decision: Direction,
}

#[derive(Debug, Clone, Serialize)]
struct SimSummary {
    method: &'static str,
    reps: usize,
    mean_exp_delta_sq_hat: Option<f64>,
    se_exp_delta_sq_hat: Option<f64>,
    freq_forward: f64,
    freq_backward: f64,
    freq_tie: f64,
}

fn simulate_model(a: &SimulateArgs) -> Result<(Scenario, f64)> {
    let family: Family = a.scenario.parse()?;
    let scenario = Scenario::new(family, a.beta);
    let param = if family.sweeps_nu() {
        a.nu.ok_or_else(|| Error::domain(format!("scenario {} needs --nu", family.name())))?
    } else {
        a.beta
            .ok_or_else(|| Error::domain(format!("scenario {} needs --beta", family.name())))?
    };
    Ok((scenario, param))
}

fn cmd_simulate(a: &SimulateArgs, format: Format) -> Result<String> {
    if a.reps == 0 {
        return Err(Error::domain("--reps must be positive"));
    }
    let (scenario, param) = simulate_model(a)?;
    let model = scenario.model(param);
    model.validate()?;
    let methods = a.method.expand();
    let per_rep: Vec<Vec<SimRow>> = (0..a.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<SimRow>> {
            let seed = child_seed(a.seed, rep as u64);
            let d = sample_bivariate(&model, a.n, seed)?;
            let (x, y) = (d.column(0), d.column(1));
            methods
                .iter()
                .map(|m| {
                    Ok(match m {
                        Method::Gauss | Method::GaussHet => {
                            let fit = if *m == Method::Gauss {
                                Fit::Homoskedastic
                            } else {
                                Fit::Heteroskedastic
                            };
                            let r = gaussian_direction(x, y, fit)?;
                            SimRow {
                                rep,
                                method: m.name(),
                                exp_delta_sq_hat: Some(r.exp_delta_sq_hat),
                                decision: r.decision,
                            }
                        }
                        Method::Hsic => {
                            let r = direction_by_dependence(x, y, a.perms, child_seed(seed, 99))?;
                            SimRow {
                                rep,
                                method: m.name(),
                                exp_delta_sq_hat: None,
                                decision: r.decision,
                            }
                        }
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SimRow> = per_rep.into_iter().flatten().collect();
    let summaries: Vec<SimSummary> = methods
        .iter()
        .map(|m| {
            let rs: Vec<&SimRow> = rows.iter().filter(|r| r.method == m.name()).collect();
            let k = rs.len() as f64;
            let freq = |d: Direction| rs.iter().filter(|r| r.decision == d).count() as f64 / k;
            let vals: Vec<f64> = rs.iter().filter_map(|r| r.exp_delta_sq_hat).collect();
            let (mean, se) = if vals.is_empty() {
                (None, None)
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let se = if vals.len() > 1 {
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
                    Some((var / vals.len() as f64).sqrt())
                } else {
                    None
                };
                (Some(mean), se)
            };
            SimSummary {
                method: m.name(),
                reps: rs.len(),
                mean_exp_delta_sq_hat: mean,
                se_exp_delta_sq_hat: se,
                freq_forward: freq(Direction::Forward),
                freq_backward: freq(Direction::Backward),
                freq_tie: freq(Direction::Tie),
            }
        })
        .collect();
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    match format {
        Format::Csv => {
            let mut s = String::from("rep,method,exp_delta_sq_hat,se,decision,freq_forward,freq_backward,freq_tie\n");
            for r in &rows {
                writeln!(
                    s,
                    "{},{},{},,{},,,",
                    r.rep,
                    r.method,
                    opt(r.exp_delta_sq_hat),
                    r.decision
                )
                .unwrap();
            }
            for m in &summaries {
                writeln!(
                    s,
                    "summary,{},{},{},,{},{},{}",
                    m.method,
                    opt(m.mean_exp_delta_sq_hat),
                    opt(m.se_exp_delta_sq_hat),
                    m.freq_forward,
                    m.freq_backward,
                    m.freq_tie
                )
                .unwrap();
            }
            s.push_str(&metadata_line(
                Some(a.seed),
                &format!("simulate/{}", scenario.family.name()),
            ));
            Ok(s)
        }
        Format::Json => to_json(&json!({
            "command": "simulate",
            "version": VERSION,
            "scenario": scenario.family.name(),
            "beta": scenario.beta,
            "param": param,
            "n": a.n,
            "seed": a.seed,
            "rows": rows,
            "summary": summaries,
        })),
    }
}

fn noise_laws(kind: NoiseArg, p: usize) -> Vec<NoiseSpec> {
    let cycle = [NoiseSpec::uniform(1.0), NoiseSpec::gaussian(1.0), NoiseSpec::chi1(1.0)];
    (0..p)
        .map(|j| match kind {
            NoiseArg::Uniform => cycle[0],
            NoiseArg::Gaussian => cycle[1],
            NoiseArg::Chi2 => cycle[2],
            NoiseArg::Mixed => cycle[j % 3],
        })
        .collect()
}

/// Returns the rendered report and whether the population check passed.
fn cmd_verify(a: &VerifyArgs, format: Format) -> Result<(String, bool)> {
    if a.p == 0 || a.p > 6 {
        return Err(Error::domain(format!("--p must be in 1..=6, got {}", a.p)));
    }
    let noises = noise_laws(a.noise, a.p);
    let sem = match a.beta {
        Some(b) => LinearSem::chain(&vec![b; a.p - 1], noises)?,
        None => LinearSem::random(a.p, noises, 1.0, a.seed)?,
    };
    let report = verify_theorem1(
        &sem,
        &Theorem1Config {
            n: a.n,
            seed: a.seed,
            bootstrap: 200,
        },
    )?;
    let ok = report.max_deviation <= THEOREM1_TOL;
    let text = match format {
        Format::Json => to_json(&json!({
            "command": "verify-theorem1",
            "version": VERSION,
            "population_check_passed": ok,
            "sem": sem,
            "report": report,
        }))?,
        Format::Csv => {
            let mut s =
                String::from("perm,population_total,deviation,conformable,witnesses,sample_gain,sample_gain_se\n");
            for r in &report.rows {
                let w: Vec<String> = r.witnesses.iter().map(|v| v.to_string()).collect();
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.perm,
                    r.population_total,
                    r.deviation,
                    r.conformable,
                    w.join(" "),
                    r.sample_gain,
                    r.sample_gain_se
                )
                .unwrap();
            }
            s.push_str(&metadata_line(Some(a.seed), &format!("verify-theorem1/p{}", a.p)));
            s
        }
    };
    Ok((text, ok))
}

fn cmd_fetch(a: &FetchArgs, format: Format) -> Result<String> {
    let dest = pairs::resolve_data_dir(a.data_dir.as_deref())
        .ok_or_else(|| Error::domain(format!("pass --data-dir or set {}", pairs::DATA_DIR_ENV)))?;
    let files = pairs::fetch_pairs(&a.ids, &a.base_url, &dest)?;
    match format {
        Format::Json => to_json(&json!({ "command": "fetch", "version": VERSION, "files": files })),
        Format::Csv => {
            let mut s = String::from("path,downloaded\n");
            for f in &files {
                writeln!(s, "{},{}", f.path.display(), f.downloaded).unwrap();
            }
            s.push_str(&metadata_line(None, "fetch"));
            Ok(s)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut h = std::io::stdout().lock();
            h.write_all(text.as_bytes())?;
            h.flush()?;
        }
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(|| {
        let (text, code) = match &cli.command {
            Command::Curves(a) => (cmd_curves(a, cli.format.unwrap_or(Format::Csv))?, 0),
            Command::Pair(a) => (cmd_pair(a, cli.format.unwrap_or(Format::Json))?, 0),
            Command::Simulate(a) => (cmd_simulate(a, cli.format.unwrap_or(Format::Csv))?, 0),
            Command::VerifyTheorem1(a) => {
                let (t, ok) = cmd_verify(a, cli.format.unwrap_or(Format::Json))?;
                (t, if ok { 0 } else { 3 })
            }
            Command::Fetch(a) => (cmd_fetch(a, cli.format.unwrap_or(Format::Json))?, 0),
        };
        emit(&text, cli.out.as_deref())?;
        Ok(code)
    })
}

/// Entry point shared by the binary: parse, run, map errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
