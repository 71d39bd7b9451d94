//! The `hdlp` command-line front end.
//!
//! Exit codes: 0 on success, 1 when estimation or I/O fails, 2 on usage
//! errors. Every command writes a JSON manifest next to its outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dgp::{simulate_var, table1_dgp, DEFAULT_BURN_IN};
use crate::error::{HdlpError, Result};
use crate::inference::{irf_with_bands, IrfBand, ResidualSource};
use crate::lp::{select_lag, LagSelection};
use crate::montecarlo::{run_scenario_with_workers, McScenario, McSummary};
use crate::panel::{format_f64, load_csv, standardize, CsvOptions, HeaderMode, PanelSeries};
use crate::solver::PenaltyConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable holding the default worker count of `replicate`.
pub const WORKERS_ENV: &str = "HDLP_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "hdlp", version, about = "High-dimensional local projections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the two-lag sparse VAR design and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the simulation study and write a summary table.
    Replicate(ReplicateArgs),
    /// Choose the lag order of a CSV panel by the information criterion.
    SelectLag(SelectLagArgs),
    /// Estimate impulse responses with confidence bands from a CSV panel.
    Irf(IrfArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuningArgs {
    /// Scale of the LASSO penalty rate.
    #[arg(long)]
    pub gamma_scale: Option<f64>,
    /// Scale of the lag penalty in the information criterion.
    #[arg(long)]
    pub xi_scale: Option<f64>,
    /// Exponent of the adaptive weights.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Coordinate-descent tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Coordinate-descent sweep limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl TuningArgs {
    fn apply(&self, mut cfg: PenaltyConfig) -> PenaltyConfig {
        if let Some(v) = self.gamma_scale {
            cfg.gamma_scale = v;
        }
        if let Some(v) = self.xi_scale {
            cfg.xi_scale = v;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        cfg
    }
}

fn even_positive(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n == 0 || n % 2 != 0 {
        return Err(format!("the simulation design needs a positive even N, got {n}"));
    }
    Ok(n)
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of variables (even).
    #[arg(long, value_parser = even_positive)]
    pub n: usize,
    /// Number of observations after the pre-sample row.
    #[arg(long, value_parser = positive)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplicateArgs {
    #[arg(long, value_parser = even_positive)]
    pub n: usize,
    #[arg(long, value_parser = positive)]
    pub t: usize,
    /// Number of replications.
    #[arg(long, value_parser = positive, default_value_t = 100)]
    pub r: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub horizons: Vec<usize>,
    /// Seed of replication 0; replication r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the available cores).
    #[arg(long, env = WORKERS_ENV, value_parser = positive)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub p_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub h_select: Vec<usize>,
    /// Also measure the coverage of bands at this level.
    #[arg(long, value_parser = unit_interval)]
    pub coverage_level: Option<f64>,
    /// True impulse responses up to this size count as zeros.
    #[arg(long, default_value_t = 0.0)]
    pub tol_zero: f64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderArg {
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV, one column per variable.
    #[arg(long)]
    pub data: PathBuf,
    /// The first column holds dates and is skipped.
    #[arg(long)]
    pub skip_date_column: bool,
    #[arg(long, value_enum, default_value = "auto")]
    pub header: HeaderArg,
    /// Rescale each variable to mean 0 and variance 1 before estimation.
    #[arg(long)]
    pub standardize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<PanelSeries> {
        let options = CsvOptions {
            header: match self.header {
                HeaderArg::Auto => HeaderMode::Auto,
                HeaderArg::Present => HeaderMode::Present,
                HeaderArg::Absent => HeaderMode::Absent,
            },
            skip_first_column: self.skip_date_column,
        };
        let series =
            load_csv(&self.data, &options).map_err(|e| e.context(format!("reading {}", self.data.display())))?;
        if self.standardize {
            standardize(&series)
        } else {
            Ok(series)
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectLagArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub p_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub h_select: Vec<usize>,
    /// Directory for `selection.json`; printed to stdout when absent.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IrfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Lag order.
    #[arg(long, value_parser = positive, required_unless_present = "select_lag", conflicts_with = "select_lag")]
    pub p: Option<usize>,
    /// Choose the lag order by the information criterion.
    #[arg(long)]
    pub select_lag: bool,
    #[arg(long, default_value_t = 10)]
    pub p_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub h_select: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub horizons: Vec<usize>,
    /// Band level.
    #[arg(long, value_parser = unit_interval, default_value_t = 0.90)]
    pub level: f64,
    /// Scale of the covariance threshold.
    #[arg(long, default_value_t = 2.0)]
    pub eta_scale: f64,
    /// Fit whose residuals enter the long-run covariance.
    #[arg(long, value_enum, default_value = "adaptive")]
    pub residuals: ResidualArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualArg {
    Initial,
    Adaptive,
}

/// Provenance record written beside every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    /// Parsed flags of the command.
    pub arguments: serde_json::Value,
    /// Resolved tuning constants, when the command estimates anything.
    pub config: Option<PenaltyConfig>,
    pub seeds: Vec<u64>,
    pub wall_time_secs: f64,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| HdlpError::InvalidArgument(format!("serializing output: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| HdlpError::from(e).context(format!("creating {}", path.display())))?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HdlpError::from(e).context(format!("creating {}", dir.display())))
}

struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    fn new<A: Serialize>(command: &str, argv: &[String], args: &A) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                argv: argv.to_vec(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                arguments: serde_json::to_value(args).unwrap_or(serde_json::Value::Null),
                config: None,
                seeds: Vec::new(),
                wall_time_secs: 0.0,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path).map_err(|e| e.context(format!("reading {}", path.display())))?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.manifest.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest.wall_time_secs = self.started.elapsed().as_secs_f64();
        write_text(path, &to_json(&self.manifest)?)
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("simulate", argv, args);
    manifest.manifest.seeds = vec![args.seed];
    let series = simulate_var(&table1_dgp(args.n)?, args.t, args.burn_in, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    series.save_csv(&args.out)?;
    manifest.output(&args.out)?;
    manifest.finish(&manifest_path_for(&args.out))
}

/// Summary file content: scenario plus aggregated metrics.
#[derive(Debug, Serialize)]
struct ReplicateReport<'a> {
    scenario: &'a McScenario,
    summary: &'a McSummary,
}

fn cmd_replicate(args: &ReplicateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("replicate", argv, args);
    let config = args.tuning.apply(PenaltyConfig::default());
    let scenario = McScenario {
        horizons: args.horizons.clone(),
        p_max: args.p_max,
        h_select: args.h_select.clone(),
        base_seed: args.seed,
        burn_in: args.burn_in,
        config,
        tol_zero: args.tol_zero,
        coverage_level: args.coverage_level,
        ..McScenario::table1(args.n, args.t, args.r)
    };
    scenario.validate()?;
    manifest.manifest.config = Some(config);
    manifest.manifest.seeds = (0..args.r).map(|r| args.seed.wrapping_add(r as u64)).collect();
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    log::info!("running {} replications on {workers} workers", args.r);
    let summary = run_scenario_with_workers(&scenario, workers)?;

    ensure_dir(&args.out_dir)?;
    let json_path = args.out_dir.join("summary.json");
    write_text(
        &json_path,
        &to_json(&ReplicateReport {
            scenario: &scenario,
            summary: &summary,
        })?,
    )?;
    let csv_path = args.out_dir.join("summary.csv");
    summary.write_csv(fs::File::create(&csv_path)?)?;
    manifest.output(&json_path)?;
    manifest.output(&csv_path)?;
    manifest.finish(&args.out_dir.join("manifest.json"))
}

fn cmd_select_lag(args: &SelectLagArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("select-lag", argv, args);
    let config = args.tuning.apply(PenaltyConfig::default());
    config.validate()?;
    manifest.manifest.config = Some(config);
    manifest.input(&args.data.data)?;
    let series = args.data.load()?;
    let selection = select_lag(&series, &args.h_select, args.p_max, &config)?;
    let json = to_json(&selection)?;
    match &args.out_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            let path = dir.join("selection.json");
            write_text(&path, &json)?;
            manifest.output(&path)?;
            manifest.finish(&dir.join("manifest.json"))
        }
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

/// One horizon of the `irf` JSON output; matrices are row-major, rows are
/// responses and columns are shocks.
#[derive(Debug, Serialize)]
struct IrfHorizonJson {
    horizon: usize,
    gamma: f64,
    eta: f64,
    effective_obs: usize,
    point: Vec<Vec<f64>>,
    adaptive: Vec<Vec<f64>>,
    se: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
    selected: Vec<Vec<bool>>,
    clamped: Vec<Vec<bool>>,
}

#[derive(Debug, Serialize)]
struct IrfJson {
    variables: Vec<String>,
    lags: usize,
    level: f64,
    lag_selection: Option<LagSelection>,
    config: PenaltyConfig,
    horizons: Vec<IrfHorizonJson>,
}

fn rows<T: Copy + nalgebra::Scalar>(m: &nalgebra::DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Long-format rows `h,response_var,shock_var,estimate,se,lower,upper,selected`;
/// numbers are blank where the coefficient is not selected.
pub fn write_irf_csv<W: Write>(out: W, labels: &[String], bands: &[IrfBand]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| HdlpError::Io(std::io::Error::other(e));
    w.write_record([
        "h",
        "response_var",
        "shock_var",
        "estimate",
        "se",
        "lower",
        "upper",
        "selected",
    ])
    .map_err(io)?;
    for band in bands {
        let h = band.horizon.to_string();
        for (i, response) in labels.iter().enumerate() {
            for (j, shock) in labels.iter().enumerate() {
                let keep = band.selected[(i, j)];
                let num = |v: f64| if keep { format_f64(v) } else { String::new() };
                w.write_record([
                    h.as_str(),
                    response,
                    shock,
                    &num(band.point[(i, j)]),
                    &num(band.se[(i, j)]),
                    &num(band.lower[(i, j)]),
                    &num(band.upper[(i, j)]),
                    if keep { "true" } else { "false" },
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_irf(args: &IrfArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("irf", argv, args);
    let mut config = args.tuning.apply(PenaltyConfig::default());
    config.eta_scale = args.eta_scale;
    config.residual_source = match args.residuals {
        ResidualArg::Initial => ResidualSource::Initial,
        ResidualArg::Adaptive => ResidualSource::Adaptive,
    };
    config.validate()?;
    manifest.manifest.config = Some(config);
    manifest.input(&args.data.data)?;
    let series = args.data.load()?;

    let (p, lag_selection) = match args.p {
        Some(p) => (p, None),
        None => {
            let sel =
                select_lag(&series, &args.h_select, args.p_max, &config).map_err(|e| e.context("lag selection"))?;
            log::info!("selected p = {}", sel.p_hat);
            (sel.p_hat, Some(sel))
        }
    };
    let bands = irf_with_bands(&series, p, &args.horizons, args.level, &config)?;
    let labels: Vec<String> = (0..series.n_vars()).map(|j| series.label(j)).collect();

    ensure_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("irf.csv");
    write_irf_csv(fs::File::create(&csv_path)?, &labels, &bands)?;
    let report = IrfJson {
        variables: labels,
        lags: p,
        level: args.level,
        lag_selection,
        config,
        horizons: bands
            .iter()
            .map(|b| IrfHorizonJson {
                horizon: b.horizon,
                gamma: b.gamma,
                eta: b.eta,
                effective_obs: b.effective_obs,
                point: rows(&b.point),
                adaptive: rows(&b.adaptive),
                se: rows(&b.se),
                lower: rows(&b.lower),
                upper: rows(&b.upper),
                selected: rows(&b.selected),
                clamped: rows(&b.clamped),
            })
            .collect(),
    };
    let json_path = args.out_dir.join("irf.json");
    write_text(&json_path, &to_json(&report)?)?;
    manifest.output(&csv_path)?;
    manifest.output(&json_path)?;
    manifest.finish(&args.out_dir.join("manifest.json"))
}

/// Executes a parsed command.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Replicate(a) => cmd_replicate(a, argv),
        Command::SelectLag(a) => cmd_select_lag(a, argv),
        Command::Irf(a) => cmd_irf(a, argv),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(
            run(["hdlp", "simulate", "--n", "21", "--t", "10", "--out", "x.csv"]),
            EXIT_USAGE
        );
        assert_eq!(run(["hdlp", "simulate", "--t", "10"]), EXIT_USAGE);
        assert_eq!(run(["hdlp", "bogus"]), EXIT_USAGE);
        assert_eq!(
            run([
                "hdlp",
                "irf",
                "--data",
                "a.csv",
                "--p",
                "2",
                "--select-lag",
                "--horizons",
                "1",
                "--out-dir",
                "o"
            ]),
            EXIT_USAGE
        );
        assert_eq!(
            run([
                "hdlp",
                "irf",
                "--data",
                "a.csv",
                "--p",
                "2",
                "--horizons",
                "1",
                "--level",
                "1.5",
                "--out-dir",
                "o"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn manifest_name() {
        assert_eq!(
            manifest_path_for(Path::new("a/b.csv")),
            PathBuf::from("a/b.csv.manifest.json")
        );
    }

    #[test]
    fn tuning_overrides() {
        let t = TuningArgs {
            gamma_scale: Some(1.5),
            xi_scale: None,
            zeta: Some(2.0),
            tol: None,
            max_iter: None,
        };
        let cfg = t.apply(PenaltyConfig::default());
        assert_eq!(cfg.gamma_scale, 1.5);
        assert_eq!(cfg.zeta, 2.0);
        assert_eq!(cfg.xi_scale, PenaltyConfig::default().xi_scale);
    }
}
