//! The `riskscale` command line.

mod commands;
mod config;
mod manifest;

pub use config::{
    BacktestSection, CalibrateSection, GridRange, HeatmapSpec, PaperTablesSection, RunConfig, SweepSection,
    SyntheticSpec, DEFAULT_MC, DEFAULT_OUT, DEFAULT_SEED,
};
pub use manifest::{Manifest, OutputEntry};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backtest::{Horizon, Layout, MethodSpec, SyntheticLaw};
use crate::error::Error;
use crate::presets;

/// Exit status for configuration, usage and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures during a run.
pub const EXIT_RUN: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "riskscale", version, about = "Risk-unbiased scaling of VaR and ES estimators")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "RISKSCALE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Monte Carlo panel size M.
    #[arg(long, global = true, env = "RISKSCALE_MC")]
    pub mc: Option<usize>,
    #[arg(long, global = true, env = "RISKSCALE_SEED")]
    pub seed: Option<u64>,
    /// Solver tolerance on c.
    #[arg(long, global = true, env = "RISKSCALE_TOL")]
    pub tol: Option<f64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "RISKSCALE_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "RISKSCALE_OUT")]
    pub out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal scalar for one problem, or the Gaussian heatmap.
    Calibrate(CalibrateArgs),
    /// Supremum of member scalars over a family sweep.
    Robust(PresetArgs),
    /// Confidence and time scalars next to the combined scalar.
    Decompose(PresetArgs),
    /// The three reference tables of combined, confidence and time scalars.
    PaperTables(PaperTablesArgs),
    /// Rolling backtest of the scaling methods on a returns CSV.
    Backtest(BacktestArgs),
    /// Rolling backtest on generated i.i.d. panels.
    SyntheticBacktest(SyntheticArgs),
    /// Re-run a manifest and check that outputs are byte-identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Named problem (`gaussian-var`, `overlapping-10d-var`) or `gaussian-heatmap`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Sample size, or a `start..end[:step]` range for the heatmap.
    #[arg(long)]
    pub n: Option<String>,
    /// Confidence level, or a `start..end[:step]` range for the heatmap.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Heatmap with closed-form values only.
    #[arg(long)]
    pub closed_form_only: bool,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Named problem or family sweep.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct PaperTablesArgs {
    /// Tables to produce (1, 2, 3).
    #[arg(long, value_delimiter = ',')]
    pub tables: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HorizonArg {
    One,
    Two,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Wide,
    Long,
}

#[derive(Debug, Args)]
pub struct BacktestOptions {
    /// Method ids (1-6).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    pub horizon: Option<HorizonArg>,
    /// Estimation window n.
    #[arg(long)]
    pub window: Option<usize>,
    /// Trailing observations backtested per series; 0 for all.
    #[arg(long)]
    pub backtest_length: Option<usize>,
    /// Refit data-driven scalars every k backtest points.
    #[arg(long)]
    pub recalibrate_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Returns CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub layout: Option<LayoutArg>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub decimal: Option<char>,
    #[arg(long)]
    pub date_format: Option<String>,
    /// Use a generated panel (`normal`, `t6`) instead of a CSV.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[command(flatten)]
    pub synthetic_shape: SyntheticShape,
    #[command(flatten)]
    pub options: BacktestOptions,
}

#[derive(Debug, Args)]
pub struct SyntheticShape {
    #[arg(long)]
    pub portfolios: Option<usize>,
    /// Backtest observations per portfolio.
    #[arg(long)]
    pub length: Option<usize>,
    /// Extra observations ahead of the backtest for data-driven methods.
    #[arg(long)]
    pub pre_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// `normal` or `t<nu>`.
    #[arg(long, default_value = "normal")]
    pub law: String,
    #[command(flatten)]
    pub synthetic_shape: SyntheticShape,
    #[command(flatten)]
    pub options: BacktestOptions,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Ingest(_)
            | Error::Csv(_)
            | Error::InvalidParameter(_)
            | Error::ProbabilityDomain(_)
            | Error::InfiniteMean(_)
            | Error::InfiniteVariance(_) => EXIT_CONFIG,
            _ => EXIT_RUN,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn config_error(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: msg.into(),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let quiet = cli.global.quiet;
    if let Command::Replay(args) = &cli.command {
        return manifest::replay(&args.manifest, cli.global.out.clone(), cli.global.threads, quiet);
    }
    let (name, config) = resolve(&cli)?;
    commands::run_and_record(&name, &config, quiet)
}

/// Merges defaults, the config file, environment and flags into a run
/// configuration holding only the chosen command's section.
pub fn resolve(cli: &Cli) -> CliResult<(String, RunConfig)> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(m) = g.mc {
        config.mc = m;
    }
    if let Some(s) = g.seed {
        config.seed = s;
    }
    if let Some(t) = g.tol {
        config.tol = t;
    }
    if g.threads.is_some() {
        config.threads = g.threads;
    }
    if let Some(o) = &g.out {
        config.out.clone_from(o);
    }
    if config.mc == 0 {
        return Err(config_error("mc must be positive"));
    }
    if !(config.tol > 0.0) {
        return Err(config_error(format!("tol must be positive, got {}", config.tol)));
    }
    if config.threads == Some(0) {
        return Err(config_error("threads must be positive"));
    }

    let name = match &cli.command {
        Command::Calibrate(a) => {
            let section = config.calibrate.get_or_insert_with(Default::default);
            resolve_calibrate(section, a)?;
            "calibrate"
        }
        Command::Robust(a) => {
            let section = config.robust.get_or_insert_with(Default::default);
            resolve_sweep(section, a.preset.as_deref(), true)?;
            "robust"
        }
        Command::Decompose(a) => {
            let section = config.decompose.get_or_insert_with(Default::default);
            resolve_sweep(section, a.preset.as_deref(), false)?;
            "decompose"
        }
        Command::PaperTables(a) => {
            let section = config.paper_tables.get_or_insert_with(Default::default);
            if let Some(t) = &a.tables {
                section.tables.clone_from(t);
            }
            if section.tables.is_empty() || section.tables.iter().any(|t| !(1..=3).contains(t)) {
                return Err(config_error(format!("tables must be chosen from 1, 2, 3; got {:?}", section.tables)));
            }
            "paper-tables"
        }
        Command::Backtest(a) => {
            let section = config.backtest.get_or_insert_with(Default::default);
            if let Some(p) = &a.input {
                section.input = Some(p.clone());
            }
            if let Some(l) = a.layout {
                section.ingest.layout = match l {
                    LayoutArg::Wide => Layout::Wide,
                    LayoutArg::Long => Layout::Long,
                };
            }
            if let Some(d) = a.delimiter {
                section.ingest.delimiter = d;
            }
            if let Some(d) = a.decimal {
                section.ingest.decimal = d;
            }
            if let Some(f) = &a.date_format {
                section.ingest.date_format.clone_from(f);
            }
            if let Some(law) = &a.synthetic {
                let law: SyntheticLaw = law.parse()?;
                section.synthetic = Some(SyntheticSpec::new(law));
            }
            apply_shape(section, &a.synthetic_shape)?;
            apply_backtest_options(section, &a.options)?;
            if section.synthetic.is_none() && section.input.is_none() {
                return Err(config_error("backtest needs --input (or backtest.input) or --synthetic"));
            }
            "backtest"
        }
        Command::SyntheticBacktest(a) => {
            let section = config.backtest.get_or_insert_with(Default::default);
            let law: SyntheticLaw = a.law.parse()?;
            match &mut section.synthetic {
                Some(s) => s.law = law,
                None => section.synthetic = Some(SyntheticSpec::new(law)),
            }
            section.input = None;
            apply_shape(section, &a.synthetic_shape)?;
            apply_backtest_options(section, &a.options)?;
            "synthetic-backtest"
        }
        Command::Replay(_) => unreachable!("handled before resolution"),
    };
    Ok((name.to_owned(), config.only(name)))
}

fn resolve_calibrate(section: &mut CalibrateSection, a: &CalibrateArgs) -> CliResult<()> {
    if let Some(p) = &a.preset {
        section.preset = Some(p.clone());
        section.problem = None;
        section.heatmap = None;
    }
    match section.preset.as_deref() {
        Some("gaussian-heatmap") => {
            let mut spec = section.heatmap.take().unwrap_or_default();
            if let Some(n) = &a.n {
                spec.n = GridRange::parse(n, 10.0)?;
            }
            if let Some(al) = &a.alpha {
                spec.alpha = GridRange::parse(al, 0.0025)?;
            }
            if a.closed_form_only {
                spec.monte_carlo = false;
            }
            section.heatmap = Some(spec);
        }
        Some("gaussian-var") => {
            let n = match &a.n {
                Some(s) => s.parse::<usize>().map_err(|_| config_error(format!("--n must be an integer, got `{s}`")))?,
                None => 250,
            };
            let alpha = match &a.alpha {
                Some(s) => s.parse::<f64>().map_err(|_| config_error(format!("--alpha must be a number, got `{s}`")))?,
                None => 0.01,
            };
            section.problem = Some(presets::gaussian(n, alpha, true)?);
        }
        Some(name) => {
            if a.n.is_some() || a.alpha.is_some() {
                return Err(config_error(format!("--n and --alpha do not apply to preset `{name}`")));
            }
            if section.problem.is_none() || a.preset.is_some() {
                section.problem = Some(presets::problem(name)?);
            }
        }
        None => {
            if a.n.is_some() || a.alpha.is_some() {
                return Err(config_error("--n and --alpha need a Gaussian preset"));
            }
        }
    }
    if section.problem.is_none() && section.heatmap.is_none() {
        return Err(config_error("calibrate needs --preset or a [calibrate.problem] table"));
    }
    if let Some(p) = &section.problem {
        p.validate()?;
    }
    Ok(())
}

fn resolve_sweep(section: &mut SweepSection, preset: Option<&str>, robust: bool) -> CliResult<()> {
    if let Some(p) = preset {
        section.preset = Some(p.to_owned());
        section.sweep = None;
        section.problem = None;
    }
    if let Some(name) = section.preset.clone() {
        if section.sweep.is_none() && section.problem.is_none() {
            if presets::SWEEP_PRESETS.contains(&name.as_str()) {
                section.sweep = Some(presets::sweep(&name)?);
            } else if robust {
                return Err(config_error(format!(
                    "robust needs a family sweep preset ({}), got `{name}`",
                    presets::SWEEP_PRESETS.join(", ")
                )));
            } else {
                section.problem = Some(presets::problem(&name)?);
            }
        }
    }
    match (&section.sweep, &section.problem) {
        (Some(s), None) => {
            s.problems()?;
        }
        (None, Some(p)) if !robust => p.validate()?,
        (Some(_), Some(_)) => return Err(config_error("give either a sweep or a problem, not both")),
        _ => {
            return Err(config_error(if robust {
                "robust needs --preset or a [robust.sweep] table"
            } else {
                "decompose needs --preset, a [decompose.sweep] or a [decompose.problem] table"
            }))
        }
    }
    Ok(())
}

fn apply_shape(section: &mut BacktestSection, shape: &SyntheticShape) -> CliResult<()> {
    let any = shape.portfolios.is_some() || shape.length.is_some() || shape.pre_window.is_some();
    let Some(s) = &mut section.synthetic else {
        return if any {
            Err(config_error("--portfolios, --length and --pre-window need a synthetic panel"))
        } else {
            Ok(())
        };
    };
    if let Some(p) = shape.portfolios {
        s.portfolios = p;
    }
    if let Some(l) = shape.length {
        s.length = l;
    }
    if let Some(p) = shape.pre_window {
        s.pre_window = p;
    }
    section.backtest_length = s.length;
    Ok(())
}

fn apply_backtest_options(section: &mut BacktestSection, o: &BacktestOptions) -> CliResult<()> {
    if let Some(ids) = &o.methods {
        section.methods = ids.iter().map(|&id| MethodSpec::standard(id)).collect::<Result<_, _>>()?;
    }
    if let Some(h) = o.horizon {
        section.horizons = match h {
            HorizonArg::One => vec![Horizon::OnePeriod],
            HorizonArg::Two => vec![Horizon::TwoPeriodOverlap],
            HorizonArg::Both => vec![Horizon::OnePeriod, Horizon::TwoPeriodOverlap],
        };
    }
    if let Some(w) = o.window {
        section.window = w;
    }
    if let Some(l) = o.backtest_length {
        section.backtest_length = l;
    }
    if o.recalibrate_every.is_some() {
        section.recalibrate_every = o.recalibrate_every;
    }
    if section.methods.is_empty() || section.horizons.is_empty() {
        return Err(config_error("backtest needs at least one method and one horizon"));
    }
    let mut ids: Vec<u32> = section.methods.iter().map(|m| m.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_error("method ids must be distinct"));
    }
    Ok(())
}

/// Scalars with four decimals.
pub fn fmt_scalar(x: f64) -> String {
    format!("{x:.4}")
}

/// Two significant figures.
pub fn fmt_std_error(x: f64) -> String {
    if !x.is_finite() {
        return "inf".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = (1 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("riskscale").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn std_error_format() {
        assert_eq!(fmt_std_error(0.0042123), "0.0042");
        assert_eq!(fmt_std_error(0.031), "0.031");
        assert_eq!(fmt_std_error(1.234), "1.2");
        assert_eq!(fmt_std_error(12.34), "12");
        assert_eq!(fmt_std_error(f64::INFINITY), "inf");
        assert_eq!(fmt_scalar(1.13571), "1.1357");
    }

    #[test]
    fn flags_override_defaults() {
        let (name, c) = resolve(&parse(&["calibrate", "--preset", "overlapping-10d-var", "--mc", "1000", "--seed", "7"])).unwrap();
        assert_eq!(name, "calibrate");
        assert_eq!((c.mc, c.seed), (1000, 7));
        assert!(c.calibrate.unwrap().problem.is_some());
    }

    #[test]
    fn heatmap_ranges() {
        let (_, c) = resolve(&parse(&["calibrate", "--preset", "gaussian-heatmap", "--n", "100..250", "--alpha", "0.005..0.025"])).unwrap();
        let h = c.calibrate.unwrap().heatmap.unwrap();
        assert_eq!(h.n.values().unwrap().len(), 16);
        assert_eq!(h.alpha.values().unwrap().len(), 9);
    }

    #[test]
    fn problems_with_commands() {
        assert_eq!(resolve(&parse(&["calibrate"])).unwrap_err().code, EXIT_CONFIG);
        assert_eq!(resolve(&parse(&["robust", "--preset", "gaussian-var"])).unwrap_err().code, EXIT_CONFIG);
        assert_eq!(resolve(&parse(&["backtest"])).unwrap_err().code, EXIT_CONFIG);
        assert_eq!(resolve(&parse(&["paper-tables", "--tables", "4"])).unwrap_err().code, EXIT_CONFIG);
        let (_, c) = resolve(&parse(&["synthetic-backtest", "--law", "t6", "--portfolios", "3", "--methods", "1,6"])).unwrap();
        let b = c.backtest.unwrap();
        assert_eq!(b.synthetic.unwrap().portfolios, 3);
        assert_eq!(b.methods.len(), 2);
    }
}
