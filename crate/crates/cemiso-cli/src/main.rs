//! Command-line front end: phase solving plus the Monte-Carlo experiment
//! harness, all output as CSV with provenance headers.
//!
//! Exit codes: 0 success, 2 invalid input or flags, 3 numeric failure
//! (solver nonconvergence or an unreachable target). `CE_THREADS` caps the
//! worker count; results are invariant to it.

use cemiso::alphabets::{DauipSearch, MiError};
use cemiso::doughnut::{region_for, InnerOpts};
use cemiso::experiments::{
    array_power_gain, bounds_table, dauip_opt_table, ergodic_rate_curves, format_sig,
    mh_ratio_curve, mh_tail_check, min_snr_table, outage_bounds, ExperimentConfig,
    ExperimentError, ExperimentResult, RateMetric, Scheme,
};
use cemiso::fading::{ChannelVector, FadingKind};
use cemiso::precoder::{
    dispatch_solve, solve_closed_form_n2, solve_closed_form_n3, solve_coord_descent,
    solve_dfs_two_step, solve_homotopy, CoordOpts, DfsOpts, DispatchPolicy, HomotopyOpts,
    PhaseSolution, PrecoderError,
};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::Value;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "cemiso", version, about = "Constant-envelope MISO precoding toolkit")]
struct Cli {
    /// Master seed; fully determines all stochastic output [integer]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat JSON config file mirroring the flag names; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write CSV to this path instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonMc {
    /// Channel draws per grid point [count]
    #[arg(long)]
    trials: Option<usize>,
    /// Fading family: rayleigh | bounded:<B> | dlos:<A> [amplitudes linear]
    #[arg(long)]
    fading: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve phases for one channel file and target symbol
    Precode {
        /// Channel CSV path, one `re,im` gain per row [linear amplitude]
        #[arg(long = "h")]
        channel: Option<PathBuf>,
        /// Target symbol as `re,im` [normalized received amplitude]
        #[arg(long)]
        u: Option<String>,
        /// Solver: auto | homotopy | cd | dfs | closed2 | closed3
        #[arg(long, default_value = "auto")]
        solver: String,
    },
    /// Mean inner/outer radius ratio versus antenna count
    MhRatio {
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Mean closed-form rate bounds over an ensemble
    Bounds {
        /// Antenna count [count]
        #[arg(long)]
        n: Option<usize>,
        /// SNR grid in dB, comma separated [dB]
        #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Optimize ring amplitudes per SNR point
    DauipOpt {
        /// Antenna count [count]
        #[arg(long)]
        n: Option<usize>,
        /// SNR grid in dB, comma separated [dB]
        #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        /// Largest ring count searched [count]
        #[arg(long)]
        lmax: Option<usize>,
        /// Amplitude grid resolution per ring [count]
        #[arg(long = "alpha-grid")]
        alpha_grid: Option<usize>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Ergodic rate curves for a set of metrics
    RateCurve {
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// SNR grid in dB, comma separated [dB]
        #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        /// Metrics: atpc,papc,epi,i2,mi-uniform,mi-dauip-<L>,mi-best-dauip
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// SNR required to reach a target ergodic rate
    MinSnr {
        /// Target ergodic rate [bits per channel use]
        #[arg(long)]
        rate: Option<f64>,
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Schemes: mrt,papc,ce-uniform,ce-dauip
        #[arg(long, value_delimiter = ',')]
        scheme: Option<Vec<String>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Array power gain: min-SNR reduction versus the first grid entry
    Apg {
        /// Target ergodic rate [bits per channel use]
        #[arg(long)]
        rate: Option<f64>,
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Schemes: mrt,papc,ce-uniform,ce-dauip
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Outage probability bounds versus SNR
    Outage {
        /// Outage rate threshold [bits per channel use]
        #[arg(long)]
        rate: Option<f64>,
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// SNR grid in dB, comma separated [dB]
        #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
        snr_db: Option<Vec<f64>>,
        #[command(flatten)]
        mc: CommonMc,
    },
    /// Tail probability of the inner radius versus antenna count
    MhTail {
        /// Threshold constants c in `c ln(N)/sqrt(N)`, comma separated
        #[arg(long = "c", value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
        /// Antenna counts, comma separated [counts]
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[command(flatten)]
        mc: CommonMc,
    },
}

enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(_) | ExperimentError::Fading(_) => {
                CliError::Validation(e.to_string())
            }
            ExperimentError::Mi(MiError::EmptyEnsemble) => CliError::Validation(e.to_string()),
            ExperimentError::TargetUnreachable { .. } | ExperimentError::Mi(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<PrecoderError> for CliError {
    fn from(e: PrecoderError) -> Self {
        match e {
            PrecoderError::TargetOutsideDoughnut { .. } | PrecoderError::WrongArity { .. } => {
                CliError::Validation(e.to_string())
            }
            PrecoderError::BracketFailure | PrecoderError::SearchExhausted { .. } => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

/// Config-file-backed lookups; explicit flags always win.
struct Settings {
    map: serde_json::Map<String, Value>,
}

impl Settings {
    fn load(path: &Option<PathBuf>) -> Result<Settings, CliError> {
        let map = match path {
            None => serde_json::Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| validation(format!("cannot read config {}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text)
                    .map_err(|e| validation(format!("bad config JSON: {e}")))?
                {
                    Value::Object(m) => m,
                    _ => return Err(validation("config must be a JSON object")),
                }
            }
        };
        Ok(Settings { map })
    }

    fn u64_or(&self, key: &str, cli: Option<u64>, default: u64) -> Result<u64, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| validation(format!("config `{key}` must be an unsigned integer"))),
        }
    }

    fn usize_or(&self, key: &str, cli: Option<usize>, default: usize) -> Result<usize, CliError> {
        Ok(self.u64_or(key, cli.map(|v| v as u64), default as u64)? as usize)
    }

    fn f64_or(&self, key: &str, cli: Option<f64>, default: f64) -> Result<f64, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| validation(format!("config `{key}` must be a number"))),
        }
    }

    fn string_or(
        &self,
        key: &str,
        cli: Option<String>,
        default: &str,
    ) -> Result<String, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(validation(format!("config `{key}` must be a string"))),
        }
    }

    fn usize_list_or(
        &self,
        key: &str,
        cli: Option<Vec<usize>>,
        default: &[usize],
    ) -> Result<Vec<usize>, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| validation(format!("config `{key}` must hold integers")))
                })
                .collect(),
            Some(_) => Err(validation(format!("config `{key}` must be an array"))),
        }
    }

    fn f64_list_or(
        &self,
        key: &str,
        cli: Option<Vec<f64>>,
        default: &[f64],
    ) -> Result<Vec<f64>, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| validation(format!("config `{key}` must hold numbers")))
                })
                .collect(),
            Some(_) => Err(validation(format!("config `{key}` must be an array"))),
        }
    }

    fn string_list_or(
        &self,
        key: &str,
        cli: Option<Vec<String>>,
        default: &[&str],
    ) -> Result<Vec<String>, CliError> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default.iter().map(|s| s.to_string()).collect()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| validation(format!("config `{key}` must hold strings")))
                })
                .collect(),
            Some(_) => Err(validation(format!("config `{key}` must be an array"))),
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(validation(format!("expected `re,im`, got `{s}`")));
    }
    let re: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| validation(format!("bad real part `{}`", parts[0])))?;
    let im: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| validation(format!("bad imaginary part `{}`", parts[1])))?;
    Ok(Complex64::new(re, im))
}

fn load_channel(path: &PathBuf) -> Result<ChannelVector, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read channel file {}: {e}", path.display())))?;
    let mut gains = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        gains.push(parse_complex(line)?);
    }
    ChannelVector::new(gains).map_err(|e| validation(e.to_string()))
}

fn fading_of(settings: &Settings, mc: &CommonMc) -> Result<FadingKind, CliError> {
    let text = settings.string_or("fading", mc.fading.clone(), "rayleigh")?;
    FadingKind::from_str(&text).map_err(|e| validation(e.to_string()))
}

fn base_config(
    settings: &Settings,
    seed: Option<u64>,
    mc: &CommonMc,
    default_trials: usize,
) -> Result<ExperimentConfig, CliError> {
    Ok(ExperimentConfig {
        master_seed: settings.u64_or("seed", seed, 1)?,
        trials: settings.usize_or("trials", mc.trials, default_trials)?,
        fading: fading_of(settings, mc)?,
        ..ExperimentConfig::default()
    })
}

fn emit(result: &ExperimentResult, out: &Option<PathBuf>) -> Result<(), CliError> {
    let csv = result.to_csv();
    match out {
        None => {
            print!("{csv}");
            Ok(())
        }
        Some(p) => std::fs::write(p, csv)
            .map_err(|e| validation(format!("cannot write {}: {e}", p.display()))),
    }
}

fn run_precode(
    channel: Option<PathBuf>,
    u: Option<String>,
    solver: String,
    settings: &Settings,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let path = match channel {
        Some(p) => p,
        None => PathBuf::from(settings.string_or("h", None, "")?),
    };
    if path.as_os_str().is_empty() {
        return Err(validation("missing --h <channel.csv>"));
    }
    let u_text = settings.string_or("u", u, "")?;
    if u_text.is_empty() {
        return Err(validation("missing --u re,im"));
    }
    let h = load_channel(&path)?;
    let target = parse_complex(&u_text)?;

    let sol: PhaseSolution = match solver.as_str() {
        "auto" => dispatch_solve(&h, target, &DispatchPolicy::default())?,
        "homotopy" => solve_homotopy(&h, target, None, &HomotopyOpts::default())?,
        "cd" => solve_coord_descent(&h, target, &CoordOpts::default()),
        "dfs" => solve_dfs_two_step(&h, target, &DfsOpts::default())?,
        "closed2" => solve_closed_form_n2(&h, target, 1e-9)?,
        "closed3" => solve_closed_form_n3(&h, target, 1e-9)?,
        other => return Err(validation(format!("unknown solver `{other}`"))),
    };
    if !sol.accepted {
        return Err(CliError::Numeric(format!(
            "solver {} stalled at residual {}",
            sol.solver, sol.residual
        )));
    }
    let mut csv = String::new();
    csv.push_str(&format!(
        "# experiment=precode solver={} residual={} iterations={} version={}\n",
        sol.solver,
        format_sig(sol.residual),
        sol.iterations,
        env!("CARGO_PKG_VERSION"),
    ));
    csv.push_str("antenna,theta_rad\n");
    for (i, t) in sol.phases.angles().iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, format_sig(*t)));
    }
    match out {
        None => print!("{csv}"),
        Some(p) => std::fs::write(p, csv)
            .map_err(|e| validation(format!("cannot write {}: {e}", p.display())))?,
    }
    // Region context on stderr keeps the CSV machine-readable.
    let (region, _) = region_for(&h, &InnerOpts::default());
    eprintln!(
        "annulus: inner {} outer {}",
        format_sig(region.inner()),
        format_sig(region.outer())
    );
    Ok(())
}

fn parse_schemes(names: &[String]) -> Result<Vec<Scheme>, CliError> {
    names
        .iter()
        .map(|s| Scheme::from_str(s).map_err(|e| validation(e.to_string())))
        .collect()
}

fn parse_metrics(names: &[String]) -> Result<Vec<RateMetric>, CliError> {
    names
        .iter()
        .map(|s| RateMetric::from_str(s).map_err(|e| validation(e.to_string())))
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(&cli.config)?;
    let out = cli.out.clone();
    match cli.cmd {
        Cmd::Precode { channel, u, solver } => {
            run_precode(channel, u, solver, &settings, &out)
        }
        Cmd::MhRatio { n_grid, mc } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.n_grid =
                settings.usize_list_or("n-grid", n_grid, &[2, 4, 8, 16, 32, 64, 128])?;
            emit(&mh_ratio_curve(&cfg)?, &out)
        }
        Cmd::Bounds { n, snr_db, mc } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.n_grid = vec![settings.usize_or("n", n, 4)?];
            cfg.snr_grid_db = settings.f64_list_or(
                "snr-db",
                snr_db,
                &[-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            )?;
            emit(&bounds_table(&cfg)?, &out)
        }
        Cmd::DauipOpt {
            n,
            snr_db,
            lmax,
            alpha_grid,
            mc,
        } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 2_000)?;
            cfg.n_grid = vec![settings.usize_or("n", n, 4)?];
            cfg.snr_grid_db =
                settings.f64_list_or("snr-db", snr_db, &[-5.0, 0.0, 5.0, 10.0, 15.0])?;
            cfg.search = DauipSearch {
                l_max: settings.usize_or("lmax", lmax, 4)?,
                alpha_grid: settings.usize_or("alpha-grid", alpha_grid, 32)?,
                ..cfg.search
            };
            emit(&dauip_opt_table(&cfg)?, &out)
        }
        Cmd::RateCurve {
            n_grid,
            snr_db,
            metrics,
            mc,
        } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.n_grid = settings.usize_list_or("n-grid", n_grid, &[4])?;
            cfg.snr_grid_db = settings.f64_list_or(
                "snr-db",
                snr_db,
                &(-10..=20).step_by(2).map(|d| d as f64).collect::<Vec<_>>(),
            )?;
            let names = settings.string_list_or(
                "metrics",
                metrics,
                &["atpc", "papc", "mi-uniform", "mi-dauip-1"],
            )?;
            emit(&ergodic_rate_curves(&cfg, &parse_metrics(&names)?)?, &out)
        }
        Cmd::MinSnr {
            rate,
            n_grid,
            scheme,
            mc,
        } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.target_rate = settings.f64_or("rate", rate, 3.0)?;
            cfg.n_grid = settings.usize_list_or("n", n_grid, &[1, 2, 4, 16, 64])?;
            let names = settings.string_list_or(
                "scheme",
                scheme,
                &["mrt", "papc", "ce-uniform", "ce-dauip"],
            )?;
            emit(&min_snr_table(&cfg, &parse_schemes(&names)?)?, &out)
        }
        Cmd::Apg {
            rate,
            n_grid,
            schemes,
            mc,
        } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.target_rate = settings.f64_or("rate", rate, 3.0)?;
            cfg.n_grid =
                settings.usize_list_or("n-grid", n_grid, &[1, 2, 4, 8, 16, 32, 64])?;
            let names = settings.string_list_or(
                "schemes",
                schemes,
                &["mrt", "papc", "ce-uniform", "ce-dauip"],
            )?;
            emit(&array_power_gain(&cfg, &parse_schemes(&names)?)?, &out)
        }
        Cmd::Outage {
            rate,
            n_grid,
            snr_db,
            mc,
        } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 10_000)?;
            cfg.target_rate = settings.f64_or("rate", rate, 2.0)?;
            cfg.n_grid = settings.usize_list_or("n-grid", n_grid, &[2, 4, 16, 64])?;
            cfg.snr_grid_db = settings.f64_list_or(
                "snr-db",
                snr_db,
                &(0..=30).step_by(2).map(|d| d as f64).collect::<Vec<_>>(),
            )?;
            emit(&outage_bounds(&cfg)?, &out)
        }
        Cmd::MhTail { c_values, n_grid, mc } => {
            let mut cfg = base_config(&settings, cli.seed, &mc, 1_000)?;
            cfg.n_grid =
                settings.usize_list_or("n-grid", n_grid, &[4, 8, 16, 32, 64, 128])?;
            let c = settings.f64_list_or("c", c_values, &[0.5, 1.0])?;
            emit(&mh_tail_check(&cfg, &c)?, &out)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("CE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
