//! `bmol`: batch experiments on heat kernels, operator-adapted BMO
//! seminorms, fractional and imaginary powers, and spectral multipliers.
//!
//! Exit status: 0 on success, 2 for an invalid configuration, 3 when a
//! tolerance check fails (the report is still written), 1 otherwise.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use bmol::counterexample::CounterexampleConfig;

use crate::commands::RunError;
use crate::config::{number, ConfigError, Flags};
use crate::report::{Format, Outcome};

#[derive(Parser)]
#[command(name = "bmol", version, about = "Operator-adapted BMO experiments")]
struct Cli {
    /// JSON file with the command's configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for reports.
    #[arg(long, global = true, env = "BMOL_OUT_DIR", default_value = "bmol-out")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

/// Grid and cube-family flags shared by the seminorm experiments.
#[derive(Args)]
struct ComparisonFlags {
    /// Grid spacing; fractions such as 1/512 are accepted.
    #[arg(long, value_parser = number)]
    spacing: Option<f64>,
    /// Cubes live in [-half_width, half_width].
    #[arg(long, value_parser = number)]
    half_width: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    j_coarse: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    j_fine: Option<i32>,
    /// Minimum rise of the per-scale maxima that counts as growth.
    #[arg(long, value_parser = number)]
    margin: Option<f64>,
}

impl ComparisonFlags {
    fn put(&self, flags: Flags, at: &str) -> Flags {
        flags
            .set(&format!("{at}.h"), &self.spacing)
            .set(&format!("{at}.half_width"), &self.half_width)
            .set(&format!("{at}.j_coarse"), &self.j_coarse)
            .set(&format!("{at}.j_fine"), &self.j_fine)
            .set(&format!("{at}.divergence.margin"), &self.margin)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Heat-kernel profiles with symmetry, positivity, mass and bound checks.
    Kernels {
        #[arg(long)]
        operator: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_delimiter = ',', value_parser = number)]
        times: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', value_parser = number, allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
    },
    /// One seminorm estimate of a catalog function.
    Seminorm {
        #[arg(long)]
        function: Option<String>,
        /// Operator name or `classical`.
        #[arg(long)]
        operator: Option<String>,
        #[command(flatten)]
        grid: ComparisonFlags,
    },
    /// Finite/divergent verdicts of test functions across spaces.
    Compare {
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        operators: Option<Vec<String>>,
        #[command(flatten)]
        grid: ComparisonFlags,
    },
    /// Mean oscillation of the Neumann fractional power of the singular
    /// test function on shrinking intervals.
    Counterexample {
        #[arg(long, value_parser = number)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u64>>,
        #[command(flatten)]
        grid: ComparisonFlags,
    },
    /// Negative fractional power of a catalog function, normalizer check and
    /// kernel decay table.
    Frac {
        #[arg(long)]
        operator: Option<String>,
        #[arg(long, value_parser = number)]
        alpha: Option<f64>,
        #[arg(long)]
        function: Option<String>,
        #[arg(long, value_parser = number)]
        spacing: Option<f64>,
    },
    /// Imaginary powers: unitarity, group law and the seminorm growth sweep.
    Impow {
        #[arg(long)]
        operator: Option<String>,
        #[arg(long, value_delimiter = ',', value_parser = number, allow_hyphen_values = true)]
        s: Option<Vec<f64>>,
        #[arg(long)]
        no_sweep: bool,
        #[command(flatten)]
        grid: ComparisonFlags,
    },
    /// Mellin transform of a multiplier and synthesis of F(tL) f.
    Multiplier {
        #[arg(long)]
        multiplier: Option<String>,
        #[arg(long)]
        operator: Option<String>,
        #[arg(long)]
        function: Option<String>,
        #[arg(long, value_delimiter = ',', value_parser = number)]
        times: Option<Vec<f64>>,
    },
    /// Off-ball mass of the kernel of F(tL)(I - e^{-r^2 L}).
    Tailmass {
        #[arg(long)]
        multiplier: Option<String>,
        #[arg(long, value_delimiter = ',', value_parser = number)]
        r: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', value_parser = number, allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        #[arg(long, value_parser = number)]
        t: Option<f64>,
        #[command(flatten)]
        grid: ComparisonFlags,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernels { .. } => "kernels",
            Command::Seminorm { .. } => "seminorm",
            Command::Compare { .. } => "compare",
            Command::Counterexample { .. } => "counterexample",
            Command::Frac { .. } => "frac",
            Command::Impow { .. } => "impow",
            Command::Multiplier { .. } => "multiplier",
            Command::Tailmass { .. } => "tailmass",
        }
    }
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => Failure::Config(m),
            RunError::Failed(m) => Failure::Run(m),
        }
    }
}

/// Resolves the configuration of `cmd` and runs it, or returns the resolved
/// configuration alone when `dry` is set.
fn dispatch(cmd: &Command, file: Option<&Value>, dry: bool) -> Result<Option<Outcome>, Failure> {
    let name = cmd.name();
    macro_rules! go {
        ($ty:ty, $flags:expr, $run:path) => {{
            let cfg: $ty = config::resolve(name, file, $flags.done())?;
            if dry {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
                return Ok(None);
            }
            Ok(Some($run(&cfg)?))
        }};
    }
    let f = Flags::default();
    match cmd {
        Command::Kernels { operator, dim, times, y } => go!(
            commands::KernelsConfig,
            f.set("operator", operator).set("dim", dim).set("times", times).set("y", y),
            commands::kernels
        ),
        Command::Seminorm { function, operator, grid } => go!(
            commands::SeminormConfig,
            grid.put(f.set("function", function).set("operator", operator), "comparison"),
            commands::seminorm
        ),
        Command::Compare { functions, operators, grid } => go!(
            commands::CompareConfig,
            grid.put(f.set("functions", functions).set("operators", operators), "comparison"),
            commands::compare
        ),
        Command::Counterexample { alpha, k, grid } => {
            go!(CounterexampleConfig, grid.put(f.set("alpha", alpha).set("ks", k), "bmo"), commands::counterexample)
        }
        Command::Frac { operator, alpha, function, spacing } => go!(
            commands::FracConfig,
            f.set("operator", operator).set("alpha", alpha).set("function", function).set("h", spacing),
            commands::frac
        ),
        Command::Impow { operator, s, no_sweep, grid } => go!(
            commands::ImpowConfig,
            grid.put(f.set("operator", operator).set("s", s).set("sweep", &no_sweep.then_some(false)), "comparison"),
            commands::impow
        ),
        Command::Multiplier { multiplier, operator, function, times } => go!(
            commands::MultiplierConfig,
            f.set("multiplier", multiplier).set("operator", operator).set("function", function).set("times", times),
            commands::multiplier
        ),
        Command::Tailmass { multiplier, r, y, t, grid } => go!(
            commands::TailmassConfig,
            grid.put(f.set("multiplier", multiplier).set("r", r).set("y", y).set("t", t), "comparison"),
            commands::tailmass
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("thread pool builds once");
    }
    let file = match cli.config.as_deref().map(config::read_file).transpose() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    let outcome = match dispatch(&cli.command, file.as_ref(), cli.dry_run) {
        Ok(Some(o)) => o,
        Ok(None) => return ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: invalid config: {m}");
            return ExitCode::from(2);
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            return ExitCode::FAILURE;
        }
    };
    match report::write(&cli.out, name, cli.format, &outcome) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing reports to {}: {e}", cli.out.display());
            return ExitCode::FAILURE;
        }
    }
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("tolerance failure: {f}");
        }
        ExitCode::from(3)
    }
}
