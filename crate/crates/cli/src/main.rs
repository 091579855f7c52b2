use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eqm_cli::commands::{cmd_classify, cmd_field, cmd_scan, cmd_solve, Outcome};
use eqm_cli::config::{self, Command, Format, RunConfig};
use eqm_cli::error::{CliError, EXIT_OK, EXIT_SELFTEST_FAILED};
use eqm_cli::suite::{Scale, Suite};
use eqm_core::PotentialConfig;

#[derive(Parser)]
#[command(name = "eqm", version, about = "Equilibrium measures of logarithmic energies on the line")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve one problem: density.csv, solution.json, density.svg.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the kernel matrix as CSV.
        #[arg(long, value_name = "PATH")]
        dump_kernel: Option<PathBuf>,
    },
    /// Classify over a range of masses: scan.csv, scan.json, verdictbar.svg.
    Scan {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve and report edge fits: edges.csv, classification.json.
    Classify {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Plane field diagnostics: field.csv, acf.csv, field.json.
    Field {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the command stored in a config file.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Acceptance suite at reduced resolution.
    Selftest {
        /// Multiply every kernel entry by this factor (fault injection).
        #[arg(long, value_name = "FACTOR", hide = true)]
        debug_kernel_scale: Option<f64>,
        /// Run only these criteria, e.g. "1,3,12".
        #[arg(long, value_name = "IDS")]
        only: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Potential as an expression in x, e.g. "x^4 - x^2".
    #[arg(long, conflicts_with = "builtin")]
    potential: Option<String>,
    /// Built-in potential: quadratic or quartic_double_well.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Intervals, e.g. "[-2,-0.5];[0.5,2]".
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Masses per interval, e.g. "0.3,0.7".
    #[arg(long)]
    interval_masses: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long)]
    s_from: Option<f64>,
    #[arg(long)]
    s_to: Option<f64>,
    #[arg(long)]
    s_step: Option<f64>,
    /// Total number of cells.
    #[arg(long)]
    n: Option<usize>,
    /// KKT tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv, json, svg.
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => config::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = cfg.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "config file is for '{}', not '{}'",
                    c.as_str(),
                    command.as_str()
                )));
            }
        }
        cfg.command = Some(command);
        if let Some(p) = &self.potential {
            cfg.potential = PotentialConfig::Expr { expr: p.clone() };
        }
        if let Some(b) = &self.builtin {
            cfg.potential = PotentialConfig::Builtin {
                builtin: b.clone(),
                params: Default::default(),
            };
        }
        if let Some(d) = &self.domain {
            cfg.domain = Some(config::parse_domain(d)?);
        }
        if let Some(m) = &self.interval_masses {
            cfg.interval_masses = Some(config::parse_list(m)?);
        }
        if let Some(f) = &self.format {
            cfg.formats = f.split(',').map(str::parse::<Format>).collect::<Result<_, _>>()?;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {
                $(if let Some(v) = self.$field.clone() { $target = v.into(); })*
            };
        }
        set!(mass => cfg.mass, n => cfg.n, gamma => cfg.gamma, out => cfg.out, tol => cfg.solver.tol_kkt);
        if self.theta.is_some() {
            cfg.theta = self.theta;
        }
        if self.s_from.is_some() {
            cfg.s_from = self.s_from;
        }
        if self.s_to.is_some() {
            cfg.s_to = self.s_to;
        }
        if self.s_step.is_some() {
            cfg.s_step = self.s_step;
        }
        Ok(cfg)
    }
}

fn dispatch(cfg: &RunConfig, dump_kernel: Option<&std::path::Path>) -> Result<Outcome, CliError> {
    match cfg.command {
        Some(Command::Solve) | None => cmd_solve(cfg, dump_kernel),
        Some(Command::Scan) => cmd_scan(cfg),
        Some(Command::Classify) => cmd_classify(cfg),
        Some(Command::Field) => cmd_field(cfg),
    }
}

fn selftest(only: Option<&str>) -> Result<i32, CliError> {
    let ids: Vec<usize> = match only {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|k| (1..=12).contains(k))
                    .ok_or_else(|| CliError::Config(format!("bad criterion id '{t}'")))
            })
            .collect::<Result<_, _>>()?,
        None => (1..=12).collect(),
    };
    let suite = Suite::new(Scale::reduced());
    println!("selftest ({} resolution)", suite.scale.label);
    let mut failed = Vec::new();
    for id in ids {
        let r = suite.run(id);
        println!("{}", r.line());
        if !r.pass {
            failed.push(format!("{} {}", r.id, r.name));
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
        Ok(EXIT_OK)
    } else {
        println!("failed: {}", failed.join(", "));
        Ok(EXIT_SELFTEST_FAILED)
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("EQM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("EQM_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    let (outcome, code) = match cli.command {
        Sub::Selftest { debug_kernel_scale, only } => {
            if let Some(s) = debug_kernel_scale {
                eqm_core::kernel::set_debug_kernel_scale(s);
            }
            return selftest(only.as_deref());
        }
        Sub::Run { config } => {
            let cfg = config::load(&config)?;
            let o = dispatch(&cfg, None)?;
            (o.summary, o.code)
        }
        Sub::Solve { run, dump_kernel } => {
            let o = dispatch(&run.resolve(Command::Solve)?, dump_kernel.as_deref())?;
            (o.summary, o.code)
        }
        Sub::Scan { run } => {
            let o = dispatch(&run.resolve(Command::Scan)?, None)?;
            (o.summary, o.code)
        }
        Sub::Classify { run } => {
            let o = dispatch(&run.resolve(Command::Classify)?, None)?;
            (o.summary, o.code)
        }
        Sub::Field { run } => {
            let o = dispatch(&run.resolve(Command::Field)?, None)?;
            (o.summary, o.code)
        }
    };
    println!("{outcome}");
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
