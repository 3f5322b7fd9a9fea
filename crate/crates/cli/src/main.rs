//! `exclusion`: monotonicity checks, coupling tables, exact computations and
//! simulation of exclusion processes on a ring.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use exclusion_core::{Configuration, CouplingKind, ModelId};

use config::{parse_config, validate_config, Command, ExactCheck, Format, ModelConfig, RunConfig};
use output::{write_atomic, Status};

#[derive(Parser)]
#[command(name = "exclusion", version, about = "Exclusion processes on a ring: monotonicity, couplings, exact checks, simulation")]
struct Cli {
    /// Worker threads for replicas (0 picks the number of cores).
    #[arg(long, global = true, env = "EXCLUSION_THREADS")]
    threads: Option<usize>,
    /// Write the report to this file (atomically) instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Report format [default: csv].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Print the equivalent configuration file and exit.
    #[arg(long, global = true)]
    emit_config: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Decide whether a rate specification is monotone.
    CheckMonotone {
        #[command(flatten)]
        model: ModelArgs,
        /// Rational arithmetic instead of f64.
        #[arg(long)]
        exact: bool,
    },
    /// Coupled rates and marginal residuals for a pair of configurations.
    CouplingTable {
        #[command(flatten)]
        model: ModelArgs,
        /// First configuration as a 0/1 string, site 0 first.
        #[arg(long)]
        xi: Configuration,
        #[arg(long)]
        zeta: Configuration,
        /// Coupling: increasing, attractive or strict.
        #[arg(long, default_value = "attractive")]
        kind: CouplingKind,
        #[arg(long)]
        exact: bool,
    },
    /// Exhaustive computation on a small ring.
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of sites on the ring.
        #[arg(long = "L", default_value_t = 6)]
        len: usize,
        /// Computation to run.
        #[arg(long, value_enum, default_value = "stationary")]
        check: ExactCheck,
        /// Coupling: increasing, attractive or strict.
        #[arg(long, default_value = "attractive")]
        kind: CouplingKind,
        #[arg(long)]
        exact: bool,
    },
    /// Simulate a single or coupled process.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of sites on the ring.
        #[arg(long = "L", default_value_t = 16)]
        len: usize,
        /// Fraction of occupied sites in random starts.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Start of the (first) process as a 0/1 string; sets L.
        #[arg(long)]
        xi: Option<Configuration>,
        /// Start of the second process; implies --coupled.
        #[arg(long)]
        zeta: Option<Configuration>,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        sample_dt: f64,
        /// Seed of the ChaCha8 generator; replica i uses stream i.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        /// Run the coupled process of two configurations.
        #[arg(long)]
        coupled: bool,
        /// Coupling: increasing, attractive or strict.
        #[arg(long, default_value = "attractive")]
        kind: CouplingKind,
        /// Add per-site density columns.
        #[arg(long)]
        profile: bool,
    },
    /// Run the acceptance criteria.
    GoldenSuite {
        /// Criterion numbers or identifiers; repeatable.
        #[arg(long)]
        only: Vec<String>,
    },
    /// List the built-in models.
    Zoo,
    /// Execute a TOML configuration file.
    Run { config: PathBuf },
}

#[derive(Args)]
struct ModelArgs {
    /// Model name (see `zoo`), or custom_table with --table.
    model: ModelId,
    /// Parameters, positional (`0.3 0.7`) or named (`alpha=0.3`).
    params: Vec<String>,
    /// Custom rate table, one `offset, pattern, rate` row per line.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Dependence radius of the custom table.
    #[arg(long)]
    radius: Option<usize>,
}

impl ModelArgs {
    fn config(&self) -> anyhow::Result<ModelConfig> {
        if self.model != ModelId::CustomTable {
            if self.table.is_some() || self.radius.is_some() {
                bail!("--table and --radius only apply to custom_table");
            }
            return Ok(ModelConfig::from_args(self.model, &self.params)?);
        }
        let Some(path) = &self.table else { bail!("custom_table needs --table FILE") };
        if !self.params.is_empty() {
            bail!("custom_table takes no parameters");
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        Ok(ModelConfig { name: ModelId::CustomTable, params: Default::default(), radius: self.radius, entries })
    }
}

/// Lattice size from the explicit configurations when given.
fn ring_len(len: usize, xi: Option<&Configuration>) -> usize {
    xi.map_or(len, |c| c.len())
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.command {
        Sub::Run { config } => {
            let text = std::fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
            parse_config(&text).map_err(|diags| {
                let lines: Vec<String> = diags.iter().map(|d| format!("  {d}")).collect();
                anyhow::anyhow!("invalid configuration {}:\n{}", config.display(), lines.join("\n"))
            })?
        }
        Sub::CheckMonotone { model, exact } => {
            let mut c = RunConfig::new(Command::CheckMonotone);
            c.model = Some(model.config()?);
            c.execution.exact = *exact;
            c
        }
        Sub::CouplingTable { model, xi, zeta, kind, exact } => {
            let mut c = RunConfig::new(Command::CouplingTable);
            c.model = Some(model.config()?);
            c.lattice.len = xi.len();
            c.lattice.xi = Some(*xi);
            c.lattice.zeta = Some(*zeta);
            c.execution.kind = *kind;
            c.execution.exact = *exact;
            c
        }
        Sub::Exact { model, len, check, kind, exact } => {
            let mut c = RunConfig::new(Command::Exact);
            c.model = Some(model.config()?);
            c.lattice.len = *len;
            c.execution.check = *check;
            c.execution.kind = *kind;
            c.execution.exact = *exact;
            c
        }
        Sub::Simulate { model, len, density, xi, zeta, t_end, sample_dt, seed, replicas, coupled, kind, profile } => {
            let mut c = RunConfig::new(Command::Simulate);
            c.model = Some(model.config()?);
            c.lattice.len = ring_len(*len, xi.as_ref());
            c.lattice.density = *density;
            c.lattice.xi = *xi;
            c.lattice.zeta = *zeta;
            c.execution.t_end = *t_end;
            c.execution.sample_dt = *sample_dt;
            c.execution.seed = *seed;
            c.execution.replicas = *replicas;
            c.execution.coupled = *coupled || zeta.is_some();
            c.execution.kind = *kind;
            c.execution.profile = *profile;
            c
        }
        Sub::GoldenSuite { only } => {
            let mut c = RunConfig::new(Command::GoldenSuite);
            c.execution.only = only.clone();
            c
        }
        Sub::Zoo => RunConfig::new(Command::Zoo),
    };
    if let Some(path) = &cli.output {
        config.output.path = Some(path.clone());
    }
    if let Some(format) = cli.format {
        config.output.format = format;
    }
    let diags = validate_config(&config);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("  {d}")).collect();
        bail!("invalid arguments:\n{}", lines.join("\n"));
    }
    Ok(config)
}

fn execute(cli: &Cli) -> anyhow::Result<Status> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot start the thread pool")?;
    }
    let config = build_config(cli)?;
    if cli.emit_config {
        print!("{}", config.to_toml());
        return Ok(Status::Ok);
    }
    let report = commands::run(&config)?;
    let text = report.render(config.output.format)?;
    match &config.output.path {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            println!("{}", report.summary);
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                // a closed reader (`| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
            eprintln!("{}", report.summary);
        }
    }
    Ok(report.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
