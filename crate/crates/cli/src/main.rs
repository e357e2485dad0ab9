use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use convex_auction::discretization::{discretization_gap, round_allocation};
use convex_auction::mechanisms::{Mechanism, Provenance};
use convex_auction::oracle::{export_program, verify, ConstraintKind, OracleConfig, ProgramKind};
use convex_auction::payments::robust_payment;
use convex_auction_cli::{
    parse_methods, run_experiment, run_method, write_csv, DistributionSpec, MechanismFile, Method, Settings,
};

/// Revenue-optimal auctions for bidders with quadratic perceived payments.
///
/// Exit status: 0 on success, 1 when a verification fails, 2 on usage or
/// input errors. CONVEX_AUCTION_THREADS caps the worker pool (0 = auto).
#[derive(Parser)]
#[command(name = "convex-auction", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on a symmetric instance.
    Solve {
        #[arg(long)]
        dist: DistributionSpec,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
        /// Where to write the mechanism file.
        #[arg(long, default_value = "mechanism.json")]
        out: PathBuf,
    },
    /// Verify a mechanism file.
    Check {
        file: PathBuf,
        /// Comma-separated constraint names; defaults to the mechanism's own set.
        #[arg(long, value_delimiter = ',')]
        constraints: Option<Vec<ConstraintKind>>,
    },
    /// Round a mechanism's allocation to a grid and report the cost.
    Discretize {
        file: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Write the rounded mechanism (robust payments) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one of the revenue programs as text.
    Export {
        #[arg(long)]
        program: ProgramKind,
        #[arg(long)]
        dist: DistributionSpec,
        #[arg(long)]
        n: usize,
    },
    /// Compare methods over a range of bidder counts and emit CSV.
    Experiment {
        /// key = value file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dist: Option<DistributionSpec>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        grid: Option<f64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Leave the runtime column empty so output is byte-stable.
        #[arg(long)]
        no_timing: bool,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Verification,
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<convex_auction::AuctionError> for Failure {
    fn from(e: convex_auction::AuctionError) -> Self {
        Failure::Usage(e.into())
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CONVEX_AUCTION_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow!("CONVEX_AUCTION_THREADS must be a non-negative integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn solve(
    dist: DistributionSpec,
    n: usize,
    method: Method,
    epsilon: f64,
    grid: f64,
    out: PathBuf,
) -> Result<(), Failure> {
    let inst = dist.instance(n)?;
    let oracle = OracleConfig::with_grid(grid);
    oracle.validate()?;
    let outcome = run_method(&inst, method, epsilon, &oracle)?.ok_or_else(|| {
        anyhow!(
            "{method} needs {} allocation variables, above the oracle cap of {}",
            inst.num_alloc_vars(),
            oracle.max_profile_vars
        )
    })?;
    let rep = &outcome.report;
    println!("method: {method}");
    println!("distribution: {dist}");
    println!("bidders: {n}");
    println!("objective_kind: {}", outcome.kind.name());
    println!("value: {}", outcome.value);
    println!("revenue: {}", outcome.revenue);
    if let Some(o) = &rep.oracle {
        println!("grid: {} (slack {})", o.grid, o.slack);
        if let Some(c) = o.continuous_optimum {
            println!("continuous_optimum: {c}");
        }
    }
    for c in &rep.verification.checks {
        println!("{}: {} (worst violation {})", c.kind, if c.passed { "pass" } else { "FAIL" }, c.worst_violation);
    }
    for w in &rep.warnings {
        println!("warning: {w:?}");
    }
    match outcome.mechanism {
        Some(mechanism) => {
            MechanismFile { instance: inst, mechanism }.save(&out)?;
            println!("mechanism: {}", out.display());
        }
        None => println!("mechanism: none ({method} yields an interim rule only)"),
    }
    if outcome.verified {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn check(file: PathBuf, constraints: Option<Vec<ConstraintKind>>) -> Result<(), Failure> {
    let mf = MechanismFile::load(&file)?;
    let kinds = constraints.unwrap_or_else(|| mf.mechanism.standard_constraints().to_vec());
    let rep = verify(&mf.instance, &mf.mechanism, &kinds)?;
    for c in &rep.checks {
        let note = c.note.as_deref().map(|n| format!(" [{n}]")).unwrap_or_default();
        println!("{}: {} (worst violation {}){note}", c.kind, if c.passed { "pass" } else { "FAIL" }, c.worst_violation);
    }
    if rep.all_passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn discretize(file: PathBuf, delta: f64, out: Option<PathBuf>) -> Result<(), Failure> {
    let mf = MechanismFile::load(&file)?;
    let rep = discretization_gap(&mf.instance, &mf.mechanism.allocation, delta)?;
    println!("delta: {}", rep.delta);
    println!("max_abs_residual: {}", rep.max_abs_residual);
    println!("perceived_payment_gap: {}", rep.perceived_payment_gap);
    println!("revenue_gap: {}", rep.revenue_gap);
    println!("bound: {}", if rep.bound_holds() { "holds" } else { "VIOLATED" });
    if let Some(path) = out {
        let (rounded, _) = round_allocation(&mf.instance, &mf.mechanism.allocation, delta)?;
        let pay = robust_payment(&rounded, &mf.instance)?;
        let mechanism = Mechanism::robust(rounded, pay, Provenance::Manual);
        MechanismFile { instance: mf.instance, mechanism }.save(&path)?;
        println!("mechanism: {}", path.display());
    }
    if rep.bound_holds() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    config: Option<PathBuf>,
    dist: Option<DistributionSpec>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    methods: Option<String>,
    epsilon: Option<f64>,
    grid: Option<f64>,
    output: Option<PathBuf>,
    no_timing: bool,
) -> Result<(), Failure> {
    let mut settings = match &config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(d) = dist {
        settings.set("distribution", d);
    }
    if let Some(v) = n_min {
        settings.set("n_min", v);
    }
    if let Some(v) = n_max {
        settings.set("n_max", v);
    }
    if let Some(m) = methods {
        parse_methods(&m)?;
        settings.set("methods", m);
    }
    if let Some(v) = epsilon {
        settings.set("epsilon", v);
    }
    if let Some(v) = grid {
        settings.set("oracle_grid", v);
    }
    if let Some(p) = output {
        settings.set("output", p.display());
    }
    if no_timing {
        settings.set("timing", false);
    }
    let cfg = settings.into_config()?;
    let rows = run_experiment(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&rows, f)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&rows, &mut lock)?;
            lock.flush().context("writing to stdout")?;
        }
    }
    if rows.iter().all(|r| r.verified) {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Solve { dist, n, method, epsilon, grid, out } => solve(dist, n, method, epsilon, grid, out),
        Command::Check { file, constraints } => check(file, constraints),
        Command::Discretize { file, delta, out } => discretize(file, delta, out),
        Command::Export { program, dist, n } => {
            print!("{}", export_program(&dist.instance(n)?, program));
            Ok(())
        }
        Command::Experiment { config, dist, n_min, n_max, methods, epsilon, grid, output, no_timing } => {
            experiment(config, dist, n_min, n_max, methods, epsilon, grid, output, no_timing)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
