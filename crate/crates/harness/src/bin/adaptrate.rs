use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use adaptrate_core::design::{run_adaptive, run_periodic};
use adaptrate_core::{DesignConfig, ModelSpec, PriorSpec, SimulatedObserver};
use adaptrate_harness::{invariants, result, run_study, StudySpec, SEED_ENV};
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "adaptrate", version, about = "Adaptive sampling-time design for Markov chain rate inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study described by a TOML spec and write its result CSV.
    Study {
        spec: PathBuf,
        /// Master seed; overrides ADAPTRATE_SEED and the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Replicates per cell; overrides the spec.
        #[arg(long)]
        replicates: Option<usize>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Output CSV; defaults to the spec's `out`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the engine self-checks and, if given, validate a study spec.
    Validate {
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate one inference run and write its trace CSV.
    Run(RunArgs),
    /// Serve the session HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for session snapshots; sessions are kept in memory only
        /// when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorFamily {
    Gamma,
    Bivariate,
    Truncated,
    Bernoulli,
}

#[derive(clap::Args)]
struct RunArgs {
    /// two_state_unidirectional, two_state_bidirectional, mm1_queue, ring or binary_digraph
    #[arg(long)]
    model: String,
    #[arg(long, value_enum)]
    prior: Option<PriorFamily>,
    /// Edge probability of the Bernoulli structure prior.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// True rates, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Sample every `period` instead of at optimized times.
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    state_cap: Option<usize>,
    #[arg(long, default_value_t = adaptrate_core::grid::DEFAULT_NODES)]
    nodes: usize,
    #[arg(long, default_value_t = adaptrate_core::grid::DEFAULT_H_MAX)]
    h_max: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("{SEED_ENV}={s} is not an unsigned integer"))?)),
        Err(_) => Ok(None),
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn study(
    path: PathBuf,
    seed: Option<u64>,
    replicates: Option<usize>,
    threads: usize,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut spec = StudySpec::load(&path)?;
    if let Some(s) = seed.or(env_seed()?) {
        spec.seed = s;
    }
    if let Some(r) = replicates {
        spec.replicates = r;
        spec.validate()?;
    }
    let res = run_study(&spec, threads)?;
    let out = out.or_else(|| spec.out.clone());
    emit(&result::to_csv_string(&res.rows), out.as_ref())
}

fn validate(spec: Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<()> {
    if let Some(path) = spec {
        let s = StudySpec::load(&path)?;
        println!("PASS spec {}", s.name);
    }
    let checks = invariants::run_all(seed.or(env_seed()?).unwrap_or(0));
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let model = ModelSpec {
        kind: a.model.clone(),
        m: a.m,
        state_cap: a.state_cap,
        protocol: None,
        initial_state: 0,
        edges: None,
    }
    .build()?;
    let prior = match a.prior {
        Some(PriorFamily::Gamma) => PriorSpec::default_gamma(),
        Some(PriorFamily::Bivariate) => PriorSpec::default_bivariate(),
        Some(PriorFamily::Truncated) => PriorSpec::default_truncated(),
        Some(PriorFamily::Bernoulli) => PriorSpec::BernoulliStructure { p: a.p, m: a.m.unwrap_or(0) },
        None => match model.d() {
            1 => PriorSpec::default_gamma(),
            2 => PriorSpec::default_bivariate(),
            d => bail!("model has {d} rates; choose a prior with --prior"),
        },
    };
    if a.rates.len() != model.d() {
        bail!("--rates needs {} values for this model, got {}", model.d(), a.rates.len());
    }
    let prior = adaptrate_core::prior_on_grid(&prior, a.h_max, a.nodes)?;
    let seed = a.seed.or(env_seed()?).unwrap_or(0);
    let config = DesignConfig { seed, ..DesignConfig::with_theta(a.theta) };
    let mut obs = SimulatedObserver::new(a.rates.clone(), seed);
    let trace = match a.period {
        Some(t) => run_periodic(&model, &prior, &config, t, &mut obs)?,
        None => run_adaptive(&model, &prior, &config, &mut obs)?,
    };
    emit(&trace.to_csv_string(), a.out.as_ref())
}

fn serve(host: &str, port: u16, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(adaptrate_service::serve(&format!("{host}:{port}"), data_dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Study { spec, seed, replicates, threads, out } => study(spec, seed, replicates, threads, out),
        Command::Validate { spec, seed } => validate(spec, seed),
        Command::Run(a) => run(a),
        Command::Serve { host, port, data_dir } => serve(&host, port, data_dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
