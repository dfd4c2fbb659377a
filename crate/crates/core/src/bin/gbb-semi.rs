use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gbb_semi::gbb::{LogBase, Mode};
use gbb_semi::harness::{
    self, run_cell, write_rounds_csv, write_summary_csv, ExperimentConfig, InstanceSource,
    MechanismSpec,
};
use gbb_semi::lemmas::lemma_test_suite;
use gbb_semi::oracle::{best_fixed_price, k_star};
use gbb_semi::values::{realize, resolve_instance};
use gbb_semi::{Error, Params};

const FORMATS: &str = "\
Instance files (--instance accepts a builtin name or a path):
  builtins: uniform-square, interior-spike, diagonal-hard
  value sequence CSV: header `round,s,b`, rows numbered 1..T in order,
    values in [0, 1]. The file length must equal --T.
  distribution JSON (i.i.d. draws each round):
    {\"kind\":\"correlated_iid\",\"atoms\":[{\"s\":0.3,\"b\":0.7,\"w\":0.5}, ...]}
    {\"kind\":\"independent_iid\",\"s_atoms\":[{\"v\":0.2,\"w\":1.0}],\"b_atoms\":[...]}
    weights must be nonnegative and sum to 1.

Summary CSV columns:
  T,seed,mechanism,total_gft,benchmark_gft,regret,normalized_regret,
  final_profit,T_prime,valve_triggered
  normalized_regret = regret / (T ln T)^(2/3); valve_triggered is 0 or 1.
Round CSV columns:
  round,phase,p,q,trade,gft,profit,cum_profit
  phase is one of profitmax, phase2, safety_valve, fixed.

Sweep config JSON:
  {\"instance\": <builtin, path or inline distribution object>,
   \"T_values\": [10000, 100000],
   \"mechanism\": \"gbb-semi\" | \"profitmax-only\" | \"constant:<p>\"
                | {\"name\":\"gbb-semi\",\"phase2_only\":true,\"K\":4,\"beta\":10.0},
   \"seeds\": [1, 2, 3],
   \"output_path\": \"summary.csv\",
   \"rounds_csv_dir\": \"rounds\"      (optional)
   \"parallel\": true}                (optional, default true)
  Relative paths resolve against the config file's directory. A plotting
  script <output stem>_plot.py is written next to the summary.

Exit codes: 0 success, 1 runtime error, 2 invalid flags or inputs.";

#[derive(Parser)]
#[command(
    name = "gbb-semi",
    version,
    about = "Fixed-price bilateral trade simulations with a global budget constraint",
    after_help = FORMATS
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mechanism on one instance and write a summary row.
    #[command(after_help = FORMATS)]
    Simulate {
        /// gbb-semi, profitmax-only or constant:<p>.
        #[arg(long)]
        mechanism: String,
        /// Builtin instance name or path to a CSV/JSON instance file.
        #[arg(long)]
        instance: String,
        /// Horizon (number of rounds), at least 2.
        #[arg(long = "T")]
        horizon: usize,
        /// Seed for values and mechanism randomness.
        #[arg(long)]
        seed: u64,
        /// Summary CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-round CSV here.
        #[arg(long = "rounds-csv")]
        rounds_csv: Option<PathBuf>,
        /// Skip the profit-banking phase (gbb-semi only).
        #[arg(long = "phase2-only")]
        phase2_only: bool,
    },
    /// Best fixed diagonal price in hindsight for a realized instance.
    #[command(after_help = FORMATS)]
    Oracle {
        /// Builtin instance name or path to a CSV/JSON instance file.
        #[arg(long)]
        instance: String,
        /// Horizon, at least 1.
        #[arg(long = "T")]
        horizon: usize,
        /// Seed used to realize i.i.d. instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomized checks of the per-round inequalities.
    #[command(after_help = FORMATS)]
    Lemmas {
        /// Discretization cases; Monte Carlo rounds and pathwise runs scale
        /// with it.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a (T, seed) grid from a JSON config and emit a plotting script.
    #[command(after_help = FORMATS)]
    Sweep {
        /// Path to the sweep config JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Print K, beta, eta and gamma for a horizon.
    #[command(after_help = FORMATS)]
    Params {
        /// Horizon, at least 2.
        #[arg(long = "T")]
        horizon: usize,
        /// Logarithm base used in the parameter formulas.
        #[arg(long = "log-base", value_enum, default_value_t = Base::Natural)]
        log_base: Base,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Base {
    Natural,
    Two,
    Ten,
}

impl From<Base> for LogBase {
    fn from(b: Base) -> Self {
        match b {
            Base::Natural => LogBase::Natural,
            Base::Two => LogBase::Two,
            Base::Ten => LogBase::Ten,
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(flag: &str, e: impl Display) -> Failure {
    Failure::Usage(format!("{flag}: {e}"))
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn simulate(
    mechanism: &str,
    instance: &str,
    horizon: usize,
    seed: u64,
    out: &PathBuf,
    rounds_csv: Option<&PathBuf>,
    phase2_only: bool,
) -> Result<(), Failure> {
    let mut mech: MechanismSpec = mechanism.parse().map_err(|e| usage("--mechanism", e))?;
    if phase2_only {
        match &mut mech {
            MechanismSpec::GbbSemi { mode, .. } => *mode = Mode::Phase2Only,
            _ => return Err(usage("--phase2-only", "only valid with --mechanism gbb-semi")),
        }
    }
    if horizon < 2 {
        return Err(usage("--T", format!("must be at least 2, got {horizon}")));
    }
    mech.params(horizon).map_err(|e| usage("--T", e))?;
    let source = InstanceSource::Named(instance.to_string());
    let spec = source.resolve(horizon).map_err(|e| usage("--instance", e))?;
    // A fixed sequence must cover exactly T rounds.
    realize(&spec, horizon, seed).map_err(|e| usage("--instance", e))?;

    let cell = run_cell(&source, &mech, horizon, seed)?;
    write_summary_csv(std::slice::from_ref(&cell.summary), out)?;
    if let Some(path) = rounds_csv {
        write_rounds_csv(&cell.records, path)?;
    }
    let s = &cell.summary;
    println!(
        "mechanism={} T={} seed={} regret={} normalized_regret={} final_profit={} T_prime={} valve_triggered={}",
        s.mechanism,
        s.horizon,
        s.seed,
        s.regret,
        s.normalized_regret,
        s.final_profit,
        s.t_prime,
        u8::from(s.valve_triggered)
    );
    Ok(())
}

fn oracle(instance: &str, horizon: usize, seed: u64) -> Result<(), Failure> {
    if horizon < 1 {
        return Err(usage("--T", "must be at least 1"));
    }
    let spec = resolve_instance(instance, horizon).map_err(|e| usage("--instance", e))?;
    let seq = realize(&spec, horizon, seed).map_err(|e| usage("--instance", e))?;
    let bench = best_fixed_price(&seq);
    println!("p_star={} gft_star={}", bench.p_star, bench.gft_star);
    if let Ok(params) = Params::from_horizon(horizon) {
        println!("K={} k_star={}", params.arms, k_star(bench.p_star, params.arms));
    }
    Ok(())
}

fn lemmas(trials: usize, seed: u64) -> Result<(), Failure> {
    if trials == 0 {
        return Err(usage("--trials", "must be positive"));
    }
    let report = lemma_test_suite(trials, seed)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Runtime("one or more checks failed".into()))
    }
}

fn sweep(config: &PathBuf) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(|e| usage("--config", e))?;
    let rows = harness::run_experiment(&cfg)?;
    println!(
        "{} rows -> {} (plot script {})",
        rows.len(),
        cfg.output_path.display(),
        harness::plot_script_path(&cfg.output_path).display()
    );
    Ok(())
}

fn params(horizon: usize, base: Base) -> Result<(), Failure> {
    let p = Params::from_horizon_with_base(horizon, base.into()).map_err(|e| usage("--T", e))?;
    println!(
        "T={} K={} gamma={} beta={} eta={:.6e}",
        p.horizon, p.arms, p.gamma, p.beta, p.eta
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate {
            mechanism,
            instance,
            horizon,
            seed,
            out,
            rounds_csv,
            phase2_only,
        } => simulate(
            mechanism,
            instance,
            *horizon,
            *seed,
            out,
            rounds_csv.as_ref(),
            *phase2_only,
        ),
        Command::Oracle {
            instance,
            horizon,
            seed,
        } => oracle(instance, *horizon, *seed),
        Command::Lemmas { trials, seed } => lemmas(*trials, *seed),
        Command::Sweep { config } => sweep(config),
        Command::Params { horizon, log_base } => params(*horizon, *log_base),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
