use clap::{Args, Parser, Subcommand};
use exact_diffusion_cli::{cmd_epsstrong, cmd_oracle, cmd_simulate, exit_code, Algo, EpsTarget, RunConfig, OUT_DIR_ENV};
use std::path::PathBuf;

/// Exact (discretisation-error-free) simulation of diffusion and
/// jump-diffusion sample path skeletons, with epsilon-strong bounding
/// processes and an Euler reference sampler for validation.
#[derive(Parser)]
#[command(name = "exact-diffusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Built-in model name (zero, const, ou, sin, app1, app2) or a config
    /// file path
    #[arg(long, default_value = "ou")]
    model: String,

    /// Time horizon override for built-in models
    #[arg(long)]
    horizon: Option<f64>,

    /// Start state override for built-in models
    #[arg(long)]
    start: Option<f64>,

    /// Drift parameter for the `const` and `ou` models
    #[arg(long, default_value_t = 1.0)]
    drift_param: f64,

    /// Master seed; replication i uses stream i of this seed
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Number of replications
    #[arg(long, default_value_t = 1)]
    reps: u64,

    /// Output directory (default: $EXACT_DIFFUSION_OUT or ./out)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn into_config(self) -> RunConfig {
        let out = self
            .out
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let threads = self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
        RunConfig {
            model: self.model,
            horizon: self.horizon,
            start: self.start,
            drift_param: self.drift_param,
            seed: self.seed,
            reps: self.reps,
            out,
            threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate exact sample path skeletons
    Simulate {
        #[command(flatten)]
        common: CommonArgs,

        /// Algorithm: bea, uea, uea-bessel, auea, bjea, ujea, aujea,
        /// aujea-superposed
        #[arg(long, default_value = "auea")]
        algo: Algo,
    },
    /// Simulate epsilon-strong bounding staircases
    Epsstrong {
        #[command(flatten)]
        common: CommonArgs,

        /// Target: eps-bm (Brownian motion) or eps-jd (jump diffusion)
        #[arg(long, default_value = "eps-bm")]
        algo: String,

        /// Number of bisection rounds
        #[arg(long)]
        rounds: Option<u32>,

        /// Tolerance: bisect until every staircase gap is below this
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Euler-Maruyama reference samples (approximate, for validation)
    Oracle {
        #[command(flatten)]
        common: CommonArgs,

        /// Euler mesh size
        #[arg(long, default_value_t = 1e-3)]
        oracle_mesh: f64,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, algo } => cmd_simulate(&common.into_config(), algo),
        Command::Epsstrong { common, algo, rounds, epsilon } => {
            let target = match algo.as_str() {
                "eps-bm" => EpsTarget::BrownianMotion,
                "eps-jd" => EpsTarget::JumpDiffusion,
                other => {
                    eprintln!("error: unknown epsilon-strong target `{other}` (eps-bm or eps-jd)");
                    std::process::exit(2);
                }
            };
            cmd_epsstrong(&common.into_config(), target, rounds, epsilon)
        }
        Command::Oracle { common, oracle_mesh } => cmd_oracle(&common.into_config(), oracle_mesh),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
