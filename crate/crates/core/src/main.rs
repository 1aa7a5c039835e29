use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rsvm::estimator::{fit, BetaInit, EstimatorConfig, NoiseRule, Sidedness};
use rsvm::harness::{output, run_experiment, sweep, ExperimentSpec, RunOptions, SweepParam};
use rsvm::io::{read_matrix_csv, read_vector_csv, write_matrix_csv};
use rsvm::penalties::{PenaltyKind, DEFAULT_EPSILON, DEFAULT_SCHATTEN_S};
use rsvm::{Error, Result};

#[derive(Parser)]
#[command(name = "rsvm", version, about = "Bayesian low-rank matrix reconstruction and completion")]
struct Cli {
    /// Override the spec's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo trials (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory for results.csv, plot.svg and xhat.csv.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Record wall time per estimator call (makes results.csv run-dependent).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one Monte-Carlo experiment.
    Simulate {
        spec: PathBuf,
        #[command(flatten)]
        trials: TrialOverride,
    },
    /// Run an experiment per parameter value and plot NMSE against it.
    Sweep {
        spec: PathBuf,
        /// m_ratio, smnr_db or q; defaults to the spec's sweep block.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        trials: TrialOverride,
    },
    /// Estimate X from a measurement matrix and vector stored as CSV.
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct TrialOverride {
    /// Override the inner repetition count.
    #[arg(long)]
    t1: Option<usize>,
    /// Override the outer repetition count.
    #[arg(long)]
    t2: Option<usize>,
    /// Use 25 x 25 trials.
    #[arg(long, conflicts_with_all = ["t1", "t2"])]
    full: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Schatten,
    LogDet,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidedArg {
    Left,
    Right,
    TwoSided,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Trace,
    Gamma,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long = "A", value_name = "CSV")]
    a: PathBuf,
    #[arg(long, value_name = "CSV")]
    y: PathBuf,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    #[arg(long, value_enum, default_value = "schatten")]
    penalty: PenaltyArg,
    #[arg(long, default_value_t = DEFAULT_SCHATTEN_S)]
    s: f64,
    /// Log-det weight; defaults to max(p, q).
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "two-sided")]
    sided: SidedArg,
    #[arg(long, value_enum, default_value = "trace")]
    noise_rule: NoiseArg,
    #[arg(long)]
    no_balancing: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    a_hyper: Option<f64>,
    #[arg(long)]
    b_hyper: Option<f64>,
    /// Fixed initial noise precision instead of m / |y|^2.
    #[arg(long)]
    beta_init: Option<f64>,
}

fn load_spec(path: &Path, seed: Option<u64>, trials: &TrialOverride) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    if trials.full {
        spec.t1 = 25;
        spec.t2 = 25;
    }
    if let Some(t) = trials.t1 {
        spec.t1 = t;
    }
    if let Some(t) = trials.t2 {
        spec.t2 = t;
    }
    spec.validate()?;
    Ok(spec)
}

fn reconstruct(args: &ReconstructArgs, out_dir: &Path) -> Result<()> {
    let a = read_matrix_csv(&args.a).map_err(|e| Error::Spec(format!("{}: {e}", args.a.display())))?;
    let y = read_vector_csv(&args.y).map_err(|e| Error::Spec(format!("{}: {e}", args.y.display())))?;
    let defaults = EstimatorConfig::default();
    let penalty = match args.penalty {
        PenaltyArg::Schatten => PenaltyKind::SchattenS {
            s: args.s,
            epsilon: args.epsilon,
        },
        PenaltyArg::LogDet => PenaltyKind::LogDet {
            nu: args.nu.unwrap_or(args.p.max(args.q) as f64),
            epsilon: args.epsilon,
        },
    };
    let config = EstimatorConfig {
        penalty,
        sided: match args.sided {
            SidedArg::Left => Sidedness::Left,
            SidedArg::Right => Sidedness::Right,
            SidedArg::TwoSided => Sidedness::TwoSided,
        },
        noise_rule: match args.noise_rule {
            NoiseArg::Trace => NoiseRule::TraceForm,
            NoiseArg::Gamma => NoiseRule::GammaForm,
        },
        a: args.a_hyper.unwrap_or(defaults.a),
        b: args.b_hyper.unwrap_or(defaults.b),
        balancing: !args.no_balancing,
        max_iters: args.max_iters.unwrap_or(defaults.max_iters),
        tol: args.tol.unwrap_or(defaults.tol),
        beta_init: args.beta_init.map_or(BetaInit::Auto, BetaInit::Fixed),
        track_objective: false,
    };
    config.validate(args.p, args.q).map_err(|e| Error::Spec(e.to_string()))?;
    let res = fit(&a, &y, args.p, args.q, &config).map_err(|e| match e {
        Error::Dimension { .. } => Error::Spec(e.to_string()),
        other => other,
    })?;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("xhat.csv");
    write_matrix_csv(&path, &res.state.xhat)?;
    let sv: Vec<String> = res.singular_values().iter().map(|v| format!("{v:.6e}")).collect();
    println!("iterations: {}", res.iterations);
    println!("converged: {}", res.converged);
    println!("beta: {:.6e}", res.state.beta);
    println!("singular values: {}", sv.join(" "));
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let opts = RunOptions {
        threads: cli.threads,
        timing: cli.timing,
    };
    match &cli.command {
        Command::Simulate { spec, trials } => {
            let spec = load_spec(spec, cli.seed, trials)?;
            let res = run_experiment(&spec, &opts)?;
            output::write_experiment(&cli.out_dir, &res)?;
            print!("{}", output::experiment_csv(&res));
        }
        Command::Sweep {
            spec,
            param,
            values,
            trials,
        } => {
            let spec = load_spec(spec, cli.seed, trials)?;
            let (param, values) = match (param, values, &spec.sweep) {
                (Some(p), Some(v), _) => (p.parse::<SweepParam>()?, v.clone()),
                (None, None, Some(sw)) => (sw.param, sw.values.clone()),
                (None, None, None) => return Err(Error::Spec("no --param/--values and no sweep block in the spec".into())),
                _ => return Err(Error::Spec("--param and --values go together".into())),
            };
            let res = sweep(&spec, param, &values, &opts)?;
            output::write_sweep(&cli.out_dir, &res)?;
            print!("{}", output::sweep_csv(&res));
        }
        Command::Reconstruct(args) => reconstruct(args, &cli.out_dir)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
