use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gkdv_core::resonance::CaseConstants;
use gkdv_harness::commands::{
    cases_command, decompose_command, ensemble_command, simulate_command, smoothing_study_command,
};
use gkdv_harness::{HarnessError, Result, RunConfig};

/// Simulation, decomposition and study driver for the damped, forced
/// generalized KdV equation on the torus.
#[derive(Parser, Debug)]
#[command(name = "gkdv", version)]
struct Cli {
    /// Worker threads for ensembles; GKDV_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory; writes run.csv and summary.json.
    Simulate(RunArgs),
    /// Split the nonlinearity of the initial data; writes decompose_report.json.
    Decompose(RunArgs),
    /// Exhaustive case-coverage scan; writes cases_report.json.
    Cases {
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        bound: usize,
        /// Uniform constant; defaults to the certified one.
        #[arg(long, conflicts_with = "constants")]
        constant: Option<f64>,
        /// Separate constants as `a,c,d`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        constants: Option<Vec<f64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Resolution refinement of the smoothing metric; writes study.csv and study.json.
    SmoothingStudy(RunArgs),
    /// Seeded ensemble of runs; writes ensemble.csv and ensemble.json.
    Ensemble {
        #[command(flatten)]
        run: RunArgs,
        /// Overrides ensemble.count.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("GKDV_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| HarnessError::Config(format!("GKDV_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(HarnessError::Config("thread count must be positive".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(args) => {
            let summary = simulate_command(&args.load()?, &args.out)?;
            println!(
                "simulate: {} samples to t = {}, wrote {}",
                summary.samples,
                summary.final_t,
                args.out.display()
            );
            if let Some(abort) = summary.abort {
                eprintln!("run aborted ({}) at step {}, t = {}", abort.kind, abort.step, abort.t);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Decompose(args) => {
            let report = decompose_command(&args.load()?, &args.out)?;
            let p = &report.partition;
            println!(
                "decompose: resonance residual {:e}, high-low residual {:e} (scale {:e})",
                p.resonance_residual, p.high_low_residual, p.scale
            );
        }
        Command::Cases {
            degree,
            bound,
            constant,
            constants,
            out,
        } => {
            let constants = match (constant, constants) {
                (Some(c), _) => Some(CaseConstants::uniform(c)),
                (None, Some(v)) => Some(CaseConstants {
                    a: v[0],
                    c: v[1],
                    d: v[2],
                }),
                (None, None) => None,
            };
            let report = cases_command(degree, bound, constants, &out)?;
            println!(
                "cases: n = {degree}, K = {bound}, certified constant {}, {} tuples, {} uncovered",
                report.certified_constant, report.tuples, report.uncovered
            );
        }
        Command::SmoothingStudy(args) => {
            let report = smoothing_study_command(&args.load()?, &args.out)?;
            println!("smoothing-study: verdict {}", report.verdict);
        }
        Command::Ensemble { run, count } => {
            let report = ensemble_command(&run.load()?, count, &run.out)?;
            println!(
                "ensemble: {} runs, radius {}, all entered: {}",
                report.count, report.radius, report.all_entered
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
