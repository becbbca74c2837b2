use std::path::PathBuf;
use std::process::ExitCode;

use adaptmeas_cli::plan::{self, Overrides, RunPlan, PRESETS};
use adaptmeas_cli::sweep::{run_sweep, SweepParam};
use adaptmeas_cli::verify::{print_table, run_checks, VerifyOptions};
use adaptmeas_cli::{execute_plan, CliError};
use adaptmeas_core::Tier;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptmeas", version, about = "Adaptive measurement experiments on a single qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a plan file and write CSVs and a manifest.
    Run(RunArgs),
    /// Repeat a run for several values of one numeric parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config field to vary (detuning, detuning_nominal, alpha, k, kappa, dt, ...).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the built-in verification checks and print a table.
    Verify {
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, hide = true)]
        inject_innovation_flip: bool,
    },
    /// List preset names.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML plan, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory [default: runs/<label>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tier: Option<Tier>,
    #[arg(long)]
    stride: Option<usize>,
}

impl RunArgs {
    fn plan(&self) -> Result<RunPlan, CliError> {
        let mut plan = match (&self.preset, &self.config) {
            (Some(name), _) => plan::preset(name)?,
            (None, Some(path)) => RunPlan::load(path)?,
            (None, None) => return Err(CliError::config("preset", "give --preset or --config")),
        };
        plan.apply(&Overrides {
            paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            tier: self.tier,
            stride: self.stride,
        });
        Ok(plan)
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(adaptmeas_core::ensemble::default_workers)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run(args) => {
            let plan = args.plan()?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&plan.label));
            let outcome = execute_plan(&plan, &out, args.workers(), "run")?;
            for f in &outcome.manifest.files {
                println!("{}", out.join(&f.path).display());
            }
        }
        Command::Sweep { run, param, values } => {
            let plan = run.plan()?;
            let param = SweepParam::parse(&param)?;
            let out = run
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-sweep-{}", plan.label, param.name())));
            run_sweep(&plan, param, &values, &out, run.workers())?;
            println!("{}", out.join(adaptmeas_cli::sweep::INDEX).display());
        }
        Command::Verify { dt, seed, workers, inject_innovation_flip } => {
            let opts = VerifyOptions {
                dt,
                seed,
                workers: workers.unwrap_or_else(adaptmeas_core::ensemble::default_workers),
                inject_innovation_flip,
            };
            let rows = run_checks(&opts);
            print_table(&mut std::io::stdout().lock(), &rows).map_err(|e| CliError::io("stdout".as_ref(), e))?;
            if rows.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Presets => PRESETS.iter().for_each(|p| println!("{p}")),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
