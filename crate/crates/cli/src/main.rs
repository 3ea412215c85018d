use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqr_ioc::assembly::SignConvention;
use lqr_ioc::experiments::{self, Execution, PipelineRun, RunConfig};
use lqr_ioc::lqr::{self, Instance};
use lqr_ioc::recovery::{ModelJson, RecoveredModel};
use lqr_ioc::IocError;
use serde_json::json;

const EXIT_USAGE: u8 = 2;
const EXIT_MISS: u8 = 5;

#[derive(Parser)]
#[command(name = "lqr-ioc", version, about = "Recover an equivalent LQR model from one expert trajectory")]
struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `standard` or `paper`.
    #[arg(long, global = true)]
    sign: Option<SignConvention>,
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SystemArg {
    /// System JSON (defaults to the built-in reference instance).
    #[arg(long)]
    system: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random stabilizable system with random weights.
    Gen {
        #[arg(short, value_parser = clap::value_parser!(u16).range(1..))]
        n: u16,
        #[arg(short, value_parser = clap::value_parser!(u16).range(1..))]
        m: u16,
    },
    /// Simulate the optimal closed loop and write expert.csv.
    Simulate(SystemArg),
    /// Run the full pipeline on one system.
    Solve {
        #[command(flatten)]
        system: SystemArg,
        /// Also write omega.csv, h_dual.csv and w_offset.csv.
        #[arg(long)]
        dump: bool,
    },
    /// Check a recovered model against a system's expert data.
    Verify {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the reference experiment and compare with the published figures.
    ReproPaper,
    /// Independent random trials; trial i uses seed + i.
    Montecarlo {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(short)]
        n: Option<usize>,
        #[arg(short)]
        m: Option<usize>,
        /// Run trials on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

fn exit_code(err: &IocError) -> u8 {
    match err {
        IocError::Argument(_) => EXIT_USAGE,
        IocError::InsufficientExcitation(_) => 3,
        IocError::NumericalBreakdown(_) => 4,
        IocError::GenerationFailure(_) => 6,
        IocError::InfeasibleModel(_) => 7,
        IocError::RecoveryFailure(_) => 8,
        IocError::Format(_) | IocError::Io(_) => 9,
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(std::io::stdout(), "{}", msg.as_ref());
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, IocError> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

fn load_system(arg: &SystemArg) -> Result<Instance, IocError> {
    match &arg.system {
        Some(p) => Instance::read_json(p),
        None => Ok(lqr::nominal_instance()),
    }
}

fn write_run(ctx: &Ctx, run: &PipelineRun) -> Result<(), IocError> {
    let report = run.report(&ctx.cfg);
    ctx.write("report.json", serde_json::to_string_pretty(&report)?)?;
    run.outcome.trace.write_csv(&ctx.out.join("trace.csv"))?;
    run.expert.write_csv(&ctx.out.join("expert.csv"))?;
    if let Some(replay) = run.fit.as_ref().and_then(|f| f.reconstructed.as_ref()) {
        replay.write_csv(&ctx.out.join("reconstructed.csv"))?;
    }
    if let Some(model) = &run.model {
        ctx.write("model.json", serde_json::to_string_pretty(&ModelJson::from(model))?)?;
    }
    Ok(())
}

fn summarize(ctx: &Ctx, run: &PipelineRun) {
    let trace = &run.outcome.trace;
    ctx.say(format!("status      {} after {} cycles ({})", trace.status.as_str(), trace.iterations(), trace.stop_reason));
    match (&run.certificate, &run.recovery_error) {
        (Some(c), _) => {
            ctx.say(format!("gain error  {:.3e}", c.gain_error));
            ctx.say(format!("deriv match {:.3e}", c.derivative_match.max_residual));
            ctx.say(format!("traj mse    {:.3e}", c.trajectory_mse));
        }
        (None, Some(e)) => ctx.say(format!("no model: {e}")),
        (None, None) => {}
    }
    ctx.say(format!("verdict     {}", if run.passed() { "pass" } else { "fail" }));
}

fn run(cli: Cli) -> Result<u8, IocError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(sign) = cli.sign {
        cfg.sign = sign;
    }
    let mut ctx = Ctx { cfg, out: cli.out, quiet: cli.quiet };

    match cli.command {
        Command::Gen { n, m } => {
            let inst = lqr::random_system(n.into(), m.into(), ctx.cfg.seed)?;
            lqr::solve_care(&inst.system, &inst.cost)?;
            let path = ctx.write("system.json", inst.to_json()?)?;
            ctx.say(format!("wrote {}", path.display()));
            Ok(0)
        }
        Command::Simulate(arg) => {
            let inst = load_system(&arg)?;
            let (_, expert) = experiments::expert_trajectory(&inst, &ctx.cfg)?;
            fs::create_dir_all(&ctx.out)?;
            expert.write_csv(&ctx.out.join("expert.csv"))?;
            ctx.say(format!("wrote {} samples to {}", expert.len(), ctx.out.join("expert.csv").display()));
            Ok(0)
        }
        Command::Solve { system, dump } => {
            let inst = load_system(&system)?;
            let run = experiments::run_pipeline(&inst, &ctx.cfg)?;
            write_run(&ctx, &run)?;
            if dump {
                run.problem.dump_csv(&ctx.out)?;
            }
            summarize(&ctx, &run);
            Ok(match (&run.recovery_error, run.passed()) {
                (_, true) => 0,
                (Some(_), false) => exit_code(&IocError::RecoveryFailure(String::new())),
                (None, false) => EXIT_MISS,
            })
        }
        Command::Verify { system, model } => {
            let inst = load_system(&system)?;
            let text = fs::read_to_string(&model)?;
            let model = RecoveredModel::try_from(&serde_json::from_str::<ModelJson>(&text)?)?;
            let report = experiments::verify_model(&inst, &model, &ctx.cfg)?;
            ctx.write("verify.json", serde_json::to_string_pretty(&report)?)?;
            ctx.say(format!(
                "gain error {:.3e}  deriv match {:.3e}  traj mse {:.3e}  {}",
                report.gain_error_true,
                report.derivative_match.max_residual,
                report.trajectory_mse,
                if report.passed { "pass" } else { "fail" }
            ));
            Ok(if report.passed { 0 } else { EXIT_MISS })
        }
        Command::ReproPaper => {
            let repro = experiments::reproduce_reference(&ctx.cfg)?;
            write_run(&ctx, &repro.run)?;
            ctx.write("comparison.csv", repro.table_csv())?;
            ctx.write("checks.json", serde_json::to_string_pretty(&repro.checks)?)?;
            ctx.say("metric           ours          published");
            for row in &repro.table {
                ctx.say(format!("{:<16} {:<13.4e} {:.4e}", row.metric, row.ours, row.published));
            }
            for c in &repro.checks {
                ctx.say(format!("{} {} = {:.3e} (<= {:.1e})", if c.passed { "ok  " } else { "MISS" }, c.name, c.value, c.threshold));
            }
            Ok(if repro.passed() { 0 } else { EXIT_MISS })
        }
        Command::Montecarlo { trials, n, m, sequential } => {
            ctx.cfg.trials = trials.unwrap_or(ctx.cfg.trials);
            ctx.cfg.n = n.unwrap_or(ctx.cfg.n);
            ctx.cfg.m = m.unwrap_or(ctx.cfg.m);
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let summary = experiments::monte_carlo(&ctx.cfg, exec)?;
            ctx.write("montecarlo.csv", summary.to_csv())?;
            ctx.write("montecarlo_stats.json", summary.stats_json()?)?;
            ctx.say(format!(
                "{} trials: median mse {:.3e}, max {:.3e}, {} converged, {} passed, {} failures",
                summary.trials, summary.median_mse, summary.max_mse, summary.converged, summary.passed, summary.failures
            ));
            Ok(if summary.median_mse <= ctx.cfg.thresholds.trajectory_mse { 0 } else { EXIT_MISS })
        }
    }
}

fn error_record(err: &IocError, out: &Path) {
    let record = json!({ "error": err.kind(), "message": err.to_string(), "exit_code": exit_code(err) });
    eprintln!("{record}");
    if fs::create_dir_all(out).is_ok() {
        let _ = fs::write(out.join("error.json"), format!("{record:#}\n"));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            error_record(&err, &out);
            ExitCode::from(exit_code(&err))
        }
    }
}
