//! `harvest`: command-line front end for the harvesting pipeline.
//!
//! Exit status is 0 when every check passes, 1 when a verification fails
//! and 2 on a runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harvest_core::diffusion_sim::simulate_diffusion;
use harvest_core::harness::{
    self, export_plot_data, prepare, run_epsilon_ladder, run_extinction_study, run_lyapunov_verification, run_pipeline,
    solve_stage, Artifacts, Check, CoefficientsStage, ExperimentConfig, ExperimentReport,
};
use harvest_core::hjb::PolicyTable;
use harvest_core::sim::{ConstantEffort, FeedbackPolicy};
use harvest_core::wideband_sim::simulate_wideband;
use harvest_core::Result;

#[derive(Parser)]
#[command(name = "harvest", version, about = "Near-optimal harvesting under wideband noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo and grid sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Center the noise and print the averaged diffusion coefficients.
    AvgCoeffs,
    /// Solve the ergodic HJB equation and write the value function and policy.
    Solve,
    /// Simulate one diffusion path.
    SimulateDiffusion(PolicyArgs),
    /// Simulate one wideband path.
    SimulateWideband {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Noise scale; defaults to the smallest ladder rung.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the Lyapunov verification battery.
    VerifyLyapunov,
    /// Run the full pipeline.
    Pipeline,
    /// Run the extinction study on a non-persistent configuration.
    Extinction,
    /// Compare wideband and diffusion rewards across the epsilon ladder.
    Ladder(PolicyArgs),
    /// Copy plot-ready files out of a finished pipeline run.
    Export {
        /// Pipeline report; defaults to `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PolicyArgs {
    /// Gridded policy written by `solve` or `pipeline`.
    #[arg(long, conflicts_with = "effort")]
    policy: Option<PathBuf>,
    /// Constant effort instead of a gridded policy.
    #[arg(long)]
    effort: Option<f64>,
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("could not configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| harvest_core::Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn verdict(checks: &[Check]) -> Outcome {
    for c in checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        log::info!("{tag} {}: {} {} {}", c.name, c.measured, c.relation, c.threshold);
    }
    if checks.iter().all(|c| c.pass) {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn load_policy(args: &PolicyArgs, cfg: &ExperimentConfig) -> Result<Box<dyn FeedbackPolicy>> {
    if let Some(path) = &args.policy {
        return Ok(Box::new(PolicyTable::load_json(path)?));
    }
    if let Some(u) = args.effort {
        if !(0.0..=cfg.params().max_effort).contains(&u) {
            return Err(harvest_core::Error::EffortOutOfRange {
                effort: u,
                max: cfg.params().max_effort,
            });
        }
        return Ok(Box::new(ConstantEffort(u)));
    }
    let default = cfg.output_dir.join("hjb/policy.json");
    if default.exists() {
        Ok(Box::new(PolicyTable::load_json(&default)?))
    } else {
        Err(harvest_core::Error::Config(
            "no policy: pass --policy or --effort, or run `solve` first".into(),
        ))
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Command::Export { report } = &cli.command {
        let path = match (report, &cli.common.out) {
            (Some(p), _) => p.clone(),
            (None, Some(out)) => out.join(harness::REPORT_FILE),
            (None, None) => load_config(&cli.common)?.output_dir.join(harness::REPORT_FILE),
        };
        let files = export_plot_data(&ExperimentReport::load(&path)?)?;
        for f in files {
            println!("{}", f.display());
        }
        return Ok(Outcome::Pass);
    }

    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::AvgCoeffs => {
            let prep = prepare(&cfg)?;
            print_json(&CoefficientsStage::new(&prep))?;
            Ok(Outcome::Pass)
        }
        Command::Solve => {
            let prep = prepare(&cfg)?;
            let mut art = Artifacts::new(&cfg.output_dir, cfg.hash())?;
            let solved = solve_stage(&cfg, &prep, &mut art)?;
            art.finish(None)?;
            let s = &solved.summary;
            let best = s.constant_rewards.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            print_json(s)?;
            Ok(verdict(&[
                Check::at_most("hjb_residual", s.residual, 10.0 * cfg.solver.tol),
                Check::at_least("hjb_dominates_constants", s.rho - best, -cfg.solver.tol),
            ]))
        }
        Command::SimulateDiffusion(args) => {
            let prep = prepare(&cfg)?;
            let policy = load_policy(args, &cfg)?;
            let rec = simulate_diffusion(
                &prep.params,
                &prep.harvest,
                &prep.coeffs,
                policy.as_ref(),
                &cfg.diffusion(),
            )?;
            write_path(&cfg.output_dir, "diffusion_path.csv", |p| rec.save_csv(p))?;
            Ok(Outcome::Pass)
        }
        Command::SimulateWideband { policy, epsilon } => {
            let prep = prepare(&cfg)?;
            let p = load_policy(policy, &cfg)?;
            let wcfg = cfg.wideband(epsilon.unwrap_or_else(|| cfg.smallest_epsilon()));
            let rec = simulate_wideband(&prep.params, &prep.harvest, &prep.chain, p.as_ref(), &wcfg)?;
            write_path(&cfg.output_dir, "wideband_path.csv", |p| rec.save_csv(p))?;
            Ok(Outcome::Pass)
        }
        Command::VerifyLyapunov => {
            let v = run_lyapunov_verification(&cfg)?;
            Ok(verdict(&v.checks))
        }
        Command::Pipeline => {
            let report = run_pipeline(&cfg)?;
            Ok(verdict(&report.checks))
        }
        Command::Extinction => {
            let report = run_extinction_study(&cfg)?;
            print_json(&report.rows)?;
            Ok(verdict(&report.checks))
        }
        Command::Ladder(args) => {
            let policy = load_policy(args, &cfg)?;
            let table = run_epsilon_ladder(&cfg, policy.as_ref())?;
            print_json(&table.rows)?;
            Ok(verdict(table.trend.as_slice()))
        }
        Command::Export { .. } => unreachable!("handled above"),
    }
}

fn write_path(dir: &Path, name: &str, save: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    save(&path)?;
    println!("{}", path.display());
    Ok(())
}
