use serde::{Deserialize, Serialize};

use super::{
    csv_bytes, ladder_batches, lyapunov_core, prepare, Artifacts, Check, ExperimentConfig, LadderTable, LyapunovStage,
    System,
};
use crate::diffusion_sim::{moment_boundedness_check, run_diffusion_batch, MomentSeries};
use crate::error::{Error, Result};
use crate::lyapunov::{
    boundary_average_check, comparison_average_check, coupled_comparison, params_hash, CouplingReport,
    VerificationReport,
};
use crate::model::{Regime, State2D};
use crate::sim::{quantile, Batch, ConstantEffort, FeedbackPolicy, PathOptions};
use crate::wideband_sim::run_wideband_batch;

/// Extinction threshold for the terminal predator median and the reward.
pub const EXTINCTION_LEVEL: f64 = 1e-3;

/// One system and effort of the extinction study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionRow {
    pub system: System,
    pub epsilon: Option<f64>,
    pub effort: f64,
    pub median_terminal_y: f64,
    pub q90_terminal_y: f64,
    /// Post-burn-in average reward.
    pub reward: f64,
    pub reward_stderr: f64,
    /// Mean reward averaged from 0 up to `t_end / 4`, `t_end / 2`, `t_end`.
    pub checkpoint_rewards: [f64; 3],
    /// Whether the checkpoint rewards never increase.
    pub decreasing: bool,
}

/// Outcome of the extinction study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub margin: f64,
    pub rows: Vec<ExtinctionRow>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn extinction_row(system: System, epsilon: Option<f64>, effort: f64, t_end: f64, batch: &Batch) -> ExtinctionRow {
    let terminal = batch.terminal_y();
    let r = batch.reward();
    let marks = [0.25 * t_end, 0.5 * t_end, t_end];
    let mut checkpoint_rewards = [0.0; 3];
    for (slot, &t) in checkpoint_rewards.iter_mut().zip(&marks) {
        let vals: Vec<f64> = batch
            .records()
            .map(|rec| {
                let k = rec
                    .times
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                    .map_or(0, |(k, _)| k);
                rec.running_average[k]
            })
            .collect();
        *slot = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    }
    ExtinctionRow {
        system,
        epsilon,
        effort,
        median_terminal_y: quantile(&terminal, 0.5),
        q90_terminal_y: quantile(&terminal, 0.9),
        reward: r.estimate,
        reward_stderr: r.stderr,
        decreasing: checkpoint_rewards.windows(2).all(|w| w[1] <= w[0]),
        checkpoint_rewards,
    }
}

/// Simulates both systems under efforts `0` and `M` for a parameter set
/// whose predator dies out, and checks that the median terminal predator
/// and the average reward fall below `1e-3`. The wideband system runs at
/// the smallest ladder epsilon.
///
/// Refuses persistent parameter sets.
pub fn run_extinction_study(cfg: &ExperimentConfig) -> Result<ExtinctionReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    if prep.persistence.regime == Regime::Persistent {
        return Err(Error::Persistent {
            margin: prep.persistence.margin,
        });
    }
    let mut art = Artifacts::new(&cfg.output_dir, cfg.hash())?;
    art.write_bytes("config.json", cfg.to_json().as_bytes())?;
    let dcfg = cfg.diffusion();
    let eps = cfg.smallest_epsilon();
    let wcfg = cfg.wideband(eps);
    let m = prep.params.max_effort;
    let efforts: Vec<f64> = if m > 0.0 { vec![0.0, m] } else { vec![0.0] };
    let mut rows = Vec::new();
    for &u in &efforts {
        let policy = ConstantEffort(u);
        let opts = PathOptions {
            record_dt: Some(0.25 * dcfg.t_end),
            tight_box: None,
        };
        let b = run_diffusion_batch(
            &prep.params,
            &prep.harvest,
            &prep.coeffs,
            &policy,
            &dcfg,
            cfg.n_paths,
            &opts,
        )?;
        rows.push(extinction_row(System::Diffusion, None, u, dcfg.t_end, &b));
        let opts = PathOptions {
            record_dt: Some(0.25 * wcfg.t_end),
            tight_box: None,
        };
        let b = run_wideband_batch(
            &prep.params,
            &prep.harvest,
            &prep.chain,
            &policy,
            &wcfg,
            cfg.sim.wideband.n_paths,
            &opts,
        )?;
        rows.push(extinction_row(System::Wideband, Some(eps), u, wcfg.t_end, &b));
    }
    let worst_median = rows.iter().map(|r| r.median_terminal_y).fold(0.0, f64::max);
    let worst_reward = rows.iter().map(|r| r.reward).fold(0.0, f64::max);
    let checks = vec![
        Check::below("extinction_median_terminal_y", worst_median, EXTINCTION_LEVEL),
        Check::below("extinction_reward", worst_reward, EXTINCTION_LEVEL),
    ];
    let pass = checks.iter().all(|c| c.pass);
    let report = ExtinctionReport {
        margin: prep.persistence.margin,
        rows,
        checks,
        pass,
    };
    art.write_with("extinction.csv", |b| {
        let flat: Vec<_> = report
            .rows
            .iter()
            .map(|r| {
                (
                    r.system,
                    r.epsilon,
                    r.effort,
                    r.median_terminal_y,
                    r.q90_terminal_y,
                    r.reward,
                    r.reward_stderr,
                    r.checkpoint_rewards[0],
                    r.checkpoint_rewards[1],
                    r.checkpoint_rewards[2],
                )
            })
            .collect();
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "system",
            "epsilon",
            "effort",
            "median_terminal_y",
            "q90_terminal_y",
            "reward",
            "reward_stderr",
            "avg_reward_quarter",
            "avg_reward_half",
            "avg_reward_end",
        ])?;
        for r in flat {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    art.write_json("extinction.json", &report)?;
    art.finish(None)?;
    Ok(report)
}

/// Wideband reward of `policy` at every rung of the ladder against its
/// diffusion reward; writes `ladder.csv` under the output directory.
pub fn run_epsilon_ladder<P: FeedbackPolicy + ?Sized>(cfg: &ExperimentConfig, policy: &P) -> Result<LadderTable> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let diffusion = run_diffusion_batch(
        &prep.params,
        &prep.harvest,
        &prep.coeffs,
        policy,
        &cfg.diffusion(),
        cfg.n_paths,
        &PathOptions::default(),
    )?
    .reward();
    let batches = ladder_batches(cfg, &prep, policy)?;
    let table = LadderTable::new(diffusion, &batches);
    let mut art = Artifacts::new(&cfg.output_dir, cfg.hash())?;
    art.write_with("ladder.csv", |b| csv_bytes(&table.rows, b))?;
    art.write_json("ladder.json", &table)?;
    art.finish(None)?;
    Ok(table)
}

/// The full Lyapunov battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovVerification {
    pub core: LyapunovStage,
    pub boundary: VerificationReport,
    pub comparison: VerificationReport,
    pub coupling: CouplingReport,
    pub moments: Vec<MomentSeries>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Exponent choice, drift scans, the perturbation identity, the
/// near-boundary averages, the comparison system, the path-wise coupling
/// and moment boundedness under the endpoint controls. Writes everything
/// under `lyapunov/` in the output directory.
pub fn run_lyapunov_verification(cfg: &ExperimentConfig) -> Result<LyapunovVerification> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let mut art = Artifacts::new(&cfg.output_dir, cfg.hash())?;
    art.write_bytes("config.json", cfg.to_json().as_bytes())?;
    let core = lyapunov_core(cfg, &prep, &mut art)?;
    let lp = core.params;
    let hash = params_hash(&prep.params, &prep.coeffs, &lp);

    let boundary = boundary_average_check(&prep.params, &prep.harvest, &prep.coeffs, &lp, &cfg.boundary_options())?;
    let csv = art.write_with("lyapunov/boundary.csv", |b| boundary.write_csv(b))?;
    let boundary = boundary.report(hash.clone(), Some(csv));
    art.write_json("lyapunov/boundary.json", &boundary)?;

    let comparison = comparison_average_check(
        &prep.params,
        &prep.harvest,
        &prep.coeffs,
        &lp,
        &cfg.comparison_options(),
    )?
    .report(hash);
    art.write_json("lyapunov/comparison.json", &comparison)?;

    let x_star = (0.5 * prep.params.s2.abs() - 1.5 * prep.coeffs.a[1][1]) / prep.params.c2;
    let mut ccfg = cfg.diffusion();
    ccfg.initial = State2D {
        x: if x_star > 0.0 {
            0.25 * x_star
        } else {
            cfg.sim.diffusion.initial.x
        },
        y: cfg.sim.diffusion.initial.y,
    };
    let m = prep.params.max_effort;
    let coupling = coupled_comparison(
        &prep.params,
        &prep.harvest,
        &prep.coeffs,
        &ConstantEffort(m),
        &ccfg,
        cfg.verify.comparison_paths,
    )?;
    art.write_json("lyapunov/coupling.json", &coupling)?;

    let efforts: Vec<f64> = if m > 0.0 { vec![0.0, m] } else { vec![0.0] };
    let moments = efforts
        .iter()
        .map(|&u| {
            moment_boundedness_check(
                &prep.params,
                &prep.harvest,
                &prep.coeffs,
                &ConstantEffort(u),
                &cfg.diffusion(),
                &lp,
                MOMENT_THETA,
                cfg.verify.boundary_paths,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    art.write_json("lyapunov/moments.json", &moments)?;

    let mut checks = core.checks();
    checks.push(Check::from_report(&boundary, ">"));
    checks.push(Check::from_report(&comparison, "<="));
    checks.push(Check {
        name: "coupling_violations".into(),
        measured: coupling.violations as f64,
        threshold: 0.0,
        relation: "<=".into(),
        pass: coupling.pass,
    });
    for (u, series) in efforts.iter().zip(&moments) {
        checks.push(Check {
            name: format!("moment_growth_u{u}"),
            measured: series.worst_ratio,
            threshold: series.threshold,
            relation: "<=".into(),
            pass: series.pass,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let out = LyapunovVerification {
        core,
        boundary,
        comparison,
        coupling,
        moments,
        checks,
        pass,
    };
    art.write_json("lyapunov/verification.json", &out)?;
    art.finish(None)?;
    Ok(out)
}

const MOMENT_THETA: f64 = 0.25;
