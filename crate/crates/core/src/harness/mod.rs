//! Experiment plumbing: configuration, the staged pipeline, the standalone
//! studies and plot-ready exports.
//!
//! Every run writes its files through one [`Artifacts`] writer, which keeps
//! a manifest of SHA-256 hashes. Wall-clock times live only in
//! `report.json`, which the manifest leaves out, so two runs with the same
//! configuration produce identical manifests.

mod artifacts;
mod config;
mod export;
mod studies;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion_sim::{occupation_histogram, run_diffusion_batch, simulate_diffusion_path, OccupationHistogram};
use crate::error::{Error, Result};
use crate::hjb::{
    build_mdp, constant_policy_reward, hjb_residual, lipschitz_regularize, solve_average_reward, Grid, PolicyTable,
    ValueFunction,
};
use crate::lyapunov::{
    choose_exponents, drift_inequality_scan, params_hash, perturbed_sandwich_check, ExponentChoice, LyapunovParams,
    VerificationReport,
};
use crate::markov_noise::{center_noise, diffusion_matrix, stationary_distribution, JumpChainSpec, NoiseCovariance};
use crate::model::{persistence_check, DiffusionCoeffs, HarvestSpec, ModelParams, Persistence, Regime, State2D};
use crate::rng::{stage, stream_rng};
use crate::sim::{Batch, ConstantEffort, FeedbackPolicy, PathOptions, PathRecord, RewardEstimate};
use crate::wideband_sim::{run_wideband_batch, simulate_wideband_path};

pub use artifacts::{csv_bytes, Artifacts, Manifest, ManifestEntry, MANIFEST_FILE};
pub use config::{
    DiffusionSection, ExperimentConfig, ModelSection, SimSection, SolverSection, TightnessSection, VerifySection,
    WidebandSection, SCHEMA_VERSION,
};
pub use export::export_plot_data;
pub use studies::{
    run_epsilon_ladder, run_extinction_study, run_lyapunov_verification, ExtinctionReport, ExtinctionRow,
    LyapunovVerification,
};

/// Number of sample paths kept per system.
pub const SAMPLE_PATHS: usize = 3;
/// Allowed relative bias of the diffusion reward against the solver.
pub const BIAS_BUDGET: f64 = 0.05;
/// Allowed relative change of the optimal reward under grid doubling.
pub const REFINEMENT_TOLERANCE: f64 = 0.02;

/// One quantitative check: the measured value, the threshold and the
/// relation between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    /// `"<="`, `"<"` or `">="`: the relation `measured ? threshold` that
    /// must hold.
    pub relation: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, "<=", measured <= threshold)
    }

    pub fn below(name: &str, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, "<", measured < threshold)
    }

    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, ">=", measured >= threshold)
    }

    fn new(name: &str, measured: f64, threshold: f64, relation: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            relation: relation.into(),
            pass,
        }
    }

    pub fn from_report(r: &VerificationReport, relation: &str) -> Self {
        Self::new(&r.check, r.worst_value, r.threshold, relation, r.pass)
    }
}

/// Derived inputs shared by all stages: the centered chain and the limit
/// diffusion coefficients.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub params: ModelParams,
    pub harvest: HarvestSpec,
    pub chain: JumpChainSpec,
    pub pi: Vec<f64>,
    pub covariance: NoiseCovariance,
    pub coeffs: DiffusionCoeffs,
    pub persistence: Persistence,
}

/// Centers the noise maps and averages them into the diffusion
/// coefficients.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let chain = center_noise(&cfg.chain);
    let covariance = diffusion_matrix(&chain)?;
    let params = *cfg.params();
    Ok(Prepared {
        params,
        harvest: *cfg.harvest(),
        pi: stationary_distribution(&chain),
        coeffs: DiffusionCoeffs::new(&params, &covariance),
        covariance,
        persistence: persistence_check(&params),
        chain,
    })
}

/// Averaged coefficients as written to `coefficients.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsStage {
    pub pi: Vec<f64>,
    pub r1_centered: Vec<f64>,
    pub r2_centered: Vec<f64>,
    pub coeffs: DiffusionCoeffs,
    pub persistence: Persistence,
}

impl CoefficientsStage {
    pub fn new(prep: &Prepared) -> Self {
        Self {
            pi: prep.pi.clone(),
            r1_centered: prep.chain.r1().to_vec(),
            r2_centered: prep.chain.r2().to_vec(),
            coeffs: prep.coeffs,
            persistence: prep.persistence,
        }
    }
}

/// Exponents and the drift and perturbation checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovStage {
    pub exponents: ExponentChoice,
    pub params: LyapunovParams,
    pub drift: VerificationReport,
    pub sandwich: VerificationReport,
}

impl LyapunovStage {
    /// Drift inequality, far-field coercivity of `V2` and the perturbation
    /// identity.
    pub fn checks(&self) -> Vec<Check> {
        let d = &self.drift.details;
        vec![
            Check::from_report(&self.drift, "<="),
            Check::new(
                "drift_v2_coercivity",
                d["v2_sup_outside"].as_f64().unwrap_or(f64::NAN),
                d["K5"].as_f64().unwrap_or(f64::NAN),
                "<=",
                d["v2_pass"].as_bool().unwrap_or(false),
            ),
            Check::from_report(&self.sandwich, "<="),
        ]
    }
}

/// Solver outcome and file locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjbStage {
    pub rho: f64,
    pub residual: f64,
    pub iterations: usize,
    pub policy_steps: usize,
    pub final_span: f64,
    /// `(u, stationary reward)` of constant policies on the approximating
    /// chain.
    pub constant_rewards: Vec<(f64, f64)>,
    /// Optimal reward on the doubled grid, when requested.
    pub refined_rho: Option<f64>,
    pub regularization_radius: usize,
    pub value_csv: String,
    pub policy_csv: String,
    pub raw_policy_csv: String,
    pub policy_json: String,
}

/// Diffusion reward of the regularized policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionStage {
    pub estimate: RewardEstimate,
    pub outside_fraction: f64,
    pub paths: Vec<String>,
    pub occupation_csv: String,
}

/// One rung of the epsilon ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub epsilon: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `|J^eps - rho_diffusion|`.
    pub gap: f64,
    /// Combined standard error of the gap.
    pub gap_stderr: f64,
    pub outside_fraction: f64,
}

/// Wideband rewards across the ladder against the diffusion reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderTable {
    pub diffusion: RewardEstimate,
    pub rows: Vec<LadderRow>,
    /// Largest `gap_{k+1} - gap_k - 2 se`; absent for a single rung.
    pub trend: Option<Check>,
}

impl LadderTable {
    pub fn new(diffusion: RewardEstimate, batches: &[(f64, Batch)]) -> Self {
        let rows: Vec<LadderRow> = batches
            .iter()
            .map(|(eps, b)| {
                let r = b.reward();
                LadderRow {
                    epsilon: *eps,
                    estimate: r.estimate,
                    stderr: r.stderr,
                    gap: (r.estimate - diffusion.estimate).abs(),
                    gap_stderr: r.stderr.hypot(diffusion.stderr),
                    outside_fraction: b.outside_fraction(),
                }
            })
            .collect();
        let trend = (rows.len() > 1).then(|| {
            let worst = rows
                .windows(2)
                .map(|w| w[1].gap - w[0].gap - 2.0 * w[0].stderr.hypot(w[1].stderr))
                .fold(f64::NEG_INFINITY, f64::max);
            Check::at_most("ladder_gap_nonincreasing", worst, 0.0)
        });
        Self { diffusion, rows, trend }
    }
}

/// Ladder table and sample paths at the smallest epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidebandStage {
    pub table: LadderTable,
    pub table_csv: String,
    pub paths: Vec<String>,
    pub occupation_csv: String,
}

/// Constant-effort reward on one system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub system: System,
    /// Absent for the diffusion.
    pub epsilon: Option<f64>,
    pub effort: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub outside_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Diffusion,
    Wideband,
}

/// Constant-policy sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStage {
    pub rows: Vec<BaselineRow>,
    pub csv: String,
}

/// Time outside the tightness box for one system, rung and policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub system: System,
    pub epsilon: Option<f64>,
    pub policy: String,
    pub outside_fraction: f64,
}

/// Everything a pipeline run produced. File paths are relative to
/// `output_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub coefficients: Option<CoefficientsStage>,
    pub lyapunov: Option<LyapunovStage>,
    pub hjb: Option<HjbStage>,
    pub diffusion: Option<DiffusionStage>,
    pub wideband: Option<WidebandStage>,
    pub baselines: Option<BaselineStage>,
    pub tightness: Vec<TightnessRow>,
    pub checks: Vec<Check>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            output_dir: cfg.output_dir.clone(),
            coefficients: None,
            lyapunov: None,
            hjb: None,
            diffusion: None,
            wideband: None,
            baselines: None,
            tightness: Vec::new(),
            checks: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub const REPORT_FILE: &str = "report.json";

fn run_stage<T>(
    name: &str,
    art: &mut Artifacts,
    timings: &mut BTreeMap<String, f64>,
    f: impl FnOnce(&mut Artifacts) -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    log::info!("stage {name}: start");
    match f(art) {
        Ok(v) => {
            let secs = start.elapsed().as_secs_f64();
            log::info!("stage {name}: done in {secs:.1} s");
            timings.insert(name.to_string(), secs);
            Ok(v)
        }
        Err(e) => {
            if let Err(m) = art.finish(Some(name)) {
                log::error!("could not write the partial manifest: {m}");
            }
            Err(Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            })
        }
    }
}

/// The efforts `0, M/4, M/2, 3M/4, M` without duplicates.
pub fn baseline_efforts(max_effort: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for k in 0..=4 {
        let u = max_effort * k as f64 / 4.0;
        if !out.contains(&u) {
            out.push(u);
        }
    }
    out
}

fn tight_opts(cfg: &ExperimentConfig) -> PathOptions {
    PathOptions {
        record_dt: None,
        tight_box: Some((cfg.tightness.delta, cfg.tightness.r)),
    }
}

/// Exponents, drift scan and perturbation check for a persistent model.
pub fn lyapunov_core(cfg: &ExperimentConfig, prep: &Prepared, art: &mut Artifacts) -> Result<LyapunovStage> {
    let exponents = choose_exponents(&prep.params)?;
    let lp = exponents.with_box(cfg.verify.box_size);
    art.write_json("lyapunov/exponents.json", &(exponents, lp))?;
    let v = &cfg.verify;
    let hi = v.scan_max_factor * v.box_size;
    let scan_grid = Grid::new(v.scan_min, hi, v.scan_min, hi, v.scan_points, v.scan_points)?;
    let controls = baseline_efforts(prep.params.max_effort);
    let controls = [controls[0], *controls.last().expect("non-empty")];
    let controls: &[f64] = if controls[0] == controls[1] {
        &controls[..1]
    } else {
        &controls
    };
    let scan = drift_inequality_scan(&prep.params, &prep.harvest, &prep.coeffs, &lp, &scan_grid, controls)?;
    let hash = params_hash(&prep.params, &prep.coeffs, &lp);
    let csv = art.write_with("lyapunov/drift_scan.csv", |b| scan.write_csv(b))?;
    let drift = scan.report(hash.clone(), Some(csv));
    art.write_json("lyapunov/drift.json", &drift)?;
    let mut rng = stream_rng(cfg.seed, stage::BOUNDARY, u64::MAX);
    let nodes: Vec<State2D> = (0..v.sandwich_nodes)
        .map(|_| State2D {
            x: 10f64.powf(rng.random_range(-3.0..3.0)),
            y: 10f64.powf(rng.random_range(-3.0..3.0)),
        })
        .collect();
    let sandwich = perturbed_sandwich_check(&prep.params, &prep.chain, &lp, &nodes)?.report(hash);
    art.write_json("lyapunov/sandwich.json", &sandwich)?;
    Ok(LyapunovStage {
        exponents,
        params: lp,
        drift,
        sandwich,
    })
}

/// Solver results kept in memory for the later stages.
pub struct Solved {
    pub value: ValueFunction,
    pub raw: PolicyTable,
    pub policy: PolicyTable,
    pub summary: HjbStage,
}

/// Solves the ergodic HJB equation, smooths the policy and writes the
/// value function and both policies.
pub fn solve_stage(cfg: &ExperimentConfig, prep: &Prepared, art: &mut Artifacts) -> Result<Solved> {
    let opts = cfg.solver.options();
    let mdp = build_mdp(&prep.params, &prep.harvest, &prep.coeffs, &cfg.grid)?;
    let (value, raw) = solve_average_reward(&mdp, &opts)?;
    let residual = hjb_residual(&value, &mdp);
    let constant_rewards = baseline_efforts(prep.params.max_effort)
        .into_iter()
        .map(|u| Ok((u, constant_policy_reward(&mdp, u)?)))
        .collect::<Result<Vec<_>>>()?;
    let refined_rho = if cfg.solver.refinement_check {
        let fine = build_mdp(&prep.params, &prep.harvest, &prep.coeffs, &cfg.grid.refined())?;
        Some(solve_average_reward(&fine, &opts)?.0.rho)
    } else {
        None
    };
    let policy = lipschitz_regularize(&raw, cfg.solver.regularization_radius);
    let value_csv = art.write_with("hjb/value.csv", |b| value.write_csv(b))?;
    let policy_csv = art.write_with("hjb/policy.csv", |b| policy.write_csv(b))?;
    let raw_policy_csv = art.write_with("hjb/policy_raw.csv", |b| raw.write_csv(b))?;
    let policy_json = art.write_json("hjb/policy.json", &policy)?;
    let summary = HjbStage {
        rho: value.rho,
        residual,
        iterations: value.iterations,
        policy_steps: value.policy_steps,
        final_span: value.final_span,
        constant_rewards,
        refined_rho,
        regularization_radius: cfg.solver.regularization_radius,
        value_csv,
        policy_csv,
        raw_policy_csv,
        policy_json,
    };
    art.write_json("hjb/solver.json", &(value.header(), &summary))?;
    Ok(Solved {
        value,
        raw,
        policy,
        summary,
    })
}

/// Records the first [`SAMPLE_PATHS`] diffusion paths and their merged
/// post-burn-in occupation on `grid`.
fn diffusion_samples<P: FeedbackPolicy + ?Sized>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    policy: &P,
    art: &mut Artifacts,
) -> Result<(Vec<String>, String)> {
    let dcfg = cfg.diffusion();
    let opts = PathOptions {
        record_dt: Some(dcfg.record_dt),
        tight_box: None,
    };
    let mut paths = Vec::new();
    let mut hists = Vec::new();
    for k in 0..SAMPLE_PATHS {
        let out = simulate_diffusion_path(
            &prep.params,
            &prep.harvest,
            &prep.coeffs,
            policy,
            &dcfg,
            k as u64,
            &opts,
        )?;
        let rec = out.record.expect("record requested");
        paths.push(art.write_with(&format!("diffusion/path_{k}.csv"), |b| rec.write_csv(b))?);
        hists.push(occupation_histogram(&rec.after(dcfg.burn_in), &cfg.grid));
    }
    let occ = write_occupation(art, "diffusion/occupation.csv", &hists)?;
    Ok((paths, occ))
}

fn write_occupation(art: &mut Artifacts, rel: &str, hists: &[OccupationHistogram]) -> Result<String> {
    let merged = OccupationHistogram::merge(hists).expect("at least one histogram");
    art.write_with(rel, |b| merged.write_csv(b))
}

fn wideband_samples<P: FeedbackPolicy + ?Sized>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    policy: &P,
    epsilon: f64,
    art: &mut Artifacts,
) -> Result<(Vec<String>, String)> {
    let wcfg = cfg.wideband(epsilon);
    let opts = PathOptions {
        record_dt: Some(wcfg.record_dt),
        tight_box: None,
    };
    let mut paths = Vec::new();
    let mut hists = Vec::new();
    for k in 0..SAMPLE_PATHS {
        let out = simulate_wideband_path(&prep.params, &prep.harvest, &prep.chain, policy, &wcfg, k as u64, &opts)?;
        let rec: PathRecord = out.record.expect("record requested");
        paths.push(art.write_with(&format!("wideband/path_{k}.csv"), |b| rec.write_csv(b))?);
        hists.push(occupation_histogram(&rec.after(wcfg.burn_in), &cfg.grid));
    }
    let occ = write_occupation(art, "wideband/occupation.csv", &hists)?;
    Ok((paths, occ))
}

/// Wideband batches of `policy` at every rung of the ladder.
pub fn ladder_batches<P: FeedbackPolicy + ?Sized>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    policy: &P,
) -> Result<Vec<(f64, Batch)>> {
    cfg.epsilon_ladder
        .iter()
        .map(|&eps| {
            log::info!("wideband eps = {eps}");
            let b = run_wideband_batch(
                &prep.params,
                &prep.harvest,
                &prep.chain,
                policy,
                &cfg.wideband(eps),
                cfg.sim.wideband.n_paths,
                &tight_opts(cfg),
            )?;
            Ok((eps, b))
        })
        .collect()
}

/// Runs the six stages in order and writes all artifacts, the manifest
/// and `report.json` under `cfg.output_dir`.
///
/// Stages: (1) centered noise and averaged coefficients; (2) exponent
/// choice and drift scans; (3) HJB solve, residual and smoothing;
/// (4) diffusion reward of the smoothed policy; (5) wideband rewards across
/// the ladder; (6) constant-effort baselines on both systems. A failing
/// stage leaves a partial manifest naming it.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::empty(cfg);
    let mut art = Artifacts::new(&cfg.output_dir, report.config_hash.clone())?;
    let mut timings = BTreeMap::new();
    art.write_bytes("config.json", cfg.to_json().as_bytes())?;
    let tol = cfg.solver.tol;

    let prep = run_stage("coefficients", &mut art, &mut timings, |art| {
        let prep = prepare(cfg)?;
        let stage = CoefficientsStage::new(&prep);
        art.write_json("coefficients.json", &stage)?;
        report.coefficients = Some(stage);
        Ok(prep)
    })?;

    run_stage("lyapunov", &mut art, &mut timings, |art| {
        if prep.persistence.regime != Regime::Persistent || prep.persistence.degenerate {
            log::warn!(
                "persistence margin {} is not positive; Lyapunov checks skipped",
                prep.persistence.margin
            );
            return Ok(());
        }
        let stage = lyapunov_core(cfg, &prep, art)?;
        report.checks.extend(stage.checks());
        report.lyapunov = Some(stage);
        Ok(())
    })?;

    let solved = run_stage("hjb", &mut art, &mut timings, |art| {
        let solved = solve_stage(cfg, &prep, art)?;
        let s = &solved.summary;
        report
            .checks
            .push(Check::at_most("hjb_residual", s.residual, 10.0 * tol));
        let best = s.constant_rewards.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        report
            .checks
            .push(Check::at_least("hjb_dominates_constants", s.rho - best, -tol));
        if let Some(fine) = s.refined_rho {
            let change = if s.rho == fine {
                0.0
            } else {
                (fine - s.rho).abs() / s.rho.abs().max(f64::MIN_POSITIVE)
            };
            report
                .checks
                .push(Check::below("hjb_refinement_change", change, REFINEMENT_TOLERANCE));
        }
        report.hjb = Some(s.clone());
        Ok(solved)
    })?;
    let policy = &solved.policy;
    let rho = solved.value.rho;

    let diffusion_estimate = run_stage("diffusion", &mut art, &mut timings, |art| {
        let batch = run_diffusion_batch(
            &prep.params,
            &prep.harvest,
            &prep.coeffs,
            policy,
            &cfg.diffusion(),
            cfg.n_paths,
            &tight_opts(cfg),
        )?;
        let estimate = batch.reward();
        art.write_json("diffusion/reward.json", &estimate)?;
        let (paths, occupation_csv) = diffusion_samples(cfg, &prep, policy, art)?;
        report.checks.push(Check::at_most(
            "diffusion_matches_solver",
            (estimate.estimate - rho).abs(),
            3.0 * estimate.stderr + BIAS_BUDGET * rho.abs(),
        ));
        report.tightness.push(TightnessRow {
            system: System::Diffusion,
            epsilon: None,
            policy: "solver".into(),
            outside_fraction: batch.outside_fraction(),
        });
        report.diffusion = Some(DiffusionStage {
            estimate,
            outside_fraction: batch.outside_fraction(),
            paths,
            occupation_csv,
        });
        Ok(estimate)
    })?;

    let policy_smallest = run_stage("wideband", &mut art, &mut timings, |art| {
        let batches = ladder_batches(cfg, &prep, policy)?;
        let table = LadderTable::new(diffusion_estimate, &batches);
        let table_csv = art.write_with("wideband/ladder.csv", |b| csv_bytes(&table.rows, b))?;
        let (paths, occupation_csv) = wideband_samples(cfg, &prep, policy, cfg.smallest_epsilon(), art)?;
        if let Some(t) = &table.trend {
            report.checks.push(t.clone());
        }
        for row in &table.rows {
            report.tightness.push(TightnessRow {
                system: System::Wideband,
                epsilon: Some(row.epsilon),
                policy: "solver".into(),
                outside_fraction: row.outside_fraction,
            });
        }
        let last = *table.rows.last().expect("non-empty ladder");
        report.wideband = Some(WidebandStage {
            table,
            table_csv,
            paths,
            occupation_csv,
        });
        Ok(last)
    })?;

    run_stage("baselines", &mut art, &mut timings, |art| {
        let rows = baseline_rows(cfg, &prep)?;
        let csv = art.write_with("baselines.csv", |b| csv_bytes(&rows, b))?;
        let eps = cfg.smallest_epsilon();
        let margin = rows
            .iter()
            .filter(|r| r.system == System::Wideband && r.epsilon == Some(eps))
            .map(|r| policy_smallest.estimate - r.estimate + 2.0 * policy_smallest.stderr.hypot(r.stderr))
            .fold(f64::INFINITY, f64::min);
        report
            .checks
            .push(Check::at_least("wideband_policy_beats_constants", margin, 0.0));
        let m = prep.params.max_effort;
        for r in &rows {
            if r.effort == 0.0 || r.effort == m {
                report.tightness.push(TightnessRow {
                    system: r.system,
                    epsilon: r.epsilon,
                    policy: format!("constant {}", r.effort),
                    outside_fraction: r.outside_fraction,
                });
            }
        }
        let worst = report.tightness.iter().map(|t| t.outside_fraction).fold(0.0, f64::max);
        report.checks.push(Check::below(
            "tightness_outside_fraction",
            worst,
            cfg.tightness.max_outside,
        ));
        art.write_with("tightness.csv", |b| csv_bytes(&report.tightness, b))?;
        report.baselines = Some(BaselineStage { rows, csv });
        Ok(())
    })?;

    report.timings = timings;
    art.finish(None)?;
    art.write_unlisted(REPORT_FILE, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

/// Constant efforts `0, M/4, M/2, 3M/4, M` on the diffusion and on the
/// wideband system at the smallest epsilon, plus `0` and `M` at the other
/// rungs for the tightness proxy.
fn baseline_rows(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<BaselineRow>> {
    let efforts = baseline_efforts(prep.params.max_effort);
    let endpoints = [efforts[0], *efforts.last().expect("non-empty")];
    let mut rows = Vec::new();
    let row = |system, epsilon, effort, b: &Batch| {
        let r = b.reward();
        BaselineRow {
            system,
            epsilon,
            effort,
            estimate: r.estimate,
            stderr: r.stderr,
            outside_fraction: b.outside_fraction(),
        }
    };
    for &u in &efforts {
        let b = run_diffusion_batch(
            &prep.params,
            &prep.harvest,
            &prep.coeffs,
            &ConstantEffort(u),
            &cfg.diffusion(),
            cfg.n_paths,
            &tight_opts(cfg),
        )?;
        rows.push(row(System::Diffusion, None, u, &b));
    }
    let smallest = cfg.smallest_epsilon();
    for &eps in &cfg.epsilon_ladder {
        for &u in &efforts {
            if eps != smallest && !endpoints.contains(&u) {
                continue;
            }
            log::info!("baseline eps = {eps}, u = {u}");
            let b = run_wideband_batch(
                &prep.params,
                &prep.harvest,
                &prep.chain,
                &ConstantEffort(u),
                &cfg.wideband(eps),
                cfg.sim.wideband.n_paths,
                &tight_opts(cfg),
            )?;
            rows.push(row(System::Wideband, Some(eps), u, &b));
        }
    }
    Ok(rows)
}
