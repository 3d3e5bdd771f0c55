mod common;

use harvest_core::harness::{
    export_plot_data, run_epsilon_ladder, run_extinction_study, run_lyapunov_verification, run_pipeline,
    ExperimentConfig, ExperimentReport, MANIFEST_FILE, REPORT_FILE,
};
use harvest_core::sim::ConstantEffort;
use harvest_core::Error;

fn small(dir: &tempfile::TempDir) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&common::config_path("small.json")).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    for name in ["default.json", "small.json", "extinct.json"] {
        let cfg = ExperimentConfig::load(&common::config_path(name)).unwrap();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn config_rejects_unknown_fields_and_bad_ladders() {
    let text = std::fs::read_to_string(common::config_path("small.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["surprise"] = serde_json::json!(1);
    assert!(ExperimentConfig::from_json(&v.to_string()).is_err());

    let mut cfg = ExperimentConfig::from_json(&text).unwrap();
    cfg.epsilon_ladder = vec![0.1, 0.5];
    assert!(cfg.validate().is_err());
    cfg.epsilon_ladder = vec![1.5];
    assert!(cfg.validate().is_err());
    cfg.epsilon_ladder = vec![0.5];
    cfg.n_paths = 1;
    assert!(cfg.validate().is_err());
}

#[test]
fn small_pipeline_passes_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir);
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.all_pass(), "{:#?}", report.checks);
    for name in [
        "hjb_residual",
        "diffusion_matches_solver",
        "ladder_gap_nonincreasing",
        "tightness_outside_fraction",
    ] {
        assert!(report.check(name).is_some(), "missing {name}");
    }
    assert!(dir.path().join(MANIFEST_FILE).exists());

    let loaded = ExperimentReport::load(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(loaded, report);

    let files = export_plot_data(&loaded).unwrap();
    assert_eq!(files.len(), 5 + 2 * harvest_core::harness::SAMPLE_PATHS);
    let heatmap = std::fs::read_to_string(dir.path().join("plots/policy_heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().count(), 1 + cfg.grid.len());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir);
    run_pipeline(&cfg).unwrap();
    let first = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| run_pipeline(&cfg)).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap());
}

#[test]
fn export_needs_a_complete_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = run_pipeline(&small(&dir)).unwrap();
    report.wideband = None;
    assert!(matches!(export_plot_data(&report), Err(Error::MissingStage(s)) if s == "wideband"));
}

#[test]
fn zero_max_effort_gives_zero_reward() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir);
    cfg.model.params = cfg.model.params.with_max_effort(0.0).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    let hjb = report.hjb.unwrap();
    assert_eq!(hjb.rho, 0.0);
    assert_eq!(report.diffusion.unwrap().estimate.estimate, 0.0);
}

#[test]
fn extinction_study_refuses_persistent_parameters() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_extinction_study(&small(&dir)),
        Err(Error::Persistent { .. })
    ));
}

#[test]
fn extinct_configuration_dies_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&common::config_path("extinct.json")).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.n_paths = 8;
    cfg.sim.wideband.n_paths = 4;
    cfg.sim.diffusion.t_end = 200.0;
    cfg.sim.wideband.t_end = 100.0;
    cfg.sim.wideband.burn_in = 20.0;
    cfg.epsilon_ladder = vec![0.25];
    let report = run_extinction_study(&cfg).unwrap();
    assert!(report.margin < 0.0);
    assert!(report.pass, "{:#?}", report.rows);
    assert!(dir.path().join("extinction.csv").exists());
}

#[test]
fn pipeline_skips_lyapunov_checks_for_extinct_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir);
    cfg.model.params = harvest_core::model::ModelParams::new(1.0, 1.0, 1.0, -2.0, 1.0, 1.0, 2.0).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.lyapunov.is_none());
}

#[test]
fn ladder_reports_every_rung() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir);
    let table = run_epsilon_ladder(&cfg, &ConstantEffort(1.0)).unwrap();
    assert_eq!(table.rows.len(), cfg.epsilon_ladder.len());
    assert!(table.trend.is_some());
    assert!(dir.path().join("ladder.csv").exists());
}

#[test]
fn small_lyapunov_battery_runs() {
    let dir = tempfile::tempdir().unwrap();
    let v = run_lyapunov_verification(&small(&dir)).unwrap();
    assert!(v.core.exponents.lambda > 0.0);
    assert!(v.core.sandwich.worst_value < 1e-10);
    assert!(dir.path().join("lyapunov/drift_scan.csv").exists());
}

#[test]
fn regularized_policy_earns_the_raw_policy_reward() {
    use harvest_core::diffusion_sim::run_diffusion_batch;
    use harvest_core::harness::prepare;
    use harvest_core::hjb::{build_mdp, lipschitz_regularize, solve_average_reward};
    use harvest_core::sim::PathOptions;

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir);
    cfg.n_paths = 16;
    cfg.sim.diffusion.t_end = 300.0;
    cfg.sim.diffusion.burn_in = 50.0;
    let prep = prepare(&cfg).unwrap();
    let mdp = build_mdp(&prep.params, &prep.harvest, &prep.coeffs, &cfg.grid).unwrap();
    let (_, raw) = solve_average_reward(&mdp, &cfg.solver.options()).unwrap();
    let reward = |p: &harvest_core::hjb::PolicyTable| {
        run_diffusion_batch(
            &prep.params,
            &prep.harvest,
            &prep.coeffs,
            p,
            &cfg.diffusion(),
            cfg.n_paths,
            &PathOptions::default(),
        )
        .unwrap()
        .reward()
    };
    let base = reward(&raw);
    for radius in [1, 2] {
        let r = reward(&lipschitz_regularize(&raw, radius));
        let gap = (r.estimate - base.estimate).abs();
        assert!(gap <= 2.0 * r.stderr.hypot(base.stderr), "radius {radius}: gap {gap}");
    }
}
