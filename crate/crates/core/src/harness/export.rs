use std::path::PathBuf;

use super::ExperimentReport;
use crate::error::{Error, Result};

/// Collects the plot-ready files of a finished pipeline run under
/// `<output_dir>/plots`: the policy heatmap, the value function, the
/// occupation histograms of both systems, the epsilon-ladder table and the
/// sample paths. Returns the written paths.
pub fn export_plot_data(report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    let missing = |stage: &str| Error::MissingStage(stage.to_string());
    let hjb = report.hjb.as_ref().ok_or_else(|| missing("hjb"))?;
    let diffusion = report.diffusion.as_ref().ok_or_else(|| missing("diffusion"))?;
    let wideband = report.wideband.as_ref().ok_or_else(|| missing("wideband"))?;

    let mut pairs: Vec<(String, String)> = vec![
        (hjb.policy_csv.clone(), "policy_heatmap.csv".into()),
        (hjb.value_csv.clone(), "value_function.csv".into()),
        (diffusion.occupation_csv.clone(), "occupation_diffusion.csv".into()),
        (wideband.occupation_csv.clone(), "occupation_wideband.csv".into()),
        (wideband.table_csv.clone(), "epsilon_ladder.csv".into()),
    ];
    for (k, p) in diffusion.paths.iter().enumerate() {
        pairs.push((p.clone(), format!("path_diffusion_{k}.csv")));
    }
    for (k, p) in wideband.paths.iter().enumerate() {
        pairs.push((p.clone(), format!("path_wideband_{k}.csv")));
    }

    let dir = report.output_dir.join("plots");
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::with_capacity(pairs.len());
    for (src, name) in pairs {
        let dest = dir.join(name);
        std::fs::copy(report.output_dir.join(src), &dest)?;
        written.push(dest);
    }
    Ok(written)
}
