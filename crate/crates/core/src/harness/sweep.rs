use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{create_run_dir, finish, prepare, write_json, write_metrics_csv, AccessEvent, Ctx, SeedResult, Summary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub summary: Summary,
    pub seeds: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
    pub data_access: Vec<AccessEvent>,
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub run_dir: std::path::PathBuf,
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["delta", "accuracy_mean", "accuracy_std", "f1_mean", "f1_std"])?;
    for r in rows {
        let s = r.summary;
        w.write_record([r.delta, s.accuracy_mean, s.accuracy_std, s.f1_mean, s.f1_std].map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the pipeline at every fusion ratio in `deltas`. Each seed trains its
/// generators and autoencoder once and reuses them for every ratio.
pub fn sweep_delta(cfg: &ExperimentConfig, deltas: &[f64]) -> Result<SweepReport> {
    if deltas.is_empty() {
        return Err(Error::Config("no fusion ratios to sweep".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::Config(format!("fusion ratio must be positive, got {d}")));
    }
    let mut cfg = cfg.clone();
    cfg.experiment.use_fusion = true;
    cfg.validate()?;
    let run_dir = create_run_dir(&cfg.output_root(), &format!("{}-sweep", cfg.experiment.name))?;
    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::io(&config_path, e))?;

    let mut ctx = Ctx::new(&cfg);
    let all = ctx.load_train()?;
    let mut per_delta: Vec<Vec<SeedResult>> = vec![Vec::new(); deltas.len()];
    for &seed in &cfg.experiment.seeds {
        let seed_dir = run_dir.join(format!("seed-{seed}"));
        let prep = prepare(&mut ctx, &all, seed, &run_dir, &seed_dir)?;
        for (i, &delta) in deltas.iter().enumerate() {
            let out = seed_dir.join(format!("delta-{delta}"));
            per_delta[i].push(finish(&mut ctx, &prep, delta, &run_dir, &out)?);
        }
    }
    let rows: Vec<SweepRow> = deltas
        .iter()
        .zip(per_delta)
        .map(|(&delta, seeds)| SweepRow {
            delta,
            summary: Summary::of(&seeds),
            seeds,
        })
        .collect();
    write_sweep_csv(&run_dir.join("sweep.csv"), &rows)?;
    let all_seeds: Vec<SeedResult> = rows.iter().flat_map(|r| r.seeds.clone()).collect();
    write_metrics_csv(&run_dir.join("metrics.csv"), &all_seeds)?;
    let acc: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.summary.accuracy_mean)).collect();
    let f1: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.summary.f1_mean)).collect();
    crate::plot::line_chart(&[acc, f1], &run_dir.join("sweep.png"))?;
    let report = SweepReport {
        config: cfg.clone(),
        rows,
        warnings: ctx.warnings,
        data_access: ctx.log.events,
        timings: ctx.timings,
        run_dir: run_dir.clone(),
    };
    write_json(&run_dir.join("report.json"), &report)?;
    Ok(report)
}
