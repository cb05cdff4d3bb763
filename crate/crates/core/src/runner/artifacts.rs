//! Run directories: records, checkpoint metrics, manifest, tree dumps and
//! the suite aggregate.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::campaign::{CampaignOutcome, NoObserver, run_campaign};
use super::config::CampaignConfig;
use crate::domain::{Dataset, Objective, SampleRecord, SearchSpace};
use crate::error::{Error, Result};
use crate::evaluation::{
    Checkpoint, GroundTruth, TruthSource, ValidationSet, build_validation_set, f2_checkpoints,
    write_metrics_csv,
};

pub const RECORDS_FILE: &str = "records.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRUNCATED_FILE: &str = "TRUNCATED";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub objective: String,
    pub algorithm: String,
    pub seed: u64,
    pub records: usize,
    pub treeifications: usize,
    pub truncated: Option<String>,
    pub final_f2: Option<f64>,
    pub config: CampaignConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub checkpoints: Vec<Checkpoint>,
}

/// `index,x1..xd,y,wall_ms`, floats in shortest round-trip form.
pub fn write_records_csv(out: impl Write, dataset: &Dataset, wall_ms: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = dataset.space().dim();
    let mut header = vec!["index".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(["y".to_string(), "wall_ms".to_string()]);
    w.write_record(&header)?;
    for (i, r) in dataset.records().iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        row.push(r.y.to_string());
        row.push(wall_ms.get(i).copied().unwrap_or(0.0).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records file back; the dimension comes from the header.
pub fn read_records_csv(input: impl Read) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let dim = header.iter().filter(|h| h.starts_with('x')).count();
    if dim == 0 || header.get(0) != Some("index") || header.get(dim + 1) != Some("y") {
        return Err(Error::Config(format!(
            "records header must be index,x1..xd,y[,wall_ms], got {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .ok_or_else(|| Error::Config(format!("record row {} is short", out.len())))?
                .parse()
                .map_err(|e| Error::Config(format!("bad number in records: {e}")))
        };
        let x = (1..=dim).map(num).collect::<Result<Vec<_>>>()?;
        out.push(SampleRecord { x, y: num(dim + 1)? });
    }
    Ok(out)
}

/// Builds the dataset a records file describes inside `space`.
pub fn dataset_from_records(space: &SearchSpace, records: Vec<SampleRecord>) -> Result<Dataset> {
    let mut d = Dataset::new(space.clone());
    d.extend(records)?;
    Ok(d)
}

/// Validation set for `config`: from its truth file if set, otherwise by
/// evaluating `objective` on the grid. `None` when neither is available.
pub fn validation_for(
    config: &CampaignConfig,
    objective: Option<&dyn Objective>,
) -> Result<Option<ValidationSet>> {
    let space = config.objective.space()?;
    let resolution = config.effective_resolution();
    if let Some(path) = &config.truth_file {
        let gt = GroundTruth::read_csv(File::open(path)?)?;
        // The truth file fixes the grid; an unset resolution follows it.
        let resolution = if config.validation_resolution.is_some() {
            resolution
        } else {
            gt.resolution.clone()
        };
        return build_validation_set(&space, &resolution, TruthSource::Grid(&gt), config.delta).map(Some);
    }
    match objective {
        Some(f) => build_validation_set(&space, &resolution, TruthSource::Objective(f), config.delta).map(Some),
        None => {
            log::warn!("no truth file and no in-process objective; skipping F2 checkpoints");
            Ok(None)
        }
    }
}

/// Writes every artifact of a finished (possibly truncated) campaign.
pub fn write_run(
    config: &CampaignConfig,
    outcome: &CampaignOutcome,
    validation: Option<&ValidationSet>,
    dir: &Path,
) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let mut records = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    write_records_csv(&mut records, &outcome.dataset, &outcome.wall_ms)?;
    records.flush()?;
    fs::write(dir.join(CONFIG_FILE), config.to_toml()?)?;
    let checkpoints = match validation {
        Some(v) => f2_checkpoints(&outcome.dataset, v, config.effective_cadence())?,
        None => Vec::new(),
    };
    if validation.is_some() {
        let mut m = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
        write_metrics_csv(&mut m, &checkpoints)?;
        m.flush()?;
    }
    if !outcome.trees.is_empty() {
        let tdir = dir.join("trees");
        fs::create_dir_all(&tdir)?;
        for (i, t) in outcome.trees.iter().enumerate() {
            fs::write(tdir.join(format!("tree_{i:04}.jsonl")), t)?;
        }
    }
    let marker = dir.join(TRUNCATED_FILE);
    match &outcome.truncation {
        Some(msg) => fs::write(&marker, format!("{msg}\n"))?,
        None if marker.exists() => fs::remove_file(&marker)?,
        None => {}
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        objective: config.objective.name().to_string(),
        algorithm: serde_json::to_value(config.algorithm)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
        seed: config.seed,
        records: outcome.dataset.len(),
        treeifications: outcome.treeifications,
        truncated: outcome.truncation.clone(),
        final_f2: checkpoints.iter().rev().find_map(|c| c.report.map(|r| r.f2)),
        config: config.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        manifest,
        checkpoints,
    })
}

/// One in-process campaign with artifacts in `dir`.
pub fn run_single(config: &CampaignConfig, dir: &Path) -> Result<RunSummary> {
    let objective = config
        .objective
        .build()?
        .ok_or_else(|| Error::Config("external objectives need the ask/tell driver".into()))?;
    let validation = validation_for(config, Some(objective.as_ref()))?;
    let outcome = run_campaign(config, objective.as_ref(), &mut NoObserver)?;
    write_run(config, &outcome, validation.as_ref(), dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub budget: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Mean/min/max F2 per checkpoint budget over the runs that reached it.
pub fn aggregate(runs: &[Vec<Checkpoint>]) -> Vec<AggregateRow> {
    let mut by_budget: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for run in runs {
        for c in run {
            if let Some(r) = c.report {
                by_budget.entry(c.budget).or_default().push(r.f2);
            }
        }
    }
    by_budget
        .into_iter()
        .map(|(budget, v)| AggregateRow {
            budget,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: v.len(),
        })
        .collect()
}

pub fn write_aggregate_csv(out: impl Write, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct SuiteSummary {
    pub runs: Vec<RunSummary>,
    /// `(repetition, error)` for runs that failed outright.
    pub failures: Vec<(usize, String)>,
    pub aggregate: Vec<AggregateRow>,
}

/// `repetitions` campaigns with seeds `seed + i` under `output_dir/run_NNN`,
/// plus `aggregate.csv`.
pub fn run_suite(config: &CampaignConfig) -> Result<SuiteSummary> {
    let objective = config
        .objective
        .build()?
        .ok_or_else(|| Error::Config("suites need an in-process objective".into()))?;
    let validation = validation_for(config, Some(objective.as_ref()))?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for rep in 0..config.repetitions {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(rep as u64);
        let dir = config.output_dir.join(format!("run_{rep:03}"));
        let res = run_campaign(&c, objective.as_ref(), &mut NoObserver)
            .and_then(|out| write_run(&c, &out, validation.as_ref(), &dir));
        match res {
            Ok(s) => runs.push(s),
            Err(e) => {
                log::error!("repetition {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    let curves: Vec<Vec<Checkpoint>> = runs.iter().map(|r| r.checkpoints.clone()).collect();
    let rows = aggregate(&curves);
    fs::create_dir_all(&config.output_dir)?;
    let mut f = BufWriter::new(File::create(config.output_dir.join(AGGREGATE_FILE))?);
    write_aggregate_csv(&mut f, &rows)?;
    f.flush()?;
    Ok(SuiteSummary {
        runs,
        failures,
        aggregate: rows,
    })
}

/// Writes a ground-truth grid file for `config`'s objective.
pub fn generate_ground_truth(config: &CampaignConfig, path: &Path) -> Result<GroundTruth> {
    let objective = config
        .objective
        .build()?
        .ok_or_else(|| Error::Config("ground truth needs an in-process objective".into()))?;
    let gt = GroundTruth::generate(
        objective.as_ref(),
        &config.objective.space()?,
        &config.effective_resolution(),
        config.delta,
    )?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    gt.write_csv(&mut f)?;
    f.flush()?;
    Ok(gt)
}
