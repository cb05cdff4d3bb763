use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bbcov::evaluation::{f2_checkpoints, write_metrics_csv};
use bbcov::runner::artifacts::dataset_from_records;
use bbcov::runner::{
    CampaignConfig, ObjectiveConfig, generate_ground_truth, modalities_hit, read_records_csv,
    report_modality_coverage, run_external, run_single, run_suite, validation_for,
};
use clap::{Args, Parser, Subcommand};

/// Black-box coverage campaigns: find every region where an objective
/// exceeds a threshold, and score how well a sample set covers them.
#[derive(Parser)]
#[command(name = "bbcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run `repetitions` campaigns with seeds seed, seed+1, ... and aggregate.
    Suite {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate the objective on the validation grid and write a truth file.
    Truth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score an existing records file; prints the metrics CSV.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        records: PathBuf,
        /// Write metrics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-modality hit counts of a records file (JSON on stdout).
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        records: PathBuf,
        /// Assignment radius in raw coordinates.
        #[arg(long, default_value_t = f64::INFINITY)]
        radius: f64,
    },
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from a shipped preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Start from a TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set budget=2000 --set objective.dim=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<CampaignConfig> {
        let base = match (&self.preset, &self.config) {
            (Some(name), _) => CampaignConfig::preset(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                CampaignConfig::from_toml(&text)?
            }
            (None, None) => CampaignConfig::default(),
        };
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(b) = self.budget {
            overrides.push(format!("budget={b}"));
        }
        Ok(base.with_overrides(&overrides)?)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<bbcov::Error>()
                .map(|e| e.kind())
                .unwrap_or("cli");
            let line = serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => {
            let config = config.load()?;
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            let summary = if matches!(config.objective, ObjectiveConfig::External { .. }) {
                // stdout carries the protocol; the summary goes to stderr
                let stdin = io::stdin().lock();
                let stdout = io::stdout().lock();
                let s = run_external(&config, &dir, stdin, stdout)?;
                eprintln!("{}", summary_line(&s.manifest));
                return Ok(());
            } else {
                run_single(&config, &dir)?
            };
            println!("{}", summary_line(&summary.manifest));
        }
        Command::Suite { config } => {
            let config = config.load()?;
            let s = run_suite(&config)?;
            for (rep, err) in &s.failures {
                eprintln!("repetition {rep} failed: {err}");
            }
            let mut out = io::stdout().lock();
            writeln!(out, "budget,mean,min,max,count")?;
            for r in &s.aggregate {
                writeln!(out, "{},{},{},{},{}", r.budget, r.mean, r.min, r.max, r.count)?;
            }
        }
        Command::Truth { config, out } => {
            let config = config.load()?;
            let gt = generate_ground_truth(&config, &out)?;
            let positives = gt.labels().iter().filter(|&&l| l).count();
            println!(
                "{} points, {} critical, written to {}",
                gt.values.len(),
                positives,
                out.display()
            );
        }
        Command::Eval {
            config,
            records,
            out,
        } => {
            let config = config.load()?;
            let objective = config.objective.build()?;
            let validation = validation_for(&config, objective.as_deref())?
                .context("no truth file and no in-process objective to score against")?;
            let recs = read_records_csv(open(&records)?)?;
            let dataset = dataset_from_records(&config.objective.space()?, recs)?;
            let checkpoints = f2_checkpoints(&dataset, &validation, config.effective_cadence())?;
            match out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    write_metrics_csv(&mut w, &checkpoints)?;
                    w.flush()?;
                }
                None => write_metrics_csv(io::stdout().lock(), &checkpoints)?,
            }
        }
        Command::Report {
            config,
            records,
            radius,
        } => {
            let config = config.load()?;
            let centers = config
                .objective
                .modality_centers()
                .context("this objective has no known modality centres")?;
            let recs = read_records_csv(open(&records)?)?;
            let report = report_modality_coverage(&recs, &centers, radius, config.delta);
            let line = serde_json::json!({
                "modalities": centers.len(),
                "hit": modalities_hit(&report),
                "per_modality": report,
            });
            println!("{}", serde_json::to_string_pretty(&line)?);
        }
        Command::Presets => {
            for (name, _) in bbcov::runner::PRESETS {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn summary_line(m: &bbcov::runner::Manifest) -> String {
    let f2 = m.final_f2.map_or("n/a".to_string(), |f| format!("{f:.4}"));
    let mut s = format!(
        "{} {} seed={} records={} treeifications={} final_f2={}",
        m.objective, m.algorithm, m.seed, m.records, m.treeifications, f2
    );
    if let Some(t) = &m.truncated {
        s.push_str(&format!(" truncated: {t}"));
    }
    s
}
