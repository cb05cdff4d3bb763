//! Campaign configuration: TOML files, shipped presets and `key=value`
//! overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::{Objective, SearchSpace};
use crate::error::{Error, Result};
use crate::objectives::scenario::{Scenario, ScenarioParams};
use crate::objectives::{HOLDER_MAXIMA, HolderTable, Ripples, RipplesParams, holder_table};
use crate::samplers::trust_region::TrustRegionParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum ObjectiveConfig {
    HolderTable,
    Ripples(RipplesParams),
    Scenario(ScenarioParams),
    /// Evaluated by an outside process over the ask/tell protocol.
    External { lower: Vec<f64>, upper: Vec<f64> },
}

impl ObjectiveConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveConfig::HolderTable => "holder-table",
            ObjectiveConfig::Ripples(_) => "ripples",
            ObjectiveConfig::Scenario(_) => "scenario",
            ObjectiveConfig::External { .. } => "external",
        }
    }

    pub fn space(&self) -> Result<SearchSpace> {
        match self {
            ObjectiveConfig::HolderTable => Ok(HolderTable::space()),
            ObjectiveConfig::Ripples(p) => Ok(Ripples::space(p.dim)),
            ObjectiveConfig::Scenario(_) => Ok(Scenario::space()),
            ObjectiveConfig::External { lower, upper } => {
                SearchSpace::new(lower.clone(), upper.clone())
            }
        }
    }

    /// The in-process objective; `None` for external ones.
    pub fn build(&self) -> Result<Option<Box<dyn Objective>>> {
        Ok(match self {
            ObjectiveConfig::HolderTable => Some(Box::new(holder_table)),
            ObjectiveConfig::Ripples(p) => Some(Box::new(Ripples::new(*p)?)),
            ObjectiveConfig::Scenario(p) => Some(Box::new(Scenario { params: *p })),
            ObjectiveConfig::External { .. } => None,
        })
    }

    /// Known modality centres, raw coordinates.
    pub fn modality_centers(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            ObjectiveConfig::HolderTable => Some(HOLDER_MAXIMA.iter().map(|c| c.to_vec()).collect()),
            ObjectiveConfig::Ripples(p) => Some(p.centers()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Lambda,
    /// UCB_1 scoring, uniform partition weights and a beam of one.
    LambdaPredecessorMode,
    Random,
    Sobol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalSampler {
    RejectSobol,
    TrustRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub init_points: usize,
    pub batch: usize,
    /// Evaluations per local campaign.
    pub local_budget: usize,
    pub success_tolerance: usize,
    pub failure_tolerance: Option<usize>,
    pub initial_fraction: f64,
    pub halvings: u32,
    pub max_candidates: usize,
    pub max_train: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        let p = TrustRegionParams::default();
        Self {
            init_points: p.init_points,
            batch: p.batch,
            local_budget: 200,
            success_tolerance: p.success_tolerance,
            failure_tolerance: p.failure_tolerance,
            initial_fraction: p.initial_fraction,
            halvings: p.halvings,
            max_candidates: p.max_candidates,
            max_train: p.max_train,
        }
    }
}

impl TrustRegionConfig {
    pub fn params(&self) -> TrustRegionParams {
        TrustRegionParams {
            init_points: self.init_points,
            batch: self.batch,
            success_tolerance: self.success_tolerance,
            failure_tolerance: self.failure_tolerance,
            initial_fraction: self.initial_fraction,
            halvings: self.halvings,
            max_candidates: self.max_candidates,
            max_train: self.max_train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub objective: ObjectiveConfig,
    pub delta: f64,
    pub budget: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub c_p: f64,
    pub leafsize: usize,
    pub depth: usize,
    pub init_samples: usize,
    pub beam_width: usize,
    pub selections_per_treeification: usize,
    pub samples_per_selection: usize,
    pub local_sampler: LocalSampler,
    #[serde(default)]
    pub trust_region: TrustRegionConfig,
    /// `None` picks 8 up to 3-D, 16 above.
    pub density_k: Option<usize>,
    /// Appended points tolerated before the density index is rebuilt.
    pub rebuild_interval: usize,
    /// Evaluations between F2 checkpoints; `None` picks 10 up to 3-D, 500 above.
    pub cadence: Option<usize>,
    /// Grid points per axis; `None` picks 100 / 40 / 12 for 2 / 3 / ≥4-D.
    pub validation_resolution: Option<usize>,
    /// Precomputed ground truth instead of evaluating the objective on the grid.
    pub truth_file: Option<PathBuf>,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub tree_dumps: bool,
    /// Record wall-clock milliseconds per evaluation. Off keeps records
    /// byte-identical between runs.
    pub timing: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        toml::from_str(HOLDER).expect("holder preset parses")
    }
}

const HOLDER: &str = r#"
delta = 18.0
budget = 5000
seed = 0
algorithm = "lambda"
c_p = 1.0
leafsize = 10
depth = 8
init_samples = 256
beam_width = 2
selections_per_treeification = 50
samples_per_selection = 1
local_sampler = "reject-sobol"
rebuild_interval = 100
repetitions = 10
output_dir = "runs"
tree_dumps = false
timing = false

[objective]
id = "holder-table"

[trust_region]
"#;

/// Shipped presets: name and TOML overlay on the Holder-Table base.
pub const PRESETS: &[(&str, &str)] = &[
    ("holder", ""),
    (
        "holder-predecessor",
        r#"
algorithm = "lambda-predecessor-mode"
c_p = 2.0
beam_width = 1
"#,
    ),
    (
        "ripples3",
        r#"
delta = 0.7
budget = 10000
c_p = 0.8
leafsize = 50
depth = 9
init_samples = 512
beam_width = 15
selections_per_treeification = 90
local_sampler = "trust-region"
[objective]
id = "ripples"
dim = 3
"#,
    ),
    (
        "ripples5",
        r#"
delta = 0.7
budget = 50000
c_p = 0.8
leafsize = 50
depth = 9
init_samples = 1024
beam_width = 15
selections_per_treeification = 90
local_sampler = "trust-region"
[objective]
id = "ripples"
dim = 5
"#,
    ),
    (
        "scenario",
        r#"
delta = -0.5
c_p = 0.25
init_samples = 64
[objective]
id = "scenario"
"#,
    ),
];

impl CampaignConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (_, overlay) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}` (known: {})", names.join(", ")))
        })?;
        let mut base: toml::Table = toml::from_str(HOLDER).expect("holder preset parses");
        let overlay: toml::Table = toml::from_str(overlay).expect("preset parses");
        merge(&mut base, overlay);
        Self::from_table(base)
    }

    /// Parses a config file's contents. A top-level `preset = "name"` key
    /// starts from that preset; the file's other keys override it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = match table.remove("preset") {
            Some(toml::Value::String(name)) => Self::preset(&name)?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => Self::default(),
        };
        let mut merged = base.to_table()?;
        merge(&mut merged, table);
        Self::from_table(merged)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides; dotted keys address nested tables and
    /// values are TOML literals, falling back to bare strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = self.to_table()?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            if key.trim() == "objective.id" && Some(&value) != table.get("objective").and_then(|t| t.get("id")) {
                // switching objective kinds drops the previous kind's parameters
                table.insert("objective".into(), toml::Value::Table(toml::Table::new()));
            }
            set_path(&mut table, &path, value)?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let space = self.objective.space()?;
        if let ObjectiveConfig::Ripples(p) = &self.objective {
            p.validate()?;
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if matches!(self.algorithm, Algorithm::Lambda | Algorithm::LambdaPredecessorMode) {
            if self.budget < self.init_samples {
                return bad(format!(
                    "budget {} is below init_samples {}",
                    self.budget, self.init_samples
                ));
            }
            if self.init_samples < space.dim() + 1 {
                return bad(format!("init_samples must be at least {}", space.dim() + 1));
            }
        }
        if self.beam_width == 0 {
            return bad("beam_width must be at least 1".into());
        }
        if self.leafsize < 2 {
            return bad("leafsize must be at least 2".into());
        }
        if self.selections_per_treeification == 0 || self.samples_per_selection == 0 {
            return bad("selections_per_treeification and samples_per_selection must be positive".into());
        }
        if self.rebuild_interval == 0 || self.repetitions == 0 {
            return bad("rebuild_interval and repetitions must be positive".into());
        }
        if self.cadence == Some(0) {
            return bad("cadence must be positive".into());
        }
        if self.validation_resolution.is_some_and(|r| r < 2) {
            return bad("validation_resolution must be at least 2".into());
        }
        if self.density_k == Some(0) {
            return bad("density_k must be positive".into());
        }
        let tr = &self.trust_region;
        if tr.batch == 0 || tr.local_budget == 0 || !(tr.initial_fraction > 0.0 && tr.initial_fraction <= 1.0) {
            return bad("trust_region needs batch, local_budget > 0 and initial_fraction in (0, 1]".into());
        }
        if !self.c_p.is_finite() || self.c_p < 0.0 {
            return bad(format!("c_p must be finite and non-negative, got {}", self.c_p));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.objective.space().map(|s| s.dim()).unwrap_or(0)
    }

    pub fn effective_density_k(&self) -> usize {
        self.density_k.unwrap_or_else(|| crate::density::default_k(self.dim()))
    }

    pub fn effective_cadence(&self) -> usize {
        self.cadence.unwrap_or(if self.dim() <= 3 { 10 } else { 500 })
    }

    pub fn effective_resolution(&self) -> Vec<usize> {
        let dim = self.dim();
        let r = self.validation_resolution.unwrap_or(match dim {
            0..=2 => 100,
            3 => 40,
            _ => 12,
        });
        vec![r; dim]
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "objective" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let c = CampaignConfig::preset(name).unwrap();
            c.validate().unwrap();
        }
        let h = CampaignConfig::preset("holder").unwrap();
        assert_eq!(
            (h.c_p, h.leafsize, h.depth, h.init_samples, h.budget, h.beam_width),
            (1.0, 10, 8, 256, 5000, 2)
        );
        assert_eq!((h.selections_per_treeification, h.samples_per_selection), (50, 1));
        let r = CampaignConfig::preset("ripples5").unwrap();
        assert_eq!((r.c_p, r.leafsize, r.depth, r.init_samples, r.budget), (0.8, 50, 9, 1024, 50_000));
        assert_eq!((r.beam_width, r.selections_per_treeification), (15, 90));
        assert_eq!((r.trust_region.init_points, r.trust_region.batch), (30, 5));
        assert_eq!(r.effective_resolution(), vec![12; 5]);
        assert_eq!(r.effective_cadence(), 500);
        let s = CampaignConfig::preset("scenario").unwrap();
        assert_eq!((s.c_p, s.init_samples, s.leafsize, s.budget), (0.25, 64, 10, 5000));
    }

    #[test]
    fn overrides_and_roundtrip() {
        let c = CampaignConfig::preset("holder")
            .unwrap()
            .with_overrides(&["budget=300", "objective.id=ripples", "objective.dim=3", "trust_region.batch=7", "algorithm=random"])
            .unwrap();
        assert_eq!(c.budget, 300);
        assert_eq!(c.dim(), 3);
        assert_eq!(c.trust_region.batch, 7);
        assert_eq!(c.algorithm, Algorithm::Random);
        let back = CampaignConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_can_start_from_preset() {
        let c = CampaignConfig::from_toml("preset = \"scenario\"\nseed = 9\n").unwrap();
        assert_eq!((c.seed, c.c_p, c.objective.name()), (9, 0.25, "scenario"));
    }

    #[test]
    fn rejects_bad_configs() {
        let h = CampaignConfig::preset("holder").unwrap();
        assert!(h.with_overrides(&["budget=100"]).is_err());
        assert!(h.with_overrides(&["beam_width=0"]).is_err());
        assert!(h.with_overrides(&["no_such_key=1"]).is_err());
        assert!(h.with_overrides(&["budget"]).is_err());
        assert!(CampaignConfig::preset("nope").is_err());
        // budget equal to the initial design is allowed
        assert!(h.with_overrides(&["budget=256"]).is_ok());
    }
}
