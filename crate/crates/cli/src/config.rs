use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stormlens::bayes::{CategoryClass, Impact, ModelKind, SamplerConfig};
use stormlens::corpus::CorpusKind;
use stormlens::decay::DecayConfig;
use stormlens::dossier::DEFAULT_WINDOW_DAYS;
use stormlens::mapgen::DEFAULT_MAX_HALF_WIDTH_DEG;

/// Pipeline settings read from the JSON config. Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub tweets: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub hurdat2: Option<PathBuf>,
    pub impacts: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default = "default_corpus")]
    pub corpus: CorpusKind,
    #[serde(default = "default_window")]
    pub window_days: usize,
    /// Inclusive range of season years accepted in the impacts file.
    pub study_window: Option<(i32, i32)>,
    /// Only these seasons, when given.
    pub seasons: Option<Vec<i32>>,
    /// Only these storm names, when given.
    pub storms: Option<Vec<String>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default = "default_models")]
    pub models: Vec<ModelChoice>,
    #[serde(default)]
    pub map: MapSettings,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: usize,
    pub draws: usize,
    pub burn_in: Option<usize>,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            chains: d.chains,
            draws: d.draws,
            burn_in: d.burn_in,
            target_accept: d.target_accept,
            max_tree_depth: d.max_tree_depth,
        }
    }
}

impl SamplerSettings {
    pub fn with_seed(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            draws: self.draws,
            burn_in: self.burn_in,
            seed,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    /// Half-width in degrees given to the batch's largest smoothed rate.
    pub max_half_width_deg: f64,
    /// Fixed degrees per unit rate; overrides the batch scale.
    pub k: Option<f64>,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            max_half_width_deg: DEFAULT_MAX_HALF_WIDTH_DEG,
            k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Reg1,
    Reg2,
    Reg3,
    /// Tropical storms, each category and all hurricanes, for deaths and
    /// damage separately.
    PerCategory,
}

impl ModelChoice {
    pub fn expand(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Reg1 => vec![ModelKind::Reg1],
            ModelChoice::Reg2 => vec![ModelKind::Reg2],
            ModelChoice::Reg3 => vec![ModelKind::Reg3],
            ModelChoice::PerCategory => [Impact::Deaths, Impact::Damage]
                .into_iter()
                .flat_map(|impact| {
                    CategoryClass::standard_set()
                        .into_iter()
                        .map(move |class| ModelKind::PerCategory { impact, class })
                })
                .collect(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_language() -> String {
    "en".into()
}

fn default_corpus() -> CorpusKind {
    CorpusKind::Organic
}

fn default_window() -> usize {
    DEFAULT_WINDOW_DAYS
}

fn default_models() -> Vec<ModelChoice> {
    vec![
        ModelChoice::PerCategory,
        ModelChoice::Reg1,
        ModelChoice::Reg2,
        ModelChoice::Reg3,
    ]
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.tweets,
            &mut cfg.counts,
            &mut cfg.hurdat2,
            &mut cfg.impacts,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if cfg.window_days == 0 {
            bail!("window_days must be positive");
        }
        Ok(cfg)
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .with_context(|| format!("config does not set `{name}`"))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .context("a seed is required: set `seed` in the config or pass --seed")
    }
}

pub const CONFIG_HELP: &str = "\
Config keys (JSON; relative paths resolve against the config's directory):
  tweets        raw tweets TSV: timestamp, lang, is_retweet, text   (ingest)
  counts        n-gram counts TSV                                   (required except for ingest)
  hurdat2       HURDAT2 best-track file                             (required except for ingest)
  impacts       CSV name,season,deaths,damage_usd,max_category      (required except for ingest)
  output_dir    artifact directory                                  [default: out]
  language      two-letter language code                            [default: en]
  corpus        \"organic\" or \"all\"                                  [default: organic]
  window_days   days of attention per storm                         [default: 365]
  study_window  [first, last] accepted season years                 [default: any]
  seasons       season filter                                       [default: all]
  storms        storm-name filter                                   [default: all]
  seed          RNG seed for fit-decay, regress and report          (required for those)
  decay         {p_bounds, q_bounds, r_bounds, alpha_bounds, starts, grid_starts,
                 grid_points, random_starts, min_consecutive_days}
                [default: p,r in [1e-3,10], q in [1e-3,0.1], alpha in [1e-6,10],
                 5 diagonal + 3 grid (12 per axis) + 2 random starts, 6 days]
  sampler       {chains, draws, burn_in, target_accept, max_tree_depth}
                [default: 8 chains, 2000 draws, burn-in 1000 per-category / 500
                 combined, target 0.8, depth 10]
  models        any of reg1, reg2, reg3, per_category           [default: all]
  map           {max_half_width_deg, k}                         [default: 8 degrees, k from batch]

Set STORMLENS_LOG (error, warn, info, debug, trace) for log verbosity.";
