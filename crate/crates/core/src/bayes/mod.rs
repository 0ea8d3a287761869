//! Bayesian log-log regressions of integrated attention on storm impacts.
//!
//! Response `y = log10(I + 1e-8)`; predictors `log10(deaths + 0.1)` and
//! `log10(damage + 1e4)`, optionally their product and category indicators.
//! Posteriors are sampled with NUTS ([`nuts`]) and summarized with split
//! R-hat, effective sample size and HPD intervals ([`diagnostics`]).

pub mod diagnostics;
pub mod model;
pub mod nuts;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dossier::{MaxCategory, StormDossier};
use crate::hurdat2::SaffirSimpson;
use crate::metrics::integrated_usage;

pub use diagnostics::{
    convergence_diagnostics, effective_sample_size, fold_change, hpd_interval, split_rhat,
    summarize_posterior, summary_csv, Diagnostics, SummaryRow,
};
pub use model::{log_posterior_grad, LogDensity, RegressionPosterior};
pub use nuts::{sample, sample_posterior, PosteriorSamples, SamplerReport};

pub const ATTENTION_OFFSET: f64 = 1e-8;
pub const DEATHS_OFFSET: f64 = 0.1;
pub const DAMAGE_OFFSET_USD: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("{model}: only {rows} usable rows, need at least 3")]
    TooFewRows { model: String, rows: usize },
    #[error("non-finite {what} at parameter {param}")]
    NonFinite { what: &'static str, param: String },
    #[error("parameter vector has length {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("could not find a finite starting point for chain {chain}")]
    Initialization { chain: usize },
    #[error("diagnostics need at least 2 chains (got {0})")]
    SingleChain(usize),
    #[error("diagnostics need at least 4 draws per chain (got {0})")]
    TooFewDraws(usize),
    #[error("sampler config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impact {
    Deaths,
    Damage,
}

impl fmt::Display for Impact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Impact::Deaths => "deaths",
            Impact::Damage => "damage",
        })
    }
}

/// Storm subset of a per-category model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CategoryClass {
    TropicalStorm,
    Category(u8),
    AllHurricanes,
}

impl CategoryClass {
    pub fn admits(self, cat: MaxCategory) -> bool {
        match (self, cat) {
            (CategoryClass::TropicalStorm, MaxCategory::TropicalStorm) => true,
            (CategoryClass::Category(c), MaxCategory::Hurricane(h)) => c == h,
            (CategoryClass::AllHurricanes, MaxCategory::Hurricane(_)) => true,
            _ => false,
        }
    }

    /// Tropical storms, categories 1-5, then all hurricanes together.
    pub fn standard_set() -> Vec<CategoryClass> {
        let mut v = vec![CategoryClass::TropicalStorm];
        v.extend((1..=5).map(CategoryClass::Category));
        v.push(CategoryClass::AllHurricanes);
        v
    }
}

impl fmt::Display for CategoryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CategoryClass::TropicalStorm => f.write_str("ts"),
            CategoryClass::Category(c) => write!(f, "cat{c}"),
            CategoryClass::AllHurricanes => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// `y ~ a0 + a1 X_impact` on one category, with a gamma hyper-prior on
    /// the intercept precision.
    PerCategory {
        impact: Impact,
        class: CategoryClass,
    },
    /// Deaths and damage.
    Reg1,
    /// Regression 1 plus the deaths x damage interaction.
    Reg2,
    /// Regression 2 plus category 2-5 indicators.
    Reg3,
}

impl ModelKind {
    pub fn is_combined(self) -> bool {
        !matches!(self, ModelKind::PerCategory { .. })
    }

    pub fn slope_names(self) -> Vec<String> {
        let mut names: Vec<String> = match self {
            ModelKind::PerCategory {
                impact: Impact::Deaths,
                ..
            } => vec!["a_death".into()],
            ModelKind::PerCategory {
                impact: Impact::Damage,
                ..
            } => vec!["a_damage".into()],
            _ => vec!["a_death".into(), "a_damage".into()],
        };
        if matches!(self, ModelKind::Reg2 | ModelKind::Reg3) {
            names.push("a_dD".into());
        }
        if self == ModelKind::Reg3 {
            names.extend((2..=5).map(|c| format!("a_C{c}")));
        }
        names
    }

    /// Names of the reported (constrained) parameters, in sampler order.
    pub fn param_names(self) -> Vec<String> {
        let mut names = vec!["a0".to_string()];
        names.extend(self.slope_names());
        names.push("sigma".into());
        if !self.is_combined() {
            names.push("tau".into());
        }
        names
    }

    pub fn dim(self) -> usize {
        self.param_names().len()
    }

    pub fn default_burn_in(self) -> usize {
        if self.is_combined() {
            500
        } else {
            1000
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::PerCategory { impact, class } => write!(f, "{class}_{impact}"),
            ModelKind::Reg1 => f.write_str("reg1"),
            ModelKind::Reg2 => f.write_str("reg2"),
            ModelKind::Reg3 => f.write_str("reg3"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Intercept prior of the combined regressions: normal(mean, sd).
    pub intercept_mean: f64,
    pub intercept_sd: f64,
    /// Every slope: normal(0, slope_sd).
    pub slope_sd: f64,
    /// Half-normal scale on the noise sd.
    pub sigma_scale: f64,
    /// Gamma(shape, rate) on the per-category intercept precision.
    pub tau_shape: f64,
    pub tau_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            intercept_mean: -8.0,
            intercept_sd: 3.0,
            slope_sd: 1.0,
            sigma_scale: 5.0,
            tau_shape: 3.0,
            tau_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub draws: usize,
    /// `None` uses the model default (1000 per-category, 500 combined).
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Sd of the normal jitter added to prior means at initialization.
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 8,
            draws: 2000,
            burn_in: None,
            seed: 0,
            target_accept: 0.8,
            max_tree_depth: 10,
            init_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub model: ModelKind,
    pub priors: Priors,
    pub sampler: SamplerConfig,
}

impl RegressionSpec {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        Self {
            model,
            priors: Priors::default(),
            sampler: SamplerConfig {
                seed,
                ..SamplerConfig::default()
            },
        }
    }

    pub fn burn_in(&self) -> usize {
        self.sampler
            .burn_in
            .unwrap_or_else(|| self.model.default_burn_in())
    }
}

/// Per-storm inputs to a regression design.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactObservation {
    pub label: String,
    pub integrated: f64,
    pub deaths: Option<u64>,
    pub damage_usd: Option<f64>,
    pub category: Option<MaxCategory>,
}

impl ImpactObservation {
    pub fn from_dossier(d: &StormDossier, scale: &SaffirSimpson) -> Self {
        Self {
            label: d.label(),
            integrated: integrated_usage(&d.hashtag_series, d.window_days),
            deaths: d.impact.deaths,
            damage_usd: d.impact.damage_usd,
            category: d.category(scale),
        }
    }
}

pub fn log_attention(integrated: f64) -> f64 {
    (integrated + ATTENTION_OFFSET).log10()
}

pub fn log_deaths(deaths: u64) -> f64 {
    (deaths as f64 + DEATHS_OFFSET).log10()
}

pub fn log_damage(damage_usd: f64) -> f64 {
    (damage_usd + DAMAGE_OFFSET_USD).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub y: Vec<f64>,
    /// Slope column names, matching [`ModelKind::slope_names`].
    pub columns: Vec<String>,
    /// Row-major predictors without the intercept column.
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    /// Storms left out, with the reason.
    pub dropped: Vec<(String, String)>,
}

impl RegressionData {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// A design with no rows; the posterior reduces to the prior.
    pub fn empty(model: ModelKind) -> Self {
        Self {
            y: Vec::new(),
            columns: model.slope_names(),
            x: Vec::new(),
            labels: Vec::new(),
            dropped: Vec::new(),
        }
    }
}

/// Builds the design matrix for `spec.model`, dropping storms outside the
/// model's category set or with missing inputs.
pub fn build_design(
    observations: &[ImpactObservation],
    spec: &RegressionSpec,
) -> Result<RegressionData, BayesError> {
    let model = spec.model;
    let mut data = RegressionData::empty(model);
    for obs in observations {
        let mut drop = |reason: &str| data.dropped.push((obs.label.clone(), reason.to_string()));
        let Some(category) = obs.category else {
            drop("unknown category");
            continue;
        };
        let row = match model {
            ModelKind::PerCategory { impact, class } => {
                if !class.admits(category) {
                    drop("other category");
                    continue;
                }
                match impact {
                    Impact::Deaths => match obs.deaths {
                        Some(d) => vec![log_deaths(d)],
                        None => {
                            drop("deaths unknown");
                            continue;
                        }
                    },
                    Impact::Damage => match obs.damage_usd {
                        Some(d) => vec![log_damage(d)],
                        None => {
                            drop("damage unknown");
                            continue;
                        }
                    },
                }
            }
            ModelKind::Reg1 | ModelKind::Reg2 | ModelKind::Reg3 => {
                let MaxCategory::Hurricane(cat) = category else {
                    drop("tropical storm");
                    continue;
                };
                let (Some(deaths), Some(damage)) = (obs.deaths, obs.damage_usd) else {
                    drop("impact unknown");
                    continue;
                };
                let (xd, xdam) = (log_deaths(deaths), log_damage(damage));
                let mut row = vec![xd, xdam];
                if model != ModelKind::Reg1 {
                    row.push(xd * xdam);
                }
                if model == ModelKind::Reg3 {
                    row.extend((2..=5).map(|c| if cat == c { 1.0 } else { 0.0 }));
                }
                row
            }
        };
        let y = log_attention(obs.integrated);
        if !y.is_finite() || row.iter().any(|v| !v.is_finite()) {
            drop("non-finite value");
            continue;
        }
        data.y.push(y);
        data.x.push(row);
        data.labels.push(obs.label.clone());
    }
    if data.n_rows() < 3 {
        return Err(BayesError::TooFewRows {
            model: model.to_string(),
            rows: data.n_rows(),
        });
    }
    Ok(data)
}
