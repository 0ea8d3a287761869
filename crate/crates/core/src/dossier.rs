//! Storm impacts and the per-storm join of track, impacts and attention.

use std::collections::HashSet;
use std::fmt;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusKind, CountTable, StormPattern, UsageRateSeries};
use crate::hurdat2::{SaffirSimpson, StormTrack};

pub const DEFAULT_WINDOW_DAYS: usize = 365;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DossierError {
    #[error("impacts line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate impact record for {name} {season}")]
    Duplicate { name: String, season: i32 },
    #[error("{name} {season}: season outside study window {start}..={end}")]
    OutsideStudyWindow {
        name: String,
        season: i32,
        start: i32,
        end: i32,
    },
    #[error("{name} {season}: no usage series found (searched {})", patterns.join(", "))]
    NoSeries {
        name: String,
        season: i32,
        patterns: Vec<String>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Highest intensity a storm reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaxCategory {
    TropicalStorm,
    Hurricane(u8),
}

impl MaxCategory {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim() {
            "TS" | "ts" | "0" => Some(MaxCategory::TropicalStorm),
            s => s
                .parse::<u8>()
                .ok()
                .filter(|c| (1..=5).contains(c))
                .map(MaxCategory::Hurricane),
        }
    }

    pub fn is_hurricane(self) -> bool {
        matches!(self, MaxCategory::Hurricane(_))
    }
}

impl fmt::Display for MaxCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxCategory::TropicalStorm => f.write_str("TS"),
            MaxCategory::Hurricane(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormImpact {
    pub name: String,
    pub season: i32,
    /// Direct plus indirect deaths.
    pub deaths: Option<u64>,
    pub damage_usd: Option<f64>,
    pub max_category: Option<MaxCategory>,
}

#[derive(Debug, Deserialize)]
struct ImpactRecord {
    name: String,
    season: String,
    deaths: String,
    damage_usd: String,
    max_category: String,
}

/// Parses the impacts CSV (`name,season,deaths,damage_usd,max_category`).
/// Empty fields mean unknown. `study_window` bounds the season years
/// inclusively when given.
pub fn parse_impacts(
    text: &str,
    study_window: Option<(i32, i32)>,
) -> Result<Vec<StormImpact>, DossierError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, rec) in reader.deserialize::<ImpactRecord>().enumerate() {
        let line = idx + 2;
        let perr = |message: String| DossierError::Parse { line, message };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.name.is_empty() {
            return Err(perr("empty storm name".into()));
        }
        let season: i32 = rec
            .season
            .parse()
            .map_err(|_| perr(format!("bad season {:?}", rec.season)))?;
        let deaths = match rec.deaths.as_str() {
            "" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|_| perr(format!("bad deaths {s:?}")))?,
            ),
        };
        let damage_usd = match rec.damage_usd.as_str() {
            "" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| perr(format!("bad damage {s:?}")))?;
                if v.is_nan() {
                    None
                } else if !v.is_finite() || v < 0.0 {
                    return Err(perr(format!("bad damage {s:?}")));
                } else {
                    Some(v)
                }
            }
        };
        let max_category = match rec.max_category.as_str() {
            "" => None,
            s => Some(MaxCategory::parse(s).ok_or_else(|| perr(format!("bad category {s:?}")))?),
        };
        if let Some((start, end)) = study_window {
            if season < start || season > end {
                return Err(DossierError::OutsideStudyWindow {
                    name: rec.name,
                    season,
                    start,
                    end,
                });
            }
        }
        if !seen.insert((rec.name.to_lowercase(), season)) {
            return Err(DossierError::Duplicate {
                name: rec.name,
                season,
            });
        }
        out.push(StormImpact {
            name: rec.name,
            season,
            deaths,
            damage_usd,
            max_category,
        });
    }
    Ok(out)
}

/// Where dossiers read their usage series from.
#[derive(Debug, Clone, Copy)]
pub struct SeriesSource<'a> {
    pub table: &'a CountTable,
    pub corpus: CorpusKind,
    pub language: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormDossier {
    pub impact: StormImpact,
    pub track: Option<StormTrack>,
    pub hashtag_series: UsageRateSeries,
    pub bigram_series: UsageRateSeries,
    pub window_start: NaiveDate,
    pub window_days: usize,
}

impl StormDossier {
    pub fn label(&self) -> String {
        format!("{} {}", self.impact.season, self.impact.name)
    }

    /// Category from the impacts record, else from the track's peak wind.
    pub fn category(&self, scale: &SaffirSimpson) -> Option<MaxCategory> {
        self.impact.max_category.or_else(|| {
            self.track.as_ref().and_then(|t| {
                t.max_wind_kt()
                    .map(|w| match scale.category(w).ok().flatten() {
                        Some(c) => MaxCategory::Hurricane(c),
                        None => MaxCategory::TropicalStorm,
                    })
            })
        })
    }
}

/// Track matching `(name, season)` case-insensitively.
pub fn find_track<'a>(tracks: &'a [StormTrack], name: &str, season: i32) -> Option<&'a StormTrack> {
    tracks
        .iter()
        .find(|t| t.name.eq_ignore_ascii_case(name) && t.season() == Some(season))
}

pub fn assemble_dossier(
    impact: &StormImpact,
    tracks: &[StormTrack],
    source: SeriesSource<'_>,
    window_days: usize,
) -> Result<StormDossier, DossierError> {
    let name = impact.name.to_lowercase();
    let hashtag = StormPattern::hashtag(&name)?;
    let bigram = StormPattern::bigram(&name)?;
    let no_series = || DossierError::NoSeries {
        name: impact.name.clone(),
        season: impact.season,
        patterns: vec![hashtag.to_string(), bigram.to_string()],
    };

    let track = find_track(tracks, &impact.name, impact.season).cloned();
    let window_start = match track.as_ref().and_then(StormTrack::start) {
        Some(ts) => ts.date_naive(),
        None => {
            let (Some(jan1), Some(dec31)) = (
                NaiveDate::from_ymd_opt(impact.season, 1, 1),
                NaiveDate::from_ymd_opt(impact.season, 12, 31),
            ) else {
                return Err(no_series());
            };
            [&hashtag, &bigram]
                .into_iter()
                .filter_map(|p| {
                    source
                        .table
                        .first_usage(p, source.corpus, source.language, jan1, dec31)
                })
                .min()
                .ok_or_else(no_series)?
        }
    };
    let window_end = window_start + Duration::days(window_days.max(1) as i64 - 1);
    let hashtag_series = source.table.usage_series(
        &hashtag,
        source.corpus,
        source.language,
        window_start,
        window_end,
    )?;
    let bigram_series = source.table.usage_series(
        &bigram,
        source.corpus,
        source.language,
        window_start,
        window_end,
    )?;
    if !hashtag_series.has_data() && !bigram_series.has_data() {
        return Err(no_series());
    }
    Ok(StormDossier {
        impact: impact.clone(),
        track,
        hashtag_series,
        bigram_series,
        window_start,
        window_days,
    })
}

/// One entry per impact record, in input order: a dossier or the reason it
/// could not be assembled.
pub fn assemble_all(
    impacts: &[StormImpact],
    tracks: &[StormTrack],
    source: SeriesSource<'_>,
    window_days: usize,
) -> Vec<Result<StormDossier, DossierError>> {
    use rayon::prelude::*;
    impacts
        .par_iter()
        .map(|imp| assemble_dossier(imp, tracks, source, window_days))
        .collect()
}
