//! Bundled per-storm comparison table for 26 North Atlantic storms,
//! 2009-2019: attention summaries, impacts and peak category.

use serde::Deserialize;

use crate::bayes::ImpactObservation;
use crate::corpus::{GramKind, UsageRateSeries};
use crate::dossier::MaxCategory;
use crate::metrics::{attention_quantile, peak_usage, RadarInput};

pub const HURRICANE_COMPARE_CSV: &str = include_str!("../data/hurricane_compare.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStorm {
    pub season: i32,
    pub name: String,
    pub integrated: f64,
    pub max_rate: f64,
    pub deaths: Option<u64>,
    pub damage_usd: Option<f64>,
    pub q99_days: usize,
    pub q90_days: usize,
    pub max_category: MaxCategory,
}

impl ReferenceStorm {
    pub fn label(&self) -> String {
        format!("{} {}", self.season, self.name)
    }
}

#[derive(Deserialize)]
struct Record {
    season: i32,
    name: String,
    integrated: f64,
    max_rate: f64,
    deaths: Option<u64>,
    damage_usd: Option<f64>,
    q99_days: usize,
    q90_days: usize,
    max_category: String,
}

/// The table rows, ordered by damage as published.
pub fn hurricane_compare() -> Vec<ReferenceStorm> {
    csv::Reader::from_reader(HURRICANE_COMPARE_CSV.as_bytes())
        .deserialize::<Record>()
        .map(|r| {
            let r = r.expect("bundled table parses");
            ReferenceStorm {
                season: r.season,
                name: r.name,
                integrated: r.integrated,
                max_rate: r.max_rate,
                deaths: r.deaths,
                damage_usd: r.damage_usd,
                q99_days: r.q99_days,
                q90_days: r.q90_days,
                max_category: MaxCategory::parse(&r.max_category).expect("bundled category"),
            }
        })
        .collect()
}

pub fn impact_observations(storms: &[ReferenceStorm]) -> Vec<ImpactObservation> {
    storms
        .iter()
        .map(|s| ImpactObservation {
            label: s.label(),
            integrated: s.integrated,
            deaths: s.deaths,
            damage_usd: s.damage_usd,
            category: Some(s.max_category),
        })
        .collect()
}

pub fn radar_inputs(storms: &[ReferenceStorm]) -> Vec<RadarInput> {
    storms
        .iter()
        .map(|s| RadarInput {
            label: s.label(),
            max_rate: Some(s.max_rate),
            integrated: Some(s.integrated),
            q90_days: Some(s.q90_days as f64),
            q99_days: Some(s.q99_days as f64),
            damage_usd: s.damage_usd,
            deaths: s.deaths.map(|d| d as f64),
        })
        .collect()
}

/// A daily series consistent with one table row: the peak on day 0,
/// just over 90% of the total by the 0.9 quantile, 99% reached exactly on
/// the 0.99 quantile, and the remainder spread over the rest of the window.
/// `None` when the row's values cannot be met this way.
pub fn cumulative_stand_in(storm: &ReferenceStorm, window_days: usize) -> Option<UsageRateSeries> {
    let (i, q90, q99) = (storm.integrated, storm.q90_days, storm.q99_days);
    if !(q90 >= 2 && q90 < q99 && q99 < window_days) {
        return None;
    }
    let head = 0.9001 * i - storm.max_rate;
    let mut rates = vec![0.0; window_days];
    rates[0] = storm.max_rate;
    for r in &mut rates[1..q90] {
        *r = head / (q90 - 1) as f64;
    }
    for r in &mut rates[q90..q99] {
        *r = 0.09 * i / (q99 - q90) as f64;
    }
    let tail = i - rates[..q99].iter().sum::<f64>();
    for r in &mut rates[q99..] {
        *r = tail / (window_days - q99) as f64;
    }
    let start = chrono::NaiveDate::from_ymd_opt(storm.season, 1, 1)?;
    let series = UsageRateSeries::from_rates(
        &format!("#hurricane{}", storm.name.to_lowercase()),
        GramKind::Unigram,
        start,
        &rates,
    );
    let consistent = head > 0.0
        && peak_usage(&series) == (0, storm.max_rate)
        && attention_quantile(&series, 0.9).ok() == Some(q90)
        && attention_quantile(&series, 0.99).ok() == Some(q99);
    consistent.then_some(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let storms = hurricane_compare();
        assert_eq!(storms.len(), 26);
        assert_eq!(storms[0].label(), "2017 Harvey");
        let danny = storms.iter().find(|s| s.name == "Danny").unwrap();
        assert_eq!(danny.damage_usd, None);
        assert_eq!(danny.deaths, Some(0));
        let bertha = storms.iter().find(|s| s.name == "Bertha").unwrap();
        assert_eq!(bertha.damage_usd, Some(0.0));
    }

    #[test]
    fn maria_stand_in() {
        let storms = hurricane_compare();
        let maria = storms.iter().find(|s| s.name == "Maria").unwrap();
        let s = cumulative_stand_in(maria, 365).unwrap();
        assert_eq!(attention_quantile(&s, 0.99).unwrap(), 363);
        assert!((s.dense().iter().sum::<f64>() - 4.9e-4).abs() < 1e-15);
    }
}
