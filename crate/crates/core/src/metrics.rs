//! Per-storm attention summaries and cross-storm comparisons.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::UsageRateSeries;
use crate::dossier::StormDossier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("attention quantile undefined: integrated usage is zero")]
    ZeroAttention,
    #[error("quantile {0} outside (0, 1)")]
    QuantileRange(f64),
    #[error("rank correlation needs two equal-length vectors of length >= 2 (got {0} and {1})")]
    Length(usize, usize),
    #[error("rank correlation undefined for a constant vector")]
    Constant,
    #[error("non-finite value in rank correlation input")]
    NonFinite,
    #[error("series windows are not aligned")]
    Misaligned,
    #[error("radar table needs at least one storm")]
    NoStorms,
}

/// Sum of daily rates over the first `window_days` days; missing days add 0.
pub fn integrated_usage(series: &UsageRateSeries, window_days: usize) -> f64 {
    (0..window_days.min(series.len()))
        .map(|d| series.rate(d))
        .sum()
}

/// Earliest day attaining the maximum rate. An all-zero (or empty) series
/// reports `(0, 0.0)`.
pub fn peak_usage(series: &UsageRateSeries) -> (usize, f64) {
    let mut best = (0, 0.0);
    for d in 0..series.len() {
        let r = series.rate(d);
        if r > best.1 {
            best = (d, r);
        }
    }
    best
}

/// Smallest day count `d >= 1` whose cumulative usage over days `0..d`
/// reaches `q` of the series total.
pub fn attention_quantile(series: &UsageRateSeries, q: f64) -> Result<usize, MetricsError> {
    quantile_of_rates(&series.dense(), q)
}

pub(crate) fn quantile_of_rates(rates: &[f64], q: f64) -> Result<usize, MetricsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::QuantileRange(q));
    }
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::ZeroAttention);
    }
    let target = q * total;
    let mut cumulative = 0.0;
    for (d, r) in rates.iter().enumerate() {
        cumulative += r;
        if cumulative >= target {
            return Ok(d + 1);
        }
    }
    Ok(rates.len())
}

/// Mid-ranks (1-based), ties sharing the mean of their positions.
pub fn mid_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with mid-ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(MetricsError::Length(xs.len(), ys.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    pearson(&mid_ranks(xs), &mid_ranks(ys)).ok_or(MetricsError::Constant)
}

/// Daily ratio of a storm bigram's rate to the bare `hurricane` unigram rate.
/// Days where the unigram rate is zero or either series is missing are `None`.
pub fn attention_share(
    bigram: &UsageRateSeries,
    unigram: &UsageRateSeries,
) -> Result<Vec<Option<f64>>, MetricsError> {
    if bigram.start_date != unigram.start_date || bigram.len() != unigram.len() {
        return Err(MetricsError::Misaligned);
    }
    Ok(bigram
        .rates
        .iter()
        .zip(&unigram.rates)
        .map(|(b, u)| match (b, u) {
            (Some(b), Some(u)) if *u > 0.0 => Some(b / u),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttentionSummary {
    pub integrated: f64,
    pub max_rate: f64,
    pub max_day: usize,
    /// `None` when the storm drew no attention at all.
    pub q90_days: Option<usize>,
    pub q99_days: Option<usize>,
}

pub fn summarize_attention(series: &UsageRateSeries, window_days: usize) -> AttentionSummary {
    let windowed = series.truncated(window_days);
    let (max_day, max_rate) = peak_usage(&windowed);
    AttentionSummary {
        integrated: integrated_usage(&windowed, window_days),
        max_rate,
        max_day,
        q90_days: attention_quantile(&windowed, 0.9).ok(),
        q99_days: attention_quantile(&windowed, 0.99).ok(),
    }
}

/// Radar axes, in the order they are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RadarMeasure {
    MaxRate,
    Integrated,
    Q90,
    Q99,
    Damage,
    Deaths,
}

impl RadarMeasure {
    pub const ALL: [RadarMeasure; 6] = [
        RadarMeasure::MaxRate,
        RadarMeasure::Integrated,
        RadarMeasure::Q90,
        RadarMeasure::Q99,
        RadarMeasure::Damage,
        RadarMeasure::Deaths,
    ];

    pub fn column_name(self) -> &'static str {
        match self {
            RadarMeasure::MaxRate => "max_rate",
            RadarMeasure::Integrated => "integrated",
            RadarMeasure::Q90 => "q90_days",
            RadarMeasure::Q99 => "q99_days",
            RadarMeasure::Damage => "damage_usd",
            RadarMeasure::Deaths => "deaths",
        }
    }
}

/// Raw per-storm values feeding a radar table.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarInput {
    pub label: String,
    pub max_rate: Option<f64>,
    pub integrated: Option<f64>,
    pub q90_days: Option<f64>,
    pub q99_days: Option<f64>,
    pub damage_usd: Option<f64>,
    pub deaths: Option<f64>,
}

impl RadarInput {
    pub fn value(&self, m: RadarMeasure) -> Option<f64> {
        match m {
            RadarMeasure::MaxRate => self.max_rate,
            RadarMeasure::Integrated => self.integrated,
            RadarMeasure::Q90 => self.q90_days,
            RadarMeasure::Q99 => self.q99_days,
            RadarMeasure::Damage => self.damage_usd,
            RadarMeasure::Deaths => self.deaths,
        }
    }

    pub fn from_dossier(dossier: &StormDossier) -> Self {
        let s = summarize_attention(&dossier.hashtag_series, dossier.window_days);
        RadarInput {
            label: dossier.label(),
            max_rate: Some(s.max_rate),
            integrated: Some(s.integrated),
            q90_days: s.q90_days.map(|d| d as f64),
            q99_days: s.q99_days.map(|d| d as f64),
            damage_usd: dossier.impact.damage_usd,
            deaths: dossier.impact.deaths.map(|d| d as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarTable {
    pub measures: Vec<RadarMeasure>,
    pub labels: Vec<String>,
    /// `cells[storm][measure]`, each in `[0, 1]`.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Row index of the earliest storm attaining each column maximum.
    pub argmax: Vec<Option<usize>>,
}

/// Normalizes each measure by its maximum over the given storms. Columns
/// whose maximum is zero (or that have no values) come out absent.
pub fn radar_table(
    rows: &[RadarInput],
    measures: &[RadarMeasure],
) -> Result<RadarTable, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::NoStorms);
    }
    let mut cells = vec![vec![None; measures.len()]; rows.len()];
    let mut argmax = Vec::with_capacity(measures.len());
    for (j, &m) in measures.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if let Some(v) = row.value(m) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        match best {
            Some((i, max)) if max > 0.0 => {
                argmax.push(Some(i));
                for (r, row) in rows.iter().enumerate() {
                    cells[r][j] = row.value(m).map(|v| v / max);
                }
            }
            _ => argmax.push(None),
        }
    }
    Ok(RadarTable {
        measures: measures.to_vec(),
        labels: rows.iter().map(|r| r.label.clone()).collect(),
        cells,
        argmax,
    })
}

pub fn radar_from_dossiers(dossiers: &[StormDossier]) -> Result<RadarTable, MetricsError> {
    let rows: Vec<RadarInput> = dossiers.iter().map(RadarInput::from_dossier).collect();
    radar_table(&rows, &RadarMeasure::ALL)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn radar_csv(table: &RadarTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["storm".to_string()];
    header.extend(table.measures.iter().map(|m| m.column_name().to_string()));
    w.write_record(&header).expect("in-memory write");
    for (label, row) in table.labels.iter().zip(&table.cells) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|c| opt(*c)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One line of the attention summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub storm: String,
    pub season: i32,
    pub summary: AttentionSummary,
    pub deaths: Option<u64>,
    pub damage_usd: Option<f64>,
}

/// Columns follow the comparison table: integrated, max, deaths, damage,
/// then the 0.99 and 0.9 quantiles.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "storm",
        "season",
        "integrated",
        "max_rate",
        "deaths",
        "damage_usd",
        "q99_days",
        "q90_days",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.storm.clone(),
            r.season.to_string(),
            r.summary.integrated.to_string(),
            r.summary.max_rate.to_string(),
            opt(r.deaths),
            opt(r.damage_usd),
            opt(r.summary.q99_days),
            opt(r.summary.q90_days),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
