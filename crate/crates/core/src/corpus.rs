//! Daily n-gram usage rates for storm-name patterns.
//!
//! Two entry points feed the same count table: raw tweets (tokenized and
//! bucketed per UTC day, language and corpus) or a pre-aggregated counts
//! file. A usage rate is a gram's daily count divided by the total count of
//! all grams of the same kind in that day's bucket.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("storm name {0:?} must be non-empty and contain no whitespace")]
    InvalidStormName(String),
    #[error("pattern {pattern} expects {expected} grams, got a {actual}")]
    GramKindMismatch {
        pattern: String,
        expected: GramKind,
        actual: GramKind,
    },
    #[error("inconsistent day_total on {date} ({corpus}/{language}/{kind}): {first} vs {second}")]
    InconsistentDayTotal {
        date: NaiveDate,
        corpus: CorpusKind,
        language: String,
        kind: GramKind,
        first: u64,
        second: u64,
    },
    #[error("count {count} for {gram:?} on {date} exceeds day_total {day_total}")]
    CountExceedsTotal {
        date: NaiveDate,
        gram: String,
        count: u64,
        day_total: u64,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty window: {start} is after {end}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
}

/// Which tweets contribute to a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// Every tweet, retweets included.
    All,
    /// Originally authored tweets only.
    Organic,
}

impl CorpusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::All => "all",
            CorpusKind::Organic => "organic",
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(CorpusKind::All),
            "organic" => Ok(CorpusKind::Organic),
            other => Err(format!("unknown corpus kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramKind {
    Unigram,
    Bigram,
}

impl GramKind {
    /// Numeric code used in the counts file.
    pub fn code(self) -> u8 {
        match self {
            GramKind::Unigram => 1,
            GramKind::Bigram => 2,
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "1" => Some(GramKind::Unigram),
            "2" => Some(GramKind::Bigram),
            _ => None,
        }
    }
}

impl fmt::Display for GramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GramKind::Unigram => "unigram",
            GramKind::Bigram => "bigram",
        })
    }
}

/// One line of the counts file: `count` occurrences of `gram` out of
/// `day_total` grams of the same kind in the (date, corpus, language) bucket.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NgramCountRow {
    pub date: NaiveDate,
    pub corpus_kind: CorpusKind,
    pub language: String,
    pub gram_kind: GramKind,
    pub gram: String,
    pub count: u64,
    pub day_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    /// `#hurricane<name>` as a single token.
    Hashtag,
    /// `hurricane <name>` as an adjacent token pair.
    Bigram,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Hashtag => "hashtag",
            PatternKind::Bigram => "bigram",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StormPattern {
    storm_name: String,
    kind: PatternKind,
}

impl StormPattern {
    pub fn new(storm_name: &str, kind: PatternKind) -> Result<Self, CorpusError> {
        if storm_name.is_empty() || storm_name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidStormName(storm_name.to_string()));
        }
        Ok(Self {
            storm_name: storm_name.to_string(),
            kind,
        })
    }

    pub fn hashtag(storm_name: &str) -> Result<Self, CorpusError> {
        Self::new(storm_name, PatternKind::Hashtag)
    }

    pub fn bigram(storm_name: &str) -> Result<Self, CorpusError> {
        Self::new(storm_name, PatternKind::Bigram)
    }

    pub fn storm_name(&self) -> &str {
        &self.storm_name
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn gram_kind(&self) -> GramKind {
        match self.kind {
            PatternKind::Hashtag => GramKind::Unigram,
            PatternKind::Bigram => GramKind::Bigram,
        }
    }

    /// The lowercase gram this pattern matches exactly.
    pub fn target(&self) -> String {
        let name = self.storm_name.to_lowercase();
        match self.kind {
            PatternKind::Hashtag => format!("#hurricane{name}"),
            PatternKind::Bigram => format!("hurricane {name}"),
        }
    }
}

impl fmt::Display for StormPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PatternKind::Hashtag => write!(f, "#hurricane{}", self.storm_name),
            PatternKind::Bigram => write!(f, "hurricane {}", self.storm_name),
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00A1}'
                | '\u{00BF}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

/// Splits a tweet body into lowercase tokens.
///
/// Leading and trailing punctuation is stripped, except that a leading `#`
/// or `@` survives.
pub fn tokenize_line(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw
                .trim_end_matches(is_punct)
                .trim_start_matches(|c: char| is_punct(c) && c != '#' && c != '@');
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Case-insensitive exact match of a gram against a storm pattern.
pub fn match_storm_pattern(
    gram: &str,
    gram_kind: GramKind,
    pattern: &StormPattern,
) -> Result<bool, CorpusError> {
    if gram_kind != pattern.gram_kind() {
        return Err(CorpusError::GramKindMismatch {
            pattern: pattern.to_string(),
            expected: pattern.gram_kind(),
            actual: gram_kind,
        });
    }
    Ok(gram.to_lowercase() == pattern.target())
}

/// A raw tweet as read from the tweets file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetRecord {
    pub timestamp: String,
    pub language: String,
    pub is_retweet: bool,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkipReport {
    /// (record index, reason) for every skipped record.
    pub skipped: Vec<(usize, String)>,
}

impl SkipReport {
    pub fn len(&self) -> usize {
        self.skipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skipped.is_empty()
    }
}

/// Parses a tweet timestamp as a UTC instant. Accepts RFC 3339 and the
/// Twitter API `created_at` layout.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    DateTime::parse_from_str(raw, "%a %b %d %H:%M:%S %z %Y")
        .ok()
        .map(|ts| ts.with_timezone(&Utc))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct BucketKey {
    date: NaiveDate,
    corpus: CorpusKind,
    language: String,
    kind: GramKind,
}

/// Gram counts per (day, corpus, language, gram kind) bucket.
///
/// Accumulators built over disjoint shards combine with [`merge`], which is
/// associative and commutative.
///
/// [`merge`]: CountAccumulator::merge
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountAccumulator {
    buckets: BTreeMap<BucketKey, BTreeMap<String, u64>>,
}

impl CountAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tokens(
        &mut self,
        date: NaiveDate,
        language: &str,
        is_retweet: bool,
        tokens: &[String],
    ) {
        let corpora: &[CorpusKind] = if is_retweet {
            &[CorpusKind::All]
        } else {
            &[CorpusKind::All, CorpusKind::Organic]
        };
        for &corpus in corpora {
            let unigrams = self.bucket_mut(date, corpus, language, GramKind::Unigram);
            for tok in tokens {
                *unigrams.entry(tok.clone()).or_insert(0) += 1;
            }
            if tokens.len() >= 2 {
                let bigrams = self.bucket_mut(date, corpus, language, GramKind::Bigram);
                for pair in tokens.windows(2) {
                    *bigrams
                        .entry(format!("{} {}", pair[0], pair[1]))
                        .or_insert(0) += 1;
                }
            }
        }
    }

    fn bucket_mut(
        &mut self,
        date: NaiveDate,
        corpus: CorpusKind,
        language: &str,
        kind: GramKind,
    ) -> &mut BTreeMap<String, u64> {
        self.buckets
            .entry(BucketKey {
                date,
                corpus,
                language: language.to_string(),
                kind,
            })
            .or_default()
    }

    pub fn merge(mut self, other: CountAccumulator) -> CountAccumulator {
        for (key, grams) in other.buckets {
            let bucket = self.buckets.entry(key).or_default();
            for (gram, count) in grams {
                *bucket.entry(gram).or_insert(0) += count;
            }
        }
        self
    }

    /// Rows in (date, corpus, language, kind, gram) order.
    pub fn into_rows(self) -> Vec<NgramCountRow> {
        let mut rows = Vec::new();
        for (key, grams) in self.buckets {
            let day_total: u64 = grams.values().sum();
            for (gram, count) in grams {
                rows.push(NgramCountRow {
                    date: key.date,
                    corpus_kind: key.corpus,
                    language: key.language.clone(),
                    gram_kind: key.kind,
                    gram,
                    count,
                    day_total,
                });
            }
        }
        rows
    }
}

/// Tokenizes tweets and counts unigrams and adjacent bigrams per UTC day.
/// Records whose timestamp does not parse are skipped and reported.
pub fn ingest_tweets<I>(tweets: I) -> (Vec<NgramCountRow>, SkipReport)
where
    I: IntoIterator<Item = TweetRecord>,
{
    let mut acc = CountAccumulator::new();
    let mut report = SkipReport::default();
    for (idx, tweet) in tweets.into_iter().enumerate() {
        let Some(ts) = parse_timestamp(&tweet.timestamp) else {
            report
                .skipped
                .push((idx, format!("malformed timestamp {:?}", tweet.timestamp)));
            continue;
        };
        let tokens = tokenize_line(&tweet.text);
        acc.add_tokens(ts.date_naive(), &tweet.language, tweet.is_retweet, &tokens);
    }
    (acc.into_rows(), report)
}

/// Reads the tab-separated tweets file:
/// `timestamp <TAB> lang <TAB> is_retweet(0|1|true|false) <TAB> text`.
///
/// The text is everything after the third tab. Lines with too few fields or
/// an unreadable retweet flag land in the skip report alongside the record
/// index they would have had.
pub fn read_tweets(text: &str) -> (Vec<TweetRecord>, SkipReport) {
    let mut out = Vec::new();
    let mut report = SkipReport::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(4, '\t');
        let (Some(ts), Some(lang), Some(rt), Some(body)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            report
                .skipped
                .push((lineno + 1, "expected 4 tab-separated fields".to_string()));
            continue;
        };
        let is_retweet = match rt.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                report
                    .skipped
                    .push((lineno + 1, format!("bad retweet flag {other:?}")));
                continue;
            }
        };
        out.push(TweetRecord {
            timestamp: ts.to_string(),
            language: lang.trim().to_string(),
            is_retweet,
            text: body.to_string(),
        });
    }
    (out, report)
}

/// Parses the counts file. A header line is optional and starts with `#`.
pub fn parse_counts(text: &str) -> Result<Vec<NgramCountRow>, CorpusError> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CorpusError::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| err(format!("bad date {:?}: {e}", fields[0])))?;
        let corpus_kind = fields[1].parse::<CorpusKind>().map_err(err)?;
        let gram_kind = GramKind::from_code(fields[3])
            .ok_or_else(|| err(format!("bad gram kind {:?}", fields[3])))?;
        let count = fields[5]
            .parse::<u64>()
            .map_err(|e| err(format!("bad count {:?}: {e}", fields[5])))?;
        let day_total = fields[6]
            .parse::<u64>()
            .map_err(|e| err(format!("bad day_total {:?}: {e}", fields[6])))?;
        if day_total == 0 {
            return Err(err("day_total must be positive".to_string()));
        }
        if count > day_total {
            return Err(CorpusError::CountExceedsTotal {
                date,
                gram: fields[4].to_string(),
                count,
                day_total,
            });
        }
        rows.push(NgramCountRow {
            date,
            corpus_kind,
            language: fields[2].to_string(),
            gram_kind,
            gram: fields[4].to_string(),
            count,
            day_total,
        });
    }
    Ok(rows)
}

pub fn write_counts(rows: &[NgramCountRow]) -> String {
    let mut out = String::from("#date\tcorpus\tlang\tkind\tgram\tcount\tday_total\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.date.format("%Y-%m-%d"),
            r.corpus_kind,
            r.language,
            r.gram_kind.code(),
            r.gram,
            r.count,
            r.day_total
        ));
    }
    out
}

/// Daily usage rates for one gram in one corpus and language.
///
/// Index `d` is the day `start_date + d`. `None` marks a day with no
/// recorded grams at all, which is different from a day with zero usage.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageRateSeries {
    pub gram: String,
    pub gram_kind: GramKind,
    pub corpus_kind: CorpusKind,
    pub language: String,
    pub start_date: NaiveDate,
    pub rates: Vec<Option<f64>>,
    pub counts: Vec<Option<u64>>,
}

impl UsageRateSeries {
    /// A series with known rates and no underlying counts. Used for stand-in
    /// and synthetic series.
    pub fn from_rates(
        gram: &str,
        gram_kind: GramKind,
        start_date: NaiveDate,
        rates: &[f64],
    ) -> Self {
        Self {
            gram: gram.to_string(),
            gram_kind,
            corpus_kind: CorpusKind::All,
            language: "en".to_string(),
            start_date,
            rates: rates.iter().map(|&r| Some(r)).collect(),
            counts: vec![None; rates.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Rate on day `day`; missing or out-of-range days read as zero.
    pub fn rate(&self, day: usize) -> f64 {
        self.rates.get(day).copied().flatten().unwrap_or(0.0)
    }

    pub fn dense(&self) -> Vec<f64> {
        (0..self.len()).map(|d| self.rate(d)).collect()
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }

    /// Day index of `date`, if it falls inside the series.
    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start_date).num_days();
        (d >= 0 && (d as usize) < self.len()).then_some(d as usize)
    }

    pub fn truncated(&self, days: usize) -> Self {
        let mut out = self.clone();
        out.rates.truncate(days);
        out.counts.truncate(days);
        out
    }

    pub fn has_data(&self) -> bool {
        self.rates.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct GramKey {
    corpus: CorpusKind,
    language: String,
    kind: GramKind,
    gram: String,
}

/// Validated index over count rows, keyed case-insensitively by gram.
#[derive(Debug, Clone, Default)]
pub struct CountTable {
    totals: BTreeMap<BucketKey, u64>,
    grams: HashMap<GramKey, BTreeMap<NaiveDate, u64>>,
}

impl CountTable {
    pub fn from_rows(rows: &[NgramCountRow]) -> Result<Self, CorpusError> {
        let mut table = CountTable::default();
        for r in rows {
            if r.count > r.day_total {
                return Err(CorpusError::CountExceedsTotal {
                    date: r.date,
                    gram: r.gram.clone(),
                    count: r.count,
                    day_total: r.day_total,
                });
            }
            let bucket = BucketKey {
                date: r.date,
                corpus: r.corpus_kind,
                language: r.language.clone(),
                kind: r.gram_kind,
            };
            match table.totals.get(&bucket) {
                Some(&existing) if existing != r.day_total => {
                    return Err(CorpusError::InconsistentDayTotal {
                        date: r.date,
                        corpus: r.corpus_kind,
                        language: r.language.clone(),
                        kind: r.gram_kind,
                        first: existing,
                        second: r.day_total,
                    });
                }
                Some(_) => {}
                None => {
                    table.totals.insert(bucket, r.day_total);
                }
            }
            let key = GramKey {
                corpus: r.corpus_kind,
                language: r.language.clone(),
                kind: r.gram_kind,
                gram: r.gram.to_lowercase(),
            };
            *table
                .grams
                .entry(key)
                .or_default()
                .entry(r.date)
                .or_insert(0) += r.count;
        }
        Ok(table)
    }

    pub fn day_total(
        &self,
        date: NaiveDate,
        corpus: CorpusKind,
        language: &str,
        kind: GramKind,
    ) -> Option<u64> {
        self.totals
            .get(&BucketKey {
                date,
                corpus,
                language: language.to_string(),
                kind,
            })
            .copied()
    }

    /// Usage series of a literal gram (matched case-insensitively) over the
    /// inclusive window `[start, end]`.
    pub fn gram_series(
        &self,
        gram: &str,
        kind: GramKind,
        corpus: CorpusKind,
        language: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<UsageRateSeries, CorpusError> {
        if start > end {
            return Err(CorpusError::EmptyWindow { start, end });
        }
        let gram = gram.to_lowercase();
        let counts = self.grams.get(&GramKey {
            corpus,
            language: language.to_string(),
            kind,
            gram: gram.clone(),
        });
        let n_days = (end - start).num_days() as usize + 1;
        let mut rates = Vec::with_capacity(n_days);
        let mut raw = Vec::with_capacity(n_days);
        for offset in 0..n_days {
            let date = start + Duration::days(offset as i64);
            match self.day_total(date, corpus, language, kind) {
                Some(total) => {
                    let c = counts.and_then(|m| m.get(&date)).copied().unwrap_or(0);
                    rates.push(Some(c as f64 / total as f64));
                    raw.push(Some(c));
                }
                None => {
                    rates.push(None);
                    raw.push(None);
                }
            }
        }
        Ok(UsageRateSeries {
            gram,
            gram_kind: kind,
            corpus_kind: corpus,
            language: language.to_string(),
            start_date: start,
            rates,
            counts: raw,
        })
    }

    pub fn usage_series(
        &self,
        pattern: &StormPattern,
        corpus: CorpusKind,
        language: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<UsageRateSeries, CorpusError> {
        self.gram_series(
            &pattern.target(),
            pattern.gram_kind(),
            corpus,
            language,
            start,
            end,
        )
    }

    /// First date in `[start, end]` with a nonzero count for the pattern.
    pub fn first_usage(
        &self,
        pattern: &StormPattern,
        corpus: CorpusKind,
        language: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Option<NaiveDate> {
        let counts = self.grams.get(&GramKey {
            corpus,
            language: language.to_string(),
            kind: pattern.gram_kind(),
            gram: pattern.target(),
        })?;
        counts
            .range(start..=end)
            .find(|(_, &c)| c > 0)
            .map(|(&d, _)| d)
    }
}

/// Usage rates of `pattern` over the inclusive `window`.
pub fn build_usage_series(
    rows: &[NgramCountRow],
    pattern: &StormPattern,
    corpus: CorpusKind,
    language: &str,
    window: (NaiveDate, NaiveDate),
) -> Result<UsageRateSeries, CorpusError> {
    CountTable::from_rows(rows)?.usage_series(pattern, corpus, language, window.0, window.1)
}
