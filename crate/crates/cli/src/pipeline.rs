use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{Duration, NaiveDate};
use log::{info, warn};
use rayon::prelude::*;
use stormlens::bayes::{
    build_design, fold_change, sample_posterior, summarize_posterior, summary_csv, BayesError,
    ImpactObservation, Priors, RegressionSpec,
};
use stormlens::corpus::{
    ingest_tweets, parse_counts, read_tweets, write_counts, CountTable, GramKind, StormPattern,
};
use stormlens::decay::{
    decay_segment, eligible_for_fit, fit_decay, fit_report_csv, DecayModelKind, FitReportRow,
};
use stormlens::dossier::{assemble_all, parse_impacts, SeriesSource, StormDossier};
use stormlens::hurdat2::{parse_hurdat2, SaffirSimpson, StormTrack};
use stormlens::mapgen::{emit_geojson, envelopes_for_batch};
use stormlens::metrics::{
    attention_share, radar_csv, radar_from_dossiers, spearman_rho, summarize_attention,
    summary_csv as attention_csv, SummaryRow,
};

use crate::config::PipelineConfig;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn read(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))
}

pub fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let path = cfg.require(&cfg.tweets, "tweets")?;
    let (tweets, mut skips) = read_tweets(&read(path, "tweets file")?);
    let (rows, bad_ts) = ingest_tweets(tweets);
    skips.skipped.extend(bad_ts.skipped);
    if !skips.is_empty() {
        warn!("{} tweet lines skipped", skips.len());
    }
    write_atomic(&cfg.output_dir.join("counts.tsv"), &write_counts(&rows))?;
    let mut report = String::from("record\treason\n");
    for (line, reason) in &skips.skipped {
        report.push_str(&format!("{line}\t{reason}\n"));
    }
    write_atomic(&cfg.output_dir.join("ingest_skips.tsv"), &report)
}

/// Counts, tracks and joined per-storm dossiers.
pub struct Inputs {
    pub table: CountTable,
    pub tracks: Vec<StormTrack>,
    pub dossiers: Vec<StormDossier>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let impacts_path = cfg.require(&cfg.impacts, "impacts")?;
    let impacts = parse_impacts(&read(impacts_path, "impacts file")?, cfg.study_window)
        .with_context(|| format!("parsing impacts file {}", impacts_path.display()))?;
    let counts_path = cfg.require(&cfg.counts, "counts")?;
    let rows = parse_counts(&read(counts_path, "counts file")?)
        .with_context(|| format!("parsing counts file {}", counts_path.display()))?;
    let table = CountTable::from_rows(&rows)
        .with_context(|| format!("indexing counts file {}", counts_path.display()))?;
    let hurdat_path = cfg.require(&cfg.hurdat2, "hurdat2")?;
    let tracks = parse_hurdat2(&read(hurdat_path, "HURDAT2 file")?)
        .with_context(|| format!("parsing HURDAT2 file {}", hurdat_path.display()))?;

    let selected: Vec<_> = impacts
        .into_iter()
        .filter(|imp| cfg.seasons.as_ref().is_none_or(|s| s.contains(&imp.season)))
        .filter(|imp| {
            cfg.storms
                .as_ref()
                .is_none_or(|names| names.iter().any(|n| n.eq_ignore_ascii_case(&imp.name)))
        })
        .collect();
    let source = SeriesSource {
        table: &table,
        corpus: cfg.corpus,
        language: &cfg.language,
    };
    let mut dossiers = Vec::new();
    for (imp, result) in
        selected
            .iter()
            .zip(assemble_all(&selected, &tracks, source, cfg.window_days))
    {
        match result {
            Ok(d) => dossiers.push(d),
            Err(e) => warn!("skipping {} {}: {e}", imp.season, imp.name),
        }
    }
    info!("{} storm dossiers assembled", dossiers.len());
    Ok(Inputs {
        table,
        tracks,
        dossiers,
    })
}

pub fn metrics(cfg: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    let rows: Vec<SummaryRow> = inputs
        .dossiers
        .iter()
        .map(|d| SummaryRow {
            storm: d.impact.name.clone(),
            season: d.impact.season,
            summary: summarize_attention(&d.hashtag_series, d.window_days),
            deaths: d.impact.deaths,
            damage_usd: d.impact.damage_usd,
        })
        .collect();
    write_atomic(
        &cfg.output_dir.join("attention_summary.csv"),
        &attention_csv(&rows),
    )?;

    let mut corr = String::from("attention,impact,n,spearman_rho\n");
    for (attn, pick_attn) in [
        (
            "integrated",
            (|r: &SummaryRow| r.summary.integrated) as fn(&SummaryRow) -> f64,
        ),
        ("max_rate", |r: &SummaryRow| r.summary.max_rate),
    ] {
        for (impact, pick_impact) in [
            (
                "deaths",
                (|r: &SummaryRow| r.deaths.map(|d| d as f64)) as fn(&SummaryRow) -> Option<f64>,
            ),
            ("damage_usd", |r: &SummaryRow| r.damage_usd),
        ] {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| pick_impact(r).map(|y| (pick_attn(r), y)))
                .unzip();
            let rho = spearman_rho(&xs, &ys)
                .map(|r| r.to_string())
                .unwrap_or_default();
            corr.push_str(&format!("{attn},{impact},{},{rho}\n", xs.len()));
        }
    }
    write_atomic(&cfg.output_dir.join("impact_correlations.csv"), &corr)
}

pub fn radar(cfg: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    if inputs.dossiers.is_empty() {
        warn!("no storms for the radar table");
        return Ok(());
    }
    let table = radar_from_dossiers(&inputs.dossiers)?;
    write_atomic(&cfg.output_dir.join("radar_table.csv"), &radar_csv(&table))
}

/// Share of each storm's `hurricane <name>` bigram in the bare `hurricane`
/// unigram rate, per season.
pub fn attention_shares(cfg: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    let mut by_season: BTreeMap<i32, Vec<&StormDossier>> = BTreeMap::new();
    for d in &inputs.dossiers {
        by_season.entry(d.impact.season).or_default().push(d);
    }
    for (season, storms) in by_season {
        let start = NaiveDate::from_ymd_opt(season, 1, 1).context("season out of range")?;
        let end = NaiveDate::from_ymd_opt(season, 12, 31).context("season out of range")?;
        let unigram = inputs.table.gram_series(
            "hurricane",
            GramKind::Unigram,
            cfg.corpus,
            &cfg.language,
            start,
            end,
        )?;
        let mut columns = Vec::new();
        for d in &storms {
            let pattern = StormPattern::bigram(&d.impact.name.to_lowercase())?;
            let bigram =
                inputs
                    .table
                    .usage_series(&pattern, cfg.corpus, &cfg.language, start, end)?;
            columns.push(attention_share(&bigram, &unigram)?);
        }
        let mut out = String::from("date");
        for d in &storms {
            out.push(',');
            out.push_str(&d.impact.name);
        }
        out.push('\n');
        for day in 0..unigram.len() {
            out.push_str(&(start + Duration::days(day as i64)).to_string());
            for col in &columns {
                out.push(',');
                if let Some(v) = col[day] {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        write_atomic(
            &cfg.output_dir.join(format!("attention_share_{season}.csv")),
            &out,
        )?;
    }
    Ok(())
}

pub fn fit_decays(cfg: &PipelineConfig, inputs: &Inputs, seed: u64) -> Result<()> {
    let decay_cfg = stormlens::decay::DecayConfig {
        seed,
        ..cfg.decay.clone()
    };
    let per_storm: Vec<Vec<FitReportRow>> = inputs
        .dossiers
        .par_iter()
        .map(|d| {
            let mut rows = Vec::new();
            for (kind, series) in [("hashtag", &d.hashtag_series), ("bigram", &d.bigram_series)] {
                if !eligible_for_fit(series, decay_cfg.min_consecutive_days) {
                    info!("{}: {kind} series too sparse for decay fits", d.label());
                    continue;
                }
                let Ok(segment) = decay_segment(series) else {
                    continue;
                };
                for model in DecayModelKind::ALL {
                    match fit_decay(&segment, model, &decay_cfg) {
                        Ok(fit) => rows.push(FitReportRow {
                            storm: d.impact.name.clone(),
                            season: d.impact.season,
                            pattern_kind: kind.to_string(),
                            fit,
                        }),
                        Err(e) => warn!("{}: {kind} {model} fit failed: {e}", d.label()),
                    }
                }
            }
            rows
        })
        .collect();
    let rows: Vec<FitReportRow> = per_storm.into_iter().flatten().collect();
    write_atomic(
        &cfg.output_dir.join("decay_fits.csv"),
        &fit_report_csv(&rows),
    )
}

pub fn regress(cfg: &PipelineConfig, inputs: &Inputs, seed: u64) -> Result<()> {
    let scale = SaffirSimpson::default();
    let observations: Vec<ImpactObservation> = inputs
        .dossiers
        .iter()
        .map(|d| ImpactObservation::from_dossier(d, &scale))
        .collect();
    let mut report = String::from("model\trows\tstatus\tdetail\n");
    let models: Vec<_> = cfg.models.iter().flat_map(|m| m.expand()).collect();
    for model in models {
        let spec = RegressionSpec {
            model,
            priors: Priors::default(),
            sampler: cfg.sampler.with_seed(seed),
        };
        let data = match build_design(&observations, &spec) {
            Ok(data) => data,
            Err(e @ BayesError::TooFewRows { rows, .. }) => {
                warn!("{e}");
                report.push_str(&format!("{model}\t{rows}\tskipped\t{e}\n"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for (label, reason) in &data.dropped {
            info!("{model}: dropped {label} ({reason})");
        }
        let samples =
            sample_posterior(&spec, &data).with_context(|| format!("sampling {model}"))?;
        let summary = summarize_posterior(&samples)?;
        write_atomic(
            &cfg.output_dir.join(format!("posterior_{model}.csv")),
            &summary_csv(&summary),
        )?;
        let folds: Vec<String> = summary
            .iter()
            .filter(|r| r.param.starts_with("a_"))
            .map(|r| format!("{}={:.3}x", r.param, fold_change(r.mean)))
            .collect();
        let mut detail = format!(
            "dropped {}; fold change per 10x: {}",
            data.dropped.len(),
            folds.join(" ")
        );
        for w in &samples.report.warnings {
            detail.push_str(&format!("; {w}"));
        }
        report.push_str(&format!("{model}\t{}\tok\t{detail}\n", data.n_rows()));
    }
    write_atomic(&cfg.output_dir.join("regression_report.tsv"), &report)
}

pub fn maps(cfg: &PipelineConfig, inputs: &Inputs, max_half_width_deg: f64) -> Result<()> {
    let storms: Vec<(&StormTrack, &stormlens::corpus::UsageRateSeries)> = inputs
        .dossiers
        .iter()
        .filter_map(|d| match &d.track {
            Some(t) if t.points.len() >= 2 => Some((t, &d.hashtag_series)),
            _ => {
                warn!("{}: no usable track, left off the map", d.label());
                None
            }
        })
        .collect();
    // One scale for every season in the batch.
    let (k, envelopes) = envelopes_for_batch(&storms, max_half_width_deg, cfg.map.k)?;
    info!("map scale k = {k} degrees per unit rate");
    let mut by_season: BTreeMap<i32, Vec<_>> = BTreeMap::new();
    for (env, d) in envelopes.into_iter().zip(
        inputs
            .dossiers
            .iter()
            .filter(|d| d.track.as_ref().is_some_and(|t| t.points.len() >= 2)),
    ) {
        by_season.entry(d.impact.season).or_default().push(env);
    }
    for (season, envs) in by_season {
        let doc = emit_geojson(&envs, &inputs.tracks, season);
        let text = serde_json::to_string_pretty(&doc)?;
        write_atomic(
            &cfg.output_dir
                .join(format!("attention_map_{season}.geojson")),
            &text,
        )?;
    }
    Ok(())
}
