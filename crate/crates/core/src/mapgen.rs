//! Attention envelopes: a band around each storm track whose half-width
//! follows the smoothed usage rate, emitted as GeoJSON.

use chrono::{DateTime, Duration, NaiveTime, Utc};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::UsageRateSeries;
use crate::hurdat2::{track_kinematics_with, KinematicsError, Projection, StormTrack};

pub const DEFAULT_MAX_HALF_WIDTH_DEG: f64 = 8.0;
const HALF_WINDOW_HOURS: i64 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("track {0} needs at least two fixes for an envelope")]
    TooFewPoints(String),
    #[error("scale k must be positive and finite (got {0})")]
    InvalidScale(f64),
    #[error("smoothed series has {got} samples, track {storm} has {expected}")]
    Misaligned {
        storm: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Usage rate evaluated at each track timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSeries {
    pub samples: Vec<(DateTime<Utc>, f64)>,
}

impl SmoothedSeries {
    pub fn max_rate(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

fn step_rate(series: &UsageRateSeries, t: DateTime<Utc>) -> f64 {
    series
        .day_of(t.date_naive())
        .map(|d| series.rate(d))
        .unwrap_or(0.0)
}

/// Daily rate held constant over each UTC day, then averaged over the
/// track samples within 12 h either side. Near the ends of the track the
/// window holds fewer samples and the mean is over those present.
pub fn smooth_rates(series: &UsageRateSeries, timestamps: &[DateTime<Utc>]) -> SmoothedSeries {
    let raw: Vec<f64> = timestamps.iter().map(|&t| step_rate(series, t)).collect();
    let half = Duration::hours(HALF_WINDOW_HOURS);
    let mut lo = 0;
    let mut hi = 0;
    let samples = timestamps
        .iter()
        .map(|&t| {
            while timestamps[lo] < t - half {
                lo += 1;
            }
            while hi < timestamps.len() && timestamps[hi] <= t + half {
                hi += 1;
            }
            let window = &raw[lo..hi];
            (t, window.iter().sum::<f64>() / window.len() as f64)
        })
        .collect();
    SmoothedSeries { samples }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePolygon {
    pub basin_id: String,
    pub name: String,
    pub season: Option<i32>,
    /// Degrees of half-width per unit usage rate.
    pub k: f64,
    pub max_rate: f64,
    /// Track positions as (lat, lon).
    pub center: Vec<(f64, f64)>,
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
    /// Every half-width is zero.
    pub degenerate: bool,
}

impl EnvelopePolygon {
    /// Closed ring in (lon, lat): left side forward, right side backward.
    pub fn ring(&self) -> Vec<(f64, f64)> {
        let mut ring: Vec<(f64, f64)> = self
            .left
            .iter()
            .chain(self.right.iter().rev())
            .map(|&(lat, lon)| (lon, lat))
            .collect();
        if let Some(&first) = ring.first() {
            ring.push(first);
        }
        ring
    }
}

/// Offsets each track fix by `k * rate` along the left normal of its
/// velocity, on both sides.
pub fn build_envelope(
    track: &StormTrack,
    smoothed: &SmoothedSeries,
    k: f64,
) -> Result<EnvelopePolygon, MapError> {
    if track.points.len() < 2 {
        return Err(MapError::TooFewPoints(track.basin_id.clone()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(MapError::InvalidScale(k));
    }
    if smoothed.samples.len() != track.points.len() {
        return Err(MapError::Misaligned {
            storm: track.basin_id.clone(),
            expected: track.points.len(),
            got: smoothed.samples.len(),
        });
    }
    let proj = Projection::for_track(track);
    let n = track.points.len();
    let (mut center, mut left, mut right) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (point, &(_, rate)) in track.points.iter().zip(&smoothed.samples) {
        let kin = track_kinematics_with(track, &proj, point.timestamp)?;
        let (x, y) = proj.project(kin.lat, kin.lon);
        let w = k * rate;
        let (nx, ny) = kin.normal;
        center.push((kin.lat, kin.lon));
        left.push(proj.unproject(x + w * nx, y + w * ny));
        right.push(proj.unproject(x - w * nx, y - w * ny));
    }
    let max_rate = smoothed.max_rate();
    Ok(EnvelopePolygon {
        basin_id: track.basin_id.clone(),
        name: track.name.clone(),
        season: track.season(),
        k,
        max_rate,
        center,
        left,
        right,
        degenerate: max_rate == 0.0,
    })
}

/// Scale mapping the largest smoothed rate in the batch to
/// `max_half_width_deg`; 1 when the batch drew no attention.
pub fn default_scale(batch: &[SmoothedSeries], max_half_width_deg: f64) -> f64 {
    let max = batch
        .iter()
        .map(SmoothedSeries::max_rate)
        .fold(0.0, f64::max);
    if max > 0.0 {
        max_half_width_deg / max
    } else {
        1.0
    }
}

/// Smooths each storm's series and builds all envelopes with one shared k.
/// `k` overrides the batch default when given.
pub fn envelopes_for_batch(
    storms: &[(&StormTrack, &UsageRateSeries)],
    max_half_width_deg: f64,
    k: Option<f64>,
) -> Result<(f64, Vec<EnvelopePolygon>), MapError> {
    let smoothed: Vec<SmoothedSeries> = storms
        .par_iter()
        .map(|(track, series)| smooth_rates(series, &track.timestamps()))
        .collect();
    let k = k.unwrap_or_else(|| default_scale(&smoothed, max_half_width_deg));
    let envelopes = storms
        .par_iter()
        .zip(&smoothed)
        .map(|((track, _), s)| build_envelope(track, s, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((k, envelopes))
}

fn interpolate(track: &StormTrack, t: DateTime<Utc>) -> (f64, f64) {
    let pts = &track.points;
    let i = pts
        .partition_point(|p| p.timestamp <= t)
        .saturating_sub(1)
        .min(pts.len() - 1);
    if i + 1 >= pts.len() || pts[i].timestamp == t {
        return (pts[i].lat, pts[i].lon);
    }
    let (a, b) = (&pts[i], &pts[i + 1]);
    let frac = (t - a.timestamp).num_milliseconds() as f64
        / (b.timestamp - a.timestamp).num_milliseconds() as f64;
    (
        a.lat + frac * (b.lat - a.lat),
        a.lon + frac * (b.lon - a.lon),
    )
}

/// Interpolated positions at noon UTC of every day lying wholly inside the
/// track's span.
pub fn noon_positions(track: &StormTrack) -> Vec<(DateTime<Utc>, f64, f64)> {
    let (Some(start), Some(end)) = (track.start(), track.end()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut day = start.date_naive();
    if day.and_time(NaiveTime::MIN).and_utc() < start {
        day = day.succ_opt().expect("date in range");
    }
    loop {
        let midnight = day.and_time(NaiveTime::MIN).and_utc();
        if midnight + Duration::days(1) > end {
            break;
        }
        let noon = midnight + Duration::hours(12);
        let (lat, lon) = interpolate(track, noon);
        out.push((noon, lat, lon));
        day = day.succ_opt().expect("date in range");
    }
    out
}

fn signed_area(ring: &[(f64, f64)]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
        .sum::<f64>()
        / 2.0
}

/// FeatureCollection with an envelope Polygon and a noon-position
/// MultiPoint per storm. Exterior rings wind counter-clockwise.
pub fn emit_geojson(envelopes: &[EnvelopePolygon], tracks: &[StormTrack], season: i32) -> Value {
    let mut features = Vec::new();
    for env in envelopes {
        let mut ring = env.ring();
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        let coords: Vec<[f64; 2]> = ring.iter().map(|&(lon, lat)| [lon, lat]).collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [coords]},
            "properties": {
                "feature": "envelope",
                "id": env.basin_id,
                "name": env.name,
                "season": season,
                "k": env.k,
                "max_rate": env.max_rate,
                "degenerate": env.degenerate,
            },
        }));
        if let Some(track) = tracks.iter().find(|t| t.basin_id == env.basin_id) {
            let noon = noon_positions(track);
            let points: Vec<[f64; 2]> = noon.iter().map(|&(_, lat, lon)| [lon, lat]).collect();
            let times: Vec<String> = noon.iter().map(|(t, _, _)| t.to_rfc3339()).collect();
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "MultiPoint", "coordinates": points},
                "properties": {
                    "feature": "noon_positions",
                    "id": env.basin_id,
                    "name": env.name,
                    "season": season,
                    "k": env.k,
                    "max_rate": env.max_rate,
                    "times": times,
                },
            }));
        }
    }
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GramKind;
    use crate::hurdat2::{RecordId, Status, TrackPoint};
    use chrono::NaiveDate;

    fn utc(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn track(points: &[(&str, f64, f64)]) -> StormTrack {
        StormTrack {
            basin_id: "AL012020".into(),
            name: "TEST".into(),
            points: points
                .iter()
                .map(|&(ts, lat, lon)| TrackPoint {
                    timestamp: utc(ts),
                    record_id: RecordId::None,
                    status: Status::HU,
                    lat,
                    lon,
                    max_wind_kt: Some(70),
                    min_pressure_mb: None,
                    wind_radii: [None; 12],
                    radius_max_wind_nm: None,
                })
                .collect(),
        }
    }

    fn daily(start: (i32, u32, u32), rates: &[f64]) -> UsageRateSeries {
        UsageRateSeries::from_rates(
            "#hurricanetest",
            GramKind::Unigram,
            NaiveDate::from_ymd_opt(start.0, start.1, start.2).unwrap(),
            rates,
        )
    }

    fn three_hourly(start: &str, n: usize) -> Vec<DateTime<Utc>> {
        (0..n)
            .map(|i| utc(start) + Duration::hours(3 * i as i64))
            .collect()
    }

    #[test]
    fn constant_rate_is_preserved() {
        let s = daily((2020, 8, 1), &[2e-5; 5]);
        let sm = smooth_rates(&s, &three_hourly("2020-08-01T00:00:00Z", 30));
        assert!(sm.samples.iter().all(|&(_, r)| (r - 2e-5).abs() < 1e-20));
    }

    #[test]
    fn impulse_spreads_by_window_fraction() {
        let s = daily((2020, 8, 1), &[0.0, 1.0, 0.0]);
        let ts = three_hourly("2020-08-01T00:00:00Z", 24);
        let sm = smooth_rates(&s, &ts);
        // Noon of the impulse day: 8 of the 9 samples within 12 h share its date.
        assert!((sm.samples[12].1 - 8.0 / 9.0).abs() < 1e-12);
        // Midnight opening the impulse day: 5 of 9.
        assert!((sm.samples[8].1 - 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(sm.samples[0].1, 0.0);
    }

    #[test]
    fn no_overlap_gives_zeros() {
        let s = daily((2019, 1, 1), &[1.0; 3]);
        let sm = smooth_rates(&s, &three_hourly("2020-08-01T00:00:00Z", 8));
        assert!(sm.samples.iter().all(|&(_, r)| r == 0.0));
    }

    #[test]
    fn eastward_track_gives_rectangle() {
        let t = track(&[
            ("2020-08-01T00:00:00Z", 0.0, -60.0),
            ("2020-08-01T06:00:00Z", 0.0, -59.0),
            ("2020-08-01T12:00:00Z", 0.0, -58.0),
        ]);
        let sm = SmoothedSeries {
            samples: t.timestamps().into_iter().map(|ts| (ts, 1e-4)).collect(),
        };
        let env = build_envelope(&t, &sm, 1e4).unwrap();
        for (l, r) in env.left.iter().zip(&env.right) {
            assert!((l.0 - 1.0).abs() < 1e-12 && (r.0 + 1.0).abs() < 1e-12);
        }
        assert_eq!(env.ring().len(), 7);
        assert!(!env.degenerate);

        let zero = SmoothedSeries {
            samples: t.timestamps().into_iter().map(|ts| (ts, 0.0)).collect(),
        };
        assert!(build_envelope(&t, &zero, 1.0).unwrap().degenerate);
        assert!(matches!(
            build_envelope(&t, &zero, 0.0),
            Err(MapError::InvalidScale(_))
        ));
    }

    #[test]
    fn noon_markers_cover_whole_days() {
        let t = track(&[
            ("2020-08-01T06:00:00Z", 20.0, -60.0),
            ("2020-08-04T00:00:00Z", 25.0, -70.0),
        ]);
        let noons = noon_positions(&t);
        // Aug 2 and Aug 3 lie wholly inside; Aug 1 starts too late.
        assert_eq!(noons.len(), 2);
        assert_eq!(noons[0].0, utc("2020-08-02T12:00:00Z"));
        let t2 = track(&[
            ("2020-08-01T00:00:00Z", 20.0, -60.0),
            ("2020-08-02T00:00:00Z", 21.0, -61.0),
        ]);
        assert_eq!(noon_positions(&t2).len(), 1);
    }

    #[test]
    fn default_scale_maps_max_to_half_width() {
        let a = SmoothedSeries {
            samples: vec![(utc("2020-08-01T00:00:00Z"), 2e-4)],
        };
        assert!((default_scale(&[a], 8.0) - 4e4).abs() < 1e-6);
        assert_eq!(default_scale(&[], 8.0), 1.0);
    }
}
