//! NOAA HURDAT2 best-track archives.
//!
//! A storm block is a header line `AL092017,             HARVEY,     61,`
//! followed by exactly that many comma-separated data lines. Data lines carry
//! 20 fields (older vintages) or 21 (with radius of maximum wind).

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Hurdat2Error {
    #[error("{storm}: header at line {line} declares {declared} rows, found {found}")]
    RowCountMismatch {
        storm: String,
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("{storm}: line {line}: bad {field} {value:?}")]
    Field {
        storm: String,
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("{storm}: line {line}: timestamp does not increase")]
    NonMonotone { storm: String, line: usize },
    #[error("line {line}: data row outside any storm block")]
    Orphan { line: usize },
    #[error("negative wind speed {0} kt")]
    NegativeWind(i32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("{storm}: time {t} outside track span [{first}, {last}]")]
    OutOfSpan {
        storm: String,
        t: DateTime<Utc>,
        first: DateTime<Utc>,
        last: DateTime<Utc>,
    },
    #[error("{0}: track has no segment with nonzero displacement")]
    Stationary(String),
    #[error("{0}: track has no points")]
    Empty(String),
}

/// Record identifier column (blank for routine synoptic fixes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordId {
    None,
    /// Landfall
    L,
    /// Maximum sustained wind
    W,
    /// Minimum central pressure
    P,
    /// Intensity peak
    I,
    /// Closest approach
    C,
    /// Status change
    S,
    /// Additional track detail
    T,
    /// Genesis
    G,
    /// Rapid change
    R,
}

impl RecordId {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "" => RecordId::None,
            "L" => RecordId::L,
            "W" => RecordId::W,
            "P" => RecordId::P,
            "I" => RecordId::I,
            "C" => RecordId::C,
            "S" => RecordId::S,
            "T" => RecordId::T,
            "G" => RecordId::G,
            "R" => RecordId::R,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            RecordId::None => "",
            RecordId::L => "L",
            RecordId::W => "W",
            RecordId::P => "P",
            RecordId::I => "I",
            RecordId::C => "C",
            RecordId::S => "S",
            RecordId::T => "T",
            RecordId::G => "G",
            RecordId::R => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    TD,
    TS,
    HU,
    EX,
    SD,
    SS,
    LO,
    WV,
    DB,
}

impl Status {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "TD" => Status::TD,
            "TS" => Status::TS,
            "HU" => Status::HU,
            "EX" => Status::EX,
            "SD" => Status::SD,
            "SS" => Status::SS,
            "LO" => Status::LO,
            "WV" => Status::WV,
            "DB" => Status::DB,
            _ => return None,
        })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub timestamp: DateTime<Utc>,
    pub record_id: RecordId,
    pub status: Status,
    /// Signed degrees, north positive.
    pub lat: f64,
    /// Signed degrees, east positive.
    pub lon: f64,
    pub max_wind_kt: Option<i32>,
    pub min_pressure_mb: Option<i32>,
    /// 34/50/64 kt radii, each as NE/SE/SW/NW, in nautical miles.
    pub wind_radii: [Option<i32>; 12],
    pub radius_max_wind_nm: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormTrack {
    pub basin_id: String,
    pub name: String,
    pub points: Vec<TrackPoint>,
}

impl StormTrack {
    /// Season year from the basin id (`AL092017` → 2017), falling back to the
    /// first fix.
    pub fn season(&self) -> Option<i32> {
        let id = self.basin_id.trim();
        id.get(id.len().saturating_sub(4)..)
            .and_then(|y| y.parse().ok())
            .or_else(|| {
                self.points
                    .first()
                    .map(|p| p.timestamp.format("%Y").to_string().parse().unwrap())
            })
    }

    pub fn start(&self) -> Option<DateTime<Utc>> {
        self.points.first().map(|p| p.timestamp)
    }

    pub fn end(&self) -> Option<DateTime<Utc>> {
        self.points.last().map(|p| p.timestamp)
    }

    pub fn max_wind_kt(&self) -> Option<i32> {
        self.points.iter().filter_map(|p| p.max_wind_kt).max()
    }

    pub fn max_category(&self, scale: &SaffirSimpson) -> Option<u8> {
        self.max_wind_kt()
            .and_then(|w| scale.category(w).ok().flatten())
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.points.iter().map(|p| p.timestamp).collect()
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.last() == Some(&"") {
        fields.pop();
    }
    fields
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 3
        && fields[0].len() == 8
        && fields[0][..2].chars().all(|c| c.is_ascii_alphabetic())
        && fields[0][2..].chars().all(|c| c.is_ascii_digit())
}

struct Block {
    basin_id: String,
    name: String,
    declared: usize,
    header_line: usize,
    points: Vec<TrackPoint>,
}

impl Block {
    fn finish(self) -> Result<StormTrack, Hurdat2Error> {
        if self.points.len() != self.declared {
            return Err(Hurdat2Error::RowCountMismatch {
                storm: self.basin_id,
                line: self.header_line,
                declared: self.declared,
                found: self.points.len(),
            });
        }
        warn_on_cadence(&self.basin_id, &self.points);
        Ok(StormTrack {
            basin_id: self.basin_id,
            name: self.name,
            points: self.points,
        })
    }
}

fn warn_on_cadence(storm: &str, points: &[TrackPoint]) {
    let odd = points
        .windows(2)
        .filter(|w| {
            let mins = (w[1].timestamp - w[0].timestamp).num_minutes();
            mins != 180 && mins != 360
        })
        .count();
    if odd > 0 {
        log::warn!("{storm}: {odd} fix interval(s) are neither 3 h nor 6 h");
    }
}

fn parse_coord(raw: &str, positive: char, negative: char, limit: f64) -> Option<f64> {
    let hemi = raw.chars().last()?;
    let value: f64 = raw[..raw.len() - hemi.len_utf8()].trim().parse().ok()?;
    if !value.is_finite() || value < 0.0 || value > limit {
        return None;
    }
    if hemi == positive {
        Some(value)
    } else if hemi == negative {
        Some(-value)
    } else {
        None
    }
}

fn parse_point(fields: &[&str], storm: &str, line: usize) -> Result<TrackPoint, Hurdat2Error> {
    let bad = |field: &'static str, value: &str| Hurdat2Error::Field {
        storm: storm.to_string(),
        line,
        field,
        value: value.to_string(),
    };
    if fields.len() != 20 && fields.len() != 21 {
        return Err(bad("field count", &fields.len().to_string()));
    }
    let date =
        NaiveDate::parse_from_str(fields[0], "%Y%m%d").map_err(|_| bad("date", fields[0]))?;
    let time = (fields[1].len() == 4)
        .then(|| NaiveTime::parse_from_str(fields[1], "%H%M").ok())
        .flatten()
        .ok_or_else(|| bad("time", fields[1]))?;
    let timestamp = Utc.from_utc_datetime(&date.and_time(time));
    let record_id =
        RecordId::parse(fields[2]).ok_or_else(|| bad("record identifier", fields[2]))?;
    let status = Status::parse(fields[3]).ok_or_else(|| bad("status", fields[3]))?;
    let lat = parse_coord(fields[4], 'N', 'S', 90.0).ok_or_else(|| bad("latitude", fields[4]))?;
    let lon = parse_coord(fields[5], 'E', 'W', 180.0).ok_or_else(|| bad("longitude", fields[5]))?;

    let int = |field: &'static str, raw: &str| raw.parse::<i32>().map_err(|_| bad(field, raw));
    let max_wind_kt = match int("max wind", fields[6])? {
        -99 => None,
        w if w < 0 => return Err(bad("max wind", fields[6])),
        w => Some(w),
    };
    let min_pressure_mb = match int("min pressure", fields[7])? {
        -999 => None,
        p => Some(p),
    };
    let mut wind_radii = [None; 12];
    for (slot, raw) in wind_radii.iter_mut().zip(&fields[8..20]) {
        *slot = match int("wind radius", raw)? {
            -999 => None,
            r if r < 0 => return Err(bad("wind radius", raw)),
            r => Some(r),
        };
    }
    let radius_max_wind_nm = match fields.get(20) {
        None => None,
        Some(raw) => match int("radius of max wind", raw)? {
            -999 => None,
            r if r < 0 => return Err(bad("radius of max wind", raw)),
            r => Some(r),
        },
    };
    Ok(TrackPoint {
        timestamp,
        record_id,
        status,
        lat,
        lon,
        max_wind_kt,
        min_pressure_mb,
        wind_radii,
        radius_max_wind_nm,
    })
}

/// Parses a HURDAT2 archive into storm tracks in file order.
pub fn parse_hurdat2(text: &str) -> Result<Vec<StormTrack>, Hurdat2Error> {
    let mut tracks = Vec::new();
    let mut current: Option<Block> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(raw_line);
        if is_header(&fields) {
            if let Some(block) = current.take() {
                tracks.push(block.finish()?);
            }
            let declared = fields[2]
                .parse::<usize>()
                .map_err(|_| Hurdat2Error::Field {
                    storm: fields[0].to_string(),
                    line,
                    field: "row count",
                    value: fields[2].to_string(),
                })?;
            current = Some(Block {
                basin_id: fields[0].to_string(),
                name: fields[1].to_string(),
                declared,
                header_line: line,
                points: Vec::with_capacity(declared),
            });
            continue;
        }
        let Some(block) = current.as_mut() else {
            return Err(Hurdat2Error::Orphan { line });
        };
        if block.points.len() == block.declared {
            return Err(Hurdat2Error::RowCountMismatch {
                storm: block.basin_id.clone(),
                line: block.header_line,
                declared: block.declared,
                found: block.declared + 1,
            });
        }
        let point = parse_point(&fields, &block.basin_id, line)?;
        if let Some(prev) = block.points.last() {
            if point.timestamp <= prev.timestamp {
                return Err(Hurdat2Error::NonMonotone {
                    storm: block.basin_id.clone(),
                    line,
                });
            }
        }
        block.points.push(point);
    }
    if let Some(block) = current {
        tracks.push(block.finish()?);
    }
    Ok(tracks)
}

fn fmt_coord(value: f64, positive: char, negative: char) -> String {
    let hemi = if value >= 0.0 { positive } else { negative };
    format!("{:.1}{}", value.abs(), hemi)
}

/// Writes tracks back in the NOAA column layout.
pub fn serialize_hurdat2(tracks: &[StormTrack]) -> String {
    let mut out = String::new();
    for track in tracks {
        out.push_str(&format!(
            "{},{:>19},{:>7},\n",
            track.basin_id,
            track.name,
            track.points.len()
        ));
        for p in &track.points {
            out.push_str(&format!(
                "{}, {}, {:>1}, {}, {:>5}, {:>6}, {:>3}, {:>4},",
                p.timestamp.format("%Y%m%d"),
                p.timestamp.format("%H%M"),
                p.record_id.as_str(),
                p.status,
                fmt_coord(p.lat, 'N', 'S'),
                fmt_coord(p.lon, 'E', 'W'),
                p.max_wind_kt.unwrap_or(-99),
                p.min_pressure_mb.unwrap_or(-999),
            ));
            for r in &p.wind_radii {
                out.push_str(&format!(" {:>4},", r.unwrap_or(-999)));
            }
            if let Some(rmw) = p.radius_max_wind_nm {
                out.push_str(&format!(" {:>4},", rmw));
            }
            out.push('\n');
        }
    }
    out
}

/// Lower wind bounds (kt) of Saffir-Simpson categories 1 through 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaffirSimpson {
    pub thresholds_kt: [i32; 5],
}

impl Default for SaffirSimpson {
    fn default() -> Self {
        Self {
            thresholds_kt: [64, 83, 96, 113, 137],
        }
    }
}

impl SaffirSimpson {
    /// Category 1..=5, or `None` below hurricane strength.
    pub fn category(&self, max_wind_kt: i32) -> Result<Option<u8>, Hurdat2Error> {
        if max_wind_kt < 0 {
            return Err(Hurdat2Error::NegativeWind(max_wind_kt));
        }
        Ok(self
            .thresholds_kt
            .iter()
            .rposition(|&t| max_wind_kt >= t)
            .map(|i| i as u8 + 1))
    }
}

pub fn saffir_simpson_category(max_wind_kt: i32) -> Result<Option<u8>, Hurdat2Error> {
    SaffirSimpson::default().category(max_wind_kt)
}

/// Equirectangular projection scaled by the cosine of a reference latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub lat_ref_deg: f64,
    cos_ref: f64,
}

impl Projection {
    pub fn new(lat_ref_deg: f64) -> Self {
        Self {
            lat_ref_deg,
            cos_ref: lat_ref_deg.to_radians().cos(),
        }
    }

    /// Projection centred on the track's mean latitude.
    pub fn for_track(track: &StormTrack) -> Self {
        let n = track.points.len().max(1) as f64;
        Self::new(track.points.iter().map(|p| p.lat).sum::<f64>() / n)
    }

    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        (lon * self.cos_ref, lat)
    }

    /// Returns (lat, lon).
    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        (y, x / self.cos_ref)
    }
}

/// Storm state at an instant, in the track's projected plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub lat: f64,
    pub lon: f64,
    /// Projected degrees per hour.
    pub velocity: (f64, f64),
    /// Left-hand unit perpendicular of the velocity.
    pub normal: (f64, f64),
}

fn segment_velocity(track: &StormTrack, proj: &Projection, seg: usize) -> Option<(f64, f64)> {
    let a = &track.points[seg];
    let b = &track.points[seg + 1];
    let (xa, ya) = proj.project(a.lat, a.lon);
    let (xb, yb) = proj.project(b.lat, b.lon);
    let hours = (b.timestamp - a.timestamp).num_milliseconds() as f64 / 3.6e6;
    let v = ((xb - xa) / hours, (yb - ya) / hours);
    (v.0 != 0.0 || v.1 != 0.0).then_some(v)
}

/// Velocity of segment `seg`, or of the nearest segment that moves
/// (earlier segment on equal distance).
fn nearest_velocity(track: &StormTrack, proj: &Projection, seg: usize) -> Option<(f64, f64)> {
    let n_seg = track.points.len().checked_sub(1)?;
    (0..n_seg).find_map(|dist| {
        let earlier = seg
            .checked_sub(dist)
            .and_then(|s| segment_velocity(track, proj, s));
        earlier.or_else(|| {
            (seg + dist < n_seg)
                .then(|| segment_velocity(track, proj, seg + dist))
                .flatten()
        })
    })
}

pub fn left_normal(v: (f64, f64)) -> (f64, f64) {
    let norm = v.0.hypot(v.1);
    (-v.1 / norm, v.0 / norm)
}

/// Interpolated position, segment velocity and left normal at `t`.
pub fn track_kinematics(
    track: &StormTrack,
    t: DateTime<Utc>,
) -> Result<Kinematics, KinematicsError> {
    track_kinematics_with(track, &Projection::for_track(track), t)
}

pub fn track_kinematics_with(
    track: &StormTrack,
    proj: &Projection,
    t: DateTime<Utc>,
) -> Result<Kinematics, KinematicsError> {
    let (Some(first), Some(last)) = (track.start(), track.end()) else {
        return Err(KinematicsError::Empty(track.basin_id.clone()));
    };
    if t < first || t > last {
        return Err(KinematicsError::OutOfSpan {
            storm: track.basin_id.clone(),
            t,
            first,
            last,
        });
    }
    let pts = &track.points;
    if pts.len() < 2 {
        return Err(KinematicsError::Stationary(track.basin_id.clone()));
    }
    // Segment whose start is the last fix at or before t.
    let seg = pts
        .partition_point(|p| p.timestamp <= t)
        .saturating_sub(1)
        .min(pts.len() - 2);
    let a = &pts[seg];
    let b = &pts[seg + 1];
    let (lat, lon) = if t == a.timestamp {
        (a.lat, a.lon)
    } else if t == b.timestamp {
        (b.lat, b.lon)
    } else {
        let frac = (t - a.timestamp).num_milliseconds() as f64
            / (b.timestamp - a.timestamp).num_milliseconds() as f64;
        let (xa, ya) = proj.project(a.lat, a.lon);
        let (xb, yb) = proj.project(b.lat, b.lon);
        proj.unproject(xa + frac * (xb - xa), ya + frac * (yb - ya))
    };
    let velocity = nearest_velocity(track, proj, seg)
        .ok_or_else(|| KinematicsError::Stationary(track.basin_id.clone()))?;
    Ok(Kinematics {
        lat,
        lon,
        velocity,
        normal: left_normal(velocity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARVEY: &str = "AL092017,             HARVEY,      1,\n\
20170826, 0000,  , HU, 28.0N,  96.5W, 115,  937,  130,  110,   60,  110,   60,   50,   40,   40,   40,   30,   20,   25,\n";

    fn utc(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn pt(ts: &str, lat: f64, lon: f64) -> TrackPoint {
        TrackPoint {
            timestamp: utc(ts),
            record_id: RecordId::None,
            status: Status::HU,
            lat,
            lon,
            max_wind_kt: Some(80),
            min_pressure_mb: None,
            wind_radii: [None; 12],
            radius_max_wind_nm: None,
        }
    }

    #[test]
    fn parses_harvey_row() {
        let tracks = parse_hurdat2(HARVEY).unwrap();
        assert_eq!(tracks.len(), 1);
        let t = &tracks[0];
        assert_eq!(
            (t.basin_id.as_str(), t.name.as_str()),
            ("AL092017", "HARVEY")
        );
        let p = &t.points[0];
        assert_eq!((p.lat, p.lon), (28.0, -96.5));
        assert_eq!(p.max_wind_kt, Some(115));
        assert_eq!(p.min_pressure_mb, Some(937));
        assert_eq!(p.status, Status::HU);
        assert_eq!(p.record_id, RecordId::None);
        assert_eq!(p.timestamp, utc("2017-08-26T00:00:00Z"));
        assert_eq!(t.season(), Some(2017));
    }

    #[test]
    fn sentinels_become_absent() {
        let text = HARVEY.replace(" 937,", "-999,").replace(" 115,", " -99,");
        let p = &parse_hurdat2(&text).unwrap()[0].points[0];
        assert_eq!(p.min_pressure_mb, None);
        assert_eq!(p.max_wind_kt, None);
    }

    #[test]
    fn row_count_mismatch_names_storm() {
        let text = HARVEY.replace("      1,", "      2,");
        let err = parse_hurdat2(&text).unwrap_err();
        assert!(matches!(
            err,
            Hurdat2Error::RowCountMismatch {
                declared: 2,
                found: 1,
                ..
            }
        ));
        assert!(err.to_string().contains("AL092017"));
    }

    #[test]
    fn round_trip_and_empty() {
        let tracks = parse_hurdat2(HARVEY).unwrap();
        assert_eq!(serialize_hurdat2(&tracks), HARVEY);
        assert_eq!(serialize_hurdat2(&[]), "");
        assert!(parse_hurdat2("").unwrap().is_empty());
    }

    #[test]
    fn southern_and_eastern_hemispheres() {
        let text = HARVEY.replace("28.0N,  96.5W", "12.5S,  10.0E");
        let p = &parse_hurdat2(&text).unwrap()[0].points[0];
        assert_eq!((p.lat, p.lon), (-12.5, 10.0));
    }

    #[test]
    fn categories() {
        assert_eq!(saffir_simpson_category(100).unwrap(), Some(3));
        assert_eq!(saffir_simpson_category(63).unwrap(), None);
        assert_eq!(saffir_simpson_category(64).unwrap(), Some(1));
        assert_eq!(saffir_simpson_category(82).unwrap(), Some(1));
        assert_eq!(saffir_simpson_category(83).unwrap(), Some(2));
        assert_eq!(saffir_simpson_category(136).unwrap(), Some(4));
        assert_eq!(saffir_simpson_category(137).unwrap(), Some(5));
        assert!(saffir_simpson_category(-1).is_err());
        let custom = SaffirSimpson {
            thresholds_kt: [60, 80, 90, 110, 130],
        };
        assert_eq!(custom.category(130).unwrap(), Some(5));
    }

    #[test]
    fn straight_line_kinematics() {
        let track = StormTrack {
            basin_id: "AL012020".into(),
            name: "TEST".into(),
            points: vec![
                pt("2020-08-01T00:00:00Z", 10.0, -50.0),
                pt("2020-08-01T06:00:00Z", 10.0, -49.0),
            ],
        };
        let k = track_kinematics(&track, utc("2020-08-01T03:00:00Z")).unwrap();
        assert!((k.lat - 10.0).abs() < 1e-12);
        assert!((k.lon + 49.5).abs() < 1e-12);
        assert!(k.velocity.0 > 0.0 && k.velocity.1 == 0.0);
        assert_eq!(k.normal, (-0.0, 1.0));

        let k0 = track_kinematics(&track, utc("2020-08-01T06:00:00Z")).unwrap();
        assert_eq!((k0.lat, k0.lon), (10.0, -49.0));
        assert!(matches!(
            track_kinematics(&track, utc("2020-07-31T23:00:00Z")),
            Err(KinematicsError::OutOfSpan { .. })
        ));
    }

    #[test]
    fn stationary_segment_borrows_velocity() {
        let track = StormTrack {
            basin_id: "AL022020".into(),
            name: "STALL".into(),
            points: vec![
                pt("2020-08-01T00:00:00Z", 20.0, -60.0),
                pt("2020-08-01T06:00:00Z", 20.0, -60.0),
                pt("2020-08-01T12:00:00Z", 21.0, -60.0),
            ],
        };
        let k = track_kinematics(&track, utc("2020-08-01T03:00:00Z")).unwrap();
        assert_eq!((k.lat, k.lon), (20.0, -60.0));
        assert!(k.velocity.1 > 0.0);

        let frozen = StormTrack {
            points: vec![
                pt("2020-08-01T00:00:00Z", 20.0, -60.0),
                pt("2020-08-01T06:00:00Z", 20.0, -60.0),
            ],
            ..track
        };
        assert!(matches!(
            track_kinematics(&frozen, utc("2020-08-01T03:00:00Z")),
            Err(KinematicsError::Stationary(_))
        ));
    }
}
