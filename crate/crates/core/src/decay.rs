//! Post-peak attention decay fits.
//!
//! Three models are fitted to `log10 f(t)` with `t` in days since the peak:
//!
//! * bi-exponential `S(t) = N/(p+r-q) [(p-q) e^{-(p+r)t} + r e^{-qt}]`
//! * exponential `S(t) = N e^{-pt}`
//! * power law `S(t) = A (t+1)^{-alpha}`
//!
//! In log space the amplitude (`N` or `A`) is an additive offset, so it is
//! profiled out in closed form and only the rate parameters are searched.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, LOG10_E};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::UsageRateSeries;
use crate::metrics::peak_usage;
use crate::optim::{nelder_mead_restarted, NelderMeadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("series has no positive usage to decay from")]
    NoPeak,
    #[error("{model} fit needs at least {needed} points, got {got}")]
    InsufficientPoints {
        model: DecayModelKind,
        needed: usize,
        got: usize,
    },
    #[error("segment contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModelKind {
    Biexponential,
    Exponential,
    PowerLaw,
}

impl DecayModelKind {
    pub const ALL: [DecayModelKind; 3] = [
        DecayModelKind::Biexponential,
        DecayModelKind::Exponential,
        DecayModelKind::PowerLaw,
    ];

    pub fn min_points(self) -> usize {
        match self {
            DecayModelKind::Biexponential => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for DecayModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayModelKind::Biexponential => "biexponential",
            DecayModelKind::Exponential => "exponential",
            DecayModelKind::PowerLaw => "powerlaw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DecayParams {
    Biexponential { n: f64, p: f64, q: f64, r: f64 },
    Exponential { n: f64, p: f64 },
    PowerLaw { a: f64, alpha: f64 },
}

/// `(1 - e^{-s t}) / s`, continuous through `s = 0`.
fn transfer_kernel(s: f64, t: f64) -> f64 {
    let st = s * t;
    if st.abs() < 1e-8 {
        t * (1.0 - 0.5 * st)
    } else {
        -(-st).exp_m1() / s
    }
}

/// Bi-exponential shape normalized to 1 at `t = 0`, rewritten as
/// `e^{-(p+r)t} + r e^{-qt} (1 - e^{-(p+r-q)t}) / (p+r-q)` so that
/// `p + r = q` needs no special case.
pub fn biexponential_shape(t: f64, p: f64, q: f64, r: f64) -> f64 {
    (-(p + r) * t).exp() + r * (-q * t).exp() * transfer_kernel(p + r - q, t)
}

impl DecayParams {
    pub fn kind(&self) -> DecayModelKind {
        match self {
            DecayParams::Biexponential { .. } => DecayModelKind::Biexponential,
            DecayParams::Exponential { .. } => DecayModelKind::Exponential,
            DecayParams::PowerLaw { .. } => DecayModelKind::PowerLaw,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DecayParams::Biexponential { n, p, q, r } => n * biexponential_shape(t, p, q, r),
            DecayParams::Exponential { n, p } => n * (-p * t).exp(),
            DecayParams::PowerLaw { a, alpha } => a * (t + 1.0).powf(-alpha),
        }
    }

    pub fn log10_eval(&self, t: f64) -> f64 {
        match *self {
            DecayParams::Biexponential { n, p, q, r } => {
                n.log10() + biexponential_shape(t, p, q, r).log10()
            }
            DecayParams::Exponential { n, p } => n.log10() - p * t * LOG10_E,
            DecayParams::PowerLaw { a, alpha } => a.log10() - alpha * (t + 1.0).log10(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfLives {
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

/// `tau1 = ln2/(p+r)` and `tau2 = ln2/q` for the bi-exponential,
/// `ln2/p` for the exponential, nothing for the power law.
pub fn half_lives(params: &DecayParams) -> HalfLives {
    match *params {
        DecayParams::Biexponential { p, q, r, .. } => HalfLives {
            tau1: Some(LN_2 / (p + r)),
            tau2: Some(LN_2 / q),
        },
        DecayParams::Exponential { p, .. } => HalfLives {
            tau1: Some(LN_2 / p),
            tau2: None,
        },
        DecayParams::PowerLaw { .. } => HalfLives {
            tau1: None,
            tau2: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub params: DecayParams,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    /// Mean squared error of `log10 S(t)` against the segment.
    pub mse: f64,
    pub n_points: usize,
}

impl DecayFit {
    pub fn kind(&self) -> DecayModelKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub p_bounds: (f64, f64),
    pub q_bounds: (f64, f64),
    pub r_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    /// Log-spaced starts along the diagonal of the rate box.
    pub starts: usize,
    /// Best points of a coarse log grid used as additional starts.
    pub grid_starts: usize,
    /// Points per axis of that coarse grid.
    pub grid_points: usize,
    /// Uniform random starts in log space, drawn from `seed`.
    pub random_starts: usize,
    pub seed: u64,
    pub min_consecutive_days: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            p_bounds: (1e-3, 10.0),
            q_bounds: (1e-3, 1e-1),
            r_bounds: (1e-3, 10.0),
            alpha_bounds: (1e-6, 10.0),
            starts: 5,
            grid_starts: 3,
            grid_points: 12,
            random_starts: 2,
            seed: 0,
            min_consecutive_days: 6,
        }
    }
}

/// `(t, log10 f)` from the peak day onward, skipping zero and missing days.
pub fn decay_segment(series: &UsageRateSeries) -> Result<Vec<(f64, f64)>, DecayError> {
    let (peak_day, peak_rate) = peak_usage(series);
    if peak_rate <= 0.0 {
        return Err(DecayError::NoPeak);
    }
    Ok((peak_day..series.len())
        .filter_map(|d| {
            series.rates[d]
                .filter(|&f| f > 0.0)
                .map(|f| ((d - peak_day) as f64, f.log10()))
        })
        .collect())
}

/// Whether the series has a run of at least `min_consecutive_days` positive
/// days.
pub fn eligible_for_fit(series: &UsageRateSeries, min_consecutive_days: usize) -> bool {
    let mut run = 0;
    for d in 0..series.len() {
        if series.rate(d) > 0.0 {
            run += 1;
            if run >= min_consecutive_days.max(1) {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

fn mse_of(segment: &[(f64, f64)], params: &DecayParams) -> f64 {
    segment
        .iter()
        .map(|&(t, y)| (params.log10_eval(t) - y).powi(2))
        .sum::<f64>()
        / segment.len() as f64
}

/// Best log10 offset and resulting MSE for a fixed log-shape.
fn profile_offset(segment: &[(f64, f64)], shape: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = segment.len() as f64;
    let mut resid = Vec::with_capacity(segment.len());
    for &(t, y) in segment {
        resid.push(y - shape(t));
    }
    let offset = resid.iter().sum::<f64>() / n;
    let mse = resid.iter().map(|r| (r - offset).powi(2)).sum::<f64>() / n;
    (offset, mse)
}

/// Profiled bi-exponential MSE at rates `(p, q, r)`.
pub fn biexponential_profile_mse(segment: &[(f64, f64)], p: f64, q: f64, r: f64) -> f64 {
    let (_, mse) = profile_offset(segment, |t| biexponential_shape(t, p, q, r).log10());
    if mse.is_finite() {
        mse
    } else {
        f64::INFINITY
    }
}

/// Least-squares line `y = b0 + b1 x`, with `b1` clamped to `[lo, hi]` and
/// the intercept refit for the clamped slope.
fn clamped_line(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let slope = slope.clamp(lo, hi);
    (my - slope * mx, slope)
}

fn fit_biexponential(segment: &[(f64, f64)], cfg: &DecayConfig) -> DecayParams {
    let bounds = [cfg.p_bounds, cfg.q_bounds, cfg.r_bounds];
    let lower: Vec<f64> = bounds.iter().map(|b| b.0.ln()).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1.ln()).collect();
    let rates = |z: &[f64]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            // Exact bound values when the search sits on a face of the box.
            out[i] = if z[i] <= lower[i] {
                bounds[i].0
            } else if z[i] >= upper[i] {
                bounds[i].1
            } else {
                z[i].exp()
            };
        }
        out
    };
    let objective = |z: &[f64]| {
        let [p, q, r] = rates(z);
        biexponential_profile_mse(segment, p, q, r)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for k in 0..cfg.starts {
        let frac = (k as f64 + 0.5) / cfg.starts as f64;
        starts.push(
            (0..3)
                .map(|i| lower[i] + frac * (upper[i] - lower[i]))
                .collect(),
        );
    }
    if cfg.grid_points >= 2 && cfg.grid_starts > 0 {
        let g = cfg.grid_points;
        let axis =
            |i: usize, k: usize| lower[i] + (upper[i] - lower[i]) * k as f64 / (g - 1) as f64;
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(g * g * g);
        for a in 0..g {
            for b in 0..g {
                for c in 0..g {
                    let z = vec![axis(0, a), axis(1, b), axis(2, c)];
                    scored.push((objective(&z), z));
                }
            }
        }
        scored.sort_by(|x, y| x.0.total_cmp(&y.0));
        starts.extend(scored.into_iter().take(cfg.grid_starts).map(|(_, z)| z));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        starts.push((0..3).map(|i| rng.gen_range(lower[i]..=upper[i])).collect());
    }

    let opts = NelderMeadOptions::default();
    let best = starts
        .iter()
        .map(|s| nelder_mead_restarted(objective, s, &lower, &upper, &opts, 8))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let [p, q, r] = rates(&best.x);
    let (offset, _) = profile_offset(segment, |t| biexponential_shape(t, p, q, r).log10());
    DecayParams::Biexponential {
        n: 10f64.powf(offset),
        p,
        q,
        r,
    }
}

fn fit_exponential(segment: &[(f64, f64)], cfg: &DecayConfig) -> DecayParams {
    let (ts, ys): (Vec<f64>, Vec<f64>) = segment.iter().copied().unzip();
    // log10 S = log10 N - (p log10 e) t
    let (b0, b1) = clamped_line(
        &ts,
        &ys,
        -cfg.p_bounds.1 * LOG10_E,
        -cfg.p_bounds.0 * LOG10_E,
    );
    let p = (-b1 / LOG10_E).clamp(cfg.p_bounds.0, cfg.p_bounds.1);
    DecayParams::Exponential {
        n: 10f64.powf(b0),
        p,
    }
}

fn fit_power_law(segment: &[(f64, f64)], cfg: &DecayConfig) -> DecayParams {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        segment.iter().map(|&(t, y)| ((t + 1.0).log10(), y)).unzip();
    let (b0, b1) = clamped_line(&xs, &ys, -cfg.alpha_bounds.1, -cfg.alpha_bounds.0);
    DecayParams::PowerLaw {
        a: 10f64.powf(b0),
        alpha: -b1,
    }
}

/// Fits one decay model to a `(t, log10 f)` segment under the configured
/// box constraints.
pub fn fit_decay(
    segment: &[(f64, f64)],
    kind: DecayModelKind,
    cfg: &DecayConfig,
) -> Result<DecayFit, DecayError> {
    if segment.len() < kind.min_points() {
        return Err(DecayError::InsufficientPoints {
            model: kind,
            needed: kind.min_points(),
            got: segment.len(),
        });
    }
    if segment
        .iter()
        .any(|(t, y)| !t.is_finite() || !y.is_finite())
    {
        return Err(DecayError::NonFinite);
    }
    let params = match kind {
        DecayModelKind::Biexponential => fit_biexponential(segment, cfg),
        DecayModelKind::Exponential => fit_exponential(segment, cfg),
        DecayModelKind::PowerLaw => fit_power_law(segment, cfg),
    };
    let hl = half_lives(&params);
    Ok(DecayFit {
        params,
        tau1: hl.tau1,
        tau2: hl.tau2,
        mse: mse_of(segment, &params),
        n_points: segment.len(),
    })
}

/// Models ordered by ascending MSE; ties keep model order.
pub fn compare_decay_models(fits: &[DecayFit]) -> Vec<(DecayModelKind, f64)> {
    let mut ranking: Vec<(DecayModelKind, f64)> = fits.iter().map(|f| (f.kind(), f.mse)).collect();
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranking
}

/// Per-model MSEs across storms.
pub fn mse_distribution(per_storm: &[Vec<DecayFit>]) -> BTreeMap<DecayModelKind, Vec<f64>> {
    let mut out: BTreeMap<DecayModelKind, Vec<f64>> = BTreeMap::new();
    for fits in per_storm {
        for f in fits {
            out.entry(f.kind()).or_default().push(f.mse);
        }
    }
    out
}

/// One line of the fit report.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReportRow {
    pub storm: String,
    pub season: i32,
    pub pattern_kind: String,
    pub fit: DecayFit,
}

pub fn fit_report_csv(rows: &[FitReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "storm",
        "season",
        "pattern_kind",
        "model",
        "N",
        "p",
        "q",
        "r",
        "tau1",
        "tau2",
        "mse",
        "n_points",
    ])
    .expect("in-memory write");
    let s = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        let (n, p, q, r) = match row.fit.params {
            DecayParams::Biexponential { n, p, q, r } => (Some(n), Some(p), Some(q), Some(r)),
            DecayParams::Exponential { n, p } => (Some(n), Some(p), None, None),
            // The power-law exponent goes in the p column, the amplitude in N.
            DecayParams::PowerLaw { a, alpha } => (Some(a), Some(alpha), None, None),
        };
        w.write_record([
            row.storm.clone(),
            row.season.to_string(),
            row.pattern_kind.clone(),
            row.fit.kind().to_string(),
            s(n),
            s(p),
            s(q),
            s(r),
            s(row.fit.tau1),
            s(row.fit.tau2),
            row.fit.mse.to_string(),
            row.fit.n_points.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GramKind;
    use chrono::NaiveDate;

    fn series(rates: &[f64]) -> UsageRateSeries {
        UsageRateSeries::from_rates(
            "x",
            GramKind::Bigram,
            NaiveDate::from_ymd_opt(2017, 9, 1).unwrap(),
            rates,
        )
    }

    #[test]
    fn half_life_identities() {
        let hl = half_lives(&DecayParams::Biexponential {
            n: 1.0,
            p: 0.6,
            q: 1e-3,
            r: 0.0931,
        });
        assert!((hl.tau1.unwrap() - 1.0).abs() < 1e-4);
        assert!((hl.tau2.unwrap() - 693.1).abs() < 0.05);
        let hl = half_lives(&DecayParams::Biexponential {
            n: 1.0,
            p: 1.0,
            q: 0.0231,
            r: 0.0,
        });
        assert!((hl.tau2.unwrap() - 30.0).abs() < 0.01);
        assert_eq!(
            half_lives(&DecayParams::PowerLaw { a: 1.0, alpha: 1.0 }),
            HalfLives {
                tau1: None,
                tau2: None
            }
        );
        assert_eq!(
            half_lives(&DecayParams::Exponential { n: 1.0, p: LN_2 }).tau1,
            Some(1.0)
        );
    }

    #[test]
    fn shape_is_continuous_through_degenerate_rates() {
        // p + r = q exactly.
        let at = biexponential_shape(5.0, 0.03, 0.05, 0.02);
        let near = biexponential_shape(5.0, 0.03 + 1e-9, 0.05, 0.02);
        assert!(at.is_finite());
        assert!((at - near).abs() < 1e-7);
        assert_eq!(biexponential_shape(0.0, 0.3, 0.02, 0.05), 1.0);
        // Matches the unreparameterized form away from the singularity.
        let (p, q, r, t): (f64, f64, f64, f64) = (0.25, 0.0227, 0.03, 7.0);
        let direct = ((p - q) * (-(p + r) * t).exp() + r * (-q * t).exp()) / (p + r - q);
        assert!((biexponential_shape(t, p, q, r) - direct).abs() < 1e-14);
    }

    #[test]
    fn segment_rules() {
        let s = series(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(decay_segment(&s).unwrap().len(), 4);
        let s = series(&[1.0, 4.0, 3.0, 0.0, 1.0]);
        let seg = decay_segment(&s).unwrap();
        assert_eq!(
            seg.iter().map(|p| p.0).collect::<Vec<_>>(),
            vec![0.0, 1.0, 3.0]
        );
        assert_eq!(
            decay_segment(&series(&[1.0, 2.0])).unwrap(),
            vec![(0.0, 2f64.log10())]
        );
        assert_eq!(decay_segment(&series(&[0.0, 0.0])), Err(DecayError::NoPeak));
    }

    #[test]
    fn eligibility() {
        assert!(eligible_for_fit(&series(&[1.0; 6]), 6));
        let mut gap = vec![1.0; 11];
        gap[5] = 0.0;
        assert!(!eligible_for_fit(&series(&gap), 6));
        assert!(!eligible_for_fit(&series(&[]), 6));
    }

    #[test]
    fn two_point_exponential_is_exact() {
        let seg = [(0.0, -3.0), (2.0, -3.5)];
        let fit = fit_decay(&seg, DecayModelKind::Exponential, &DecayConfig::default()).unwrap();
        assert!(fit.mse < 1e-28, "{}", fit.mse);
        assert!(matches!(
            fit_decay(&seg, DecayModelKind::Biexponential, &DecayConfig::default()),
            Err(DecayError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn ranking_ties_keep_model_order() {
        let fit = |params| DecayFit {
            params,
            tau1: None,
            tau2: None,
            mse: 0.5,
            n_points: 3,
        };
        let fits = vec![
            fit(DecayParams::PowerLaw { a: 1.0, alpha: 1.0 }),
            fit(DecayParams::Exponential { n: 1.0, p: 1.0 }),
        ];
        let ranking = compare_decay_models(&fits);
        assert_eq!(ranking[0].0, DecayModelKind::Exponential);
        assert_eq!(compare_decay_models(&fits[..1]).len(), 1);
    }
}
