use chrono::NaiveDate;
use proptest::prelude::*;
use stormlens::corpus::{GramKind, UsageRateSeries};
use stormlens::metrics::{
    attention_quantile, integrated_usage, mid_ranks, peak_usage, spearman_rho,
};

fn series(rates: &[f64]) -> UsageRateSeries {
    UsageRateSeries::from_rates(
        "#hurricanetest",
        GramKind::Unigram,
        NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
        rates,
    )
}

/// Scans every candidate day count and keeps the first whose prefix sum,
/// recomputed from scratch, reaches the target.
fn quantile_oracle(rates: &[f64], q: f64) -> usize {
    let total: f64 = rates.iter().sum();
    (1..=rates.len())
        .find(|&d| rates[..d].iter().sum::<f64>() >= q * total)
        .unwrap_or(rates.len())
}

/// Spearman from ranks built by counting smaller and equal values, with the
/// correlation taken over all ordered pairs.
fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let mut num = 0.0;
    let mut dx2 = 0.0;
    let mut dy2 = 0.0;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            // Double sum form of the covariance: sum_ij (x_i - x_j)(y_i - y_j) / 2.
            num += (rx[i] - rx[j]) * (ry[i] - ry[j]);
            dx2 += (rx[i] - rx[j]).powi(2);
            dy2 += (ry[i] - ry[j]).powi(2);
        }
    }
    num / (dx2 * dy2).sqrt()
}

proptest! {
    #[test]
    fn quantile_matches_prefix_oracle(
        rates in prop::collection::vec(prop_oneof![Just(0.0), 0.0..1e-3f64], 1..400),
        q in 0.01..0.999f64,
    ) {
        prop_assume!(rates.iter().sum::<f64>() > 0.0);
        prop_assert_eq!(attention_quantile(&series(&rates), q).unwrap(), quantile_oracle(&rates, q));
    }

    #[test]
    fn quantile_is_monotone_in_q(rates in prop::collection::vec(0.0..1.0f64, 2..200)) {
        prop_assume!(rates.iter().sum::<f64>() > 0.0);
        let s = series(&rates);
        let q90 = attention_quantile(&s, 0.9).unwrap();
        let q99 = attention_quantile(&s, 0.99).unwrap();
        prop_assert!(q90 <= q99);
    }

    #[test]
    fn spearman_matches_pairwise_oracle(
        pairs in prop::collection::vec((0..12i32, -5.0..5.0f64), 3..60),
    ) {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| (p.1 * 2.0).round() / 2.0).collect();
        let distinct = |v: &[f64]| v.iter().any(|a| *a != v[0]);
        prop_assume!(distinct(&xs) && distinct(&ys));
        let rho = spearman_rho(&xs, &ys).unwrap();
        prop_assert!((rho - spearman_oracle(&xs, &ys)).abs() <= 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps(xs in prop::collection::vec(-10.0..10.0f64, 3..40)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        prop_assume!(xs.iter().any(|a| *a != xs[0]));
        prop_assert!((spearman_rho(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x * x * x).collect();
        prop_assert!((spearman_rho(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }
}

#[test]
fn mid_ranks_share_ties() {
    assert_eq!(
        mid_ranks(&[10.0, 20.0, 20.0, 5.0]),
        vec![2.0, 3.5, 3.5, 1.0]
    );
}

#[test]
fn single_day_spike() {
    let mut rates = vec![0.0; 365];
    rates[0] = 1e-4;
    let s = series(&rates);
    assert_eq!(attention_quantile(&s, 0.99).unwrap(), 1);
    assert_eq!(peak_usage(&s), (0, 1e-4));
    assert_eq!(integrated_usage(&s, 365), 1e-4);
}

#[test]
fn missing_days_count_as_zero_in_integrals() {
    let mut s = series(&[1.0, 2.0, 3.0]);
    s.rates[1] = None;
    assert_eq!(integrated_usage(&s, 3), 4.0);
    assert_eq!(attention_quantile(&s, 0.5).unwrap(), 3);
}
