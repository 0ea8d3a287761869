use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stormlens::corpus::{GramKind, UsageRateSeries};
use stormlens::decay::{
    biexponential_profile_mse, biexponential_shape, decay_segment, fit_decay, DecayConfig,
    DecayModelKind, DecayParams,
};

/// Textbook form, valid away from `p + r = q`.
fn textbook_biexp(t: f64, n: f64, p: f64, q: f64, r: f64) -> f64 {
    n / (p + r - q) * ((p - q) * (-(p + r) * t).exp() + r * (-q * t).exp())
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

#[test]
fn shape_matches_textbook_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = DecayConfig::default();
    for _ in 0..500 {
        let (p, q, r) = (
            log_uniform(&mut rng, cfg.p_bounds),
            log_uniform(&mut rng, cfg.q_bounds),
            log_uniform(&mut rng, cfg.r_bounds),
        );
        if (p + r - q).abs() < 1e-3 {
            continue;
        }
        for t in [0.0, 0.5, 3.0, 40.0, 119.0] {
            let want = textbook_biexp(t, 2e-4, p, q, r);
            let got = DecayParams::Biexponential { n: 2e-4, p, q, r }.eval(t);
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1e-300),
                "{p} {q} {r} {t}: {got} vs {want}"
            );
        }
    }
    assert_eq!(biexponential_shape(0.0, 0.3, 0.01, 0.05), 1.0);
}

#[test]
fn fit_beats_dense_grid_search() {
    let cfg = DecayConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (p, q, r) = (0.45, 0.02, 0.08);
    let segment: Vec<(f64, f64)> = (0..120)
        .map(|t| {
            let t = t as f64;
            (
                t,
                (3e-4 * biexponential_shape(t, p, q, r)).log10() + noise.sample(&mut rng),
            )
        })
        .collect();
    let fit = fit_decay(&segment, DecayModelKind::Biexponential, &cfg).unwrap();

    let g = 50;
    let axis = |(lo, hi): (f64, f64), i: usize| {
        (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (g - 1) as f64).exp()
    };
    let mut best = f64::INFINITY;
    for a in 0..g {
        for b in 0..g {
            for c in 0..g {
                let mse = biexponential_profile_mse(
                    &segment,
                    axis(cfg.p_bounds, a),
                    axis(cfg.q_bounds, b),
                    axis(cfg.r_bounds, c),
                );
                best = best.min(mse);
            }
        }
    }
    assert!(
        fit.mse <= best * (1.0 + 1e-9),
        "fit {} grid {best}",
        fit.mse
    );
}

#[test]
fn noiseless_single_models_are_exact() {
    let cfg = DecayConfig::default();
    let exp: Vec<(f64, f64)> = (0..30)
        .map(|t| {
            (
                t as f64,
                (5e-5f64).log10() - 0.2 * t as f64 * std::f64::consts::LOG10_E,
            )
        })
        .collect();
    let fit = fit_decay(&exp, DecayModelKind::Exponential, &cfg).unwrap();
    assert!((fit.tau1.unwrap() - std::f64::consts::LN_2 / 0.2).abs() < 1e-9);
    assert!(fit.mse < 1e-24);

    let pl: Vec<(f64, f64)> = (0..30)
        .map(|t| (t as f64, -4.0 - 1.3 * ((t + 1) as f64).log10()))
        .collect();
    let fit = fit_decay(&pl, DecayModelKind::PowerLaw, &cfg).unwrap();
    match fit.params {
        DecayParams::PowerLaw { a, alpha } => {
            assert!((alpha - 1.3).abs() < 1e-12);
            assert!((a.log10() + 4.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(fit.tau1, None);
}

#[test]
fn segment_starts_at_the_peak_and_skips_gaps() {
    let mut rates = vec![0.0, 1e-6, 4e-6, 2e-6, 0.0, 1e-6];
    rates.extend([5e-7; 4]);
    let mut s = UsageRateSeries::from_rates(
        "hurricane x",
        GramKind::Bigram,
        NaiveDate::from_ymd_opt(2017, 9, 1).unwrap(),
        &rates,
    );
    s.rates[6] = None;
    let seg = decay_segment(&s).unwrap();
    let days: Vec<f64> = seg.iter().map(|p| p.0).collect();
    assert_eq!(days, vec![0.0, 1.0, 3.0, 5.0, 6.0, 7.0]);
}

#[test]
fn too_few_points_is_an_error() {
    let seg = [(0.0, -4.0), (1.0, -4.5), (2.0, -4.7)];
    assert!(fit_decay(&seg, DecayModelKind::Biexponential, &DecayConfig::default()).is_err());
    assert!(fit_decay(&seg, DecayModelKind::Exponential, &DecayConfig::default()).is_ok());
}
