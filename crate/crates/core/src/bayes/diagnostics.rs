//! Convergence diagnostics and posterior summaries.

use super::nuts::PosteriorSamples;
use super::BayesError;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize, BayesError> {
    if chains.len() < 2 {
        return Err(BayesError::SingleChain(chains.len()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(BayesError::TooFewDraws(n));
    }
    Ok(n)
}

/// Split-chain potential scale reduction. Each chain is cut in half (the
/// middle draw of an odd-length chain is dropped) and the classic
/// between/within variance ratio is taken over the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, BayesError> {
    let n = check_chains(chains)?;
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>());
    let b_over_n = variance(&means);
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size from the multi-chain autocorrelation, truncated
/// by Geyer's initial positive sequence and made monotone.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64, BayesError> {
    let n = check_chains(chains)?;
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let m = chains.len() as f64;
    let nf = n as f64;
    let total = m * nf;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m
    };
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let var_plus = mean_var * (nf - 1.0) / nf + variance(&means);
    if var_plus == 0.0 {
        return Ok(total);
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n + 1];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho_hat[max_s + 1] = even;
    }
    let mut k = 1;
    while k + 3 <= max_s {
        let prev = rho_hat[k - 1] + rho_hat[k];
        if rho_hat[k + 1] + rho_hat[k + 2] > prev {
            rho_hat[k + 1] = prev / 2.0;
            rho_hat[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + rho_hat[max_s + 1];
    Ok((total / tau).min(total * total.log10()))
}

/// Shortest interval covering `ceil(mass * n)` sorted draws; the leftmost
/// wins among equally short ones. Empty input gives NaNs.
pub fn hpd_interval(draws: &[f64], mass: f64) -> (f64, f64) {
    if draws.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    for i in 1..=n - k {
        if sorted[i + k - 1] - sorted[i] < sorted[best + k - 1] - sorted[best] {
            best = i;
        }
    }
    (sorted[best], sorted[best + k - 1])
}

/// Multiplicative change in attention per ten-fold change in the predictor.
pub fn fold_change(coefficient: f64) -> f64 {
    10f64.powf(coefficient)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub rhat: f64,
    pub n_eff: f64,
    pub mc_error: f64,
}

pub fn convergence_diagnostics(
    samples: &PosteriorSamples,
) -> Result<Vec<(String, Diagnostics)>, BayesError> {
    samples
        .param_names
        .iter()
        .zip(&samples.draws)
        .map(|(name, chains)| {
            let pooled = chains.concat();
            let sd = variance(&pooled).max(0.0).sqrt();
            let n_eff = effective_sample_size(chains)?;
            Ok((
                name.clone(),
                Diagnostics {
                    rhat: split_rhat(chains)?,
                    n_eff,
                    mc_error: sd / n_eff.sqrt(),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param: String,
    pub mean: f64,
    pub sd: f64,
    pub mc_error: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    pub n_eff: f64,
    pub rhat: f64,
}

pub fn summarize_posterior(samples: &PosteriorSamples) -> Result<Vec<SummaryRow>, BayesError> {
    let diags = convergence_diagnostics(samples)?;
    Ok(samples
        .draws
        .iter()
        .zip(diags)
        .map(|(chains, (param, d))| {
            let pooled = chains.concat();
            let (hpd_lo, hpd_hi) = hpd_interval(&pooled, 0.95);
            SummaryRow {
                param,
                mean: mean(&pooled),
                sd: variance(&pooled).max(0.0).sqrt(),
                mc_error: d.mc_error,
                hpd_lo,
                hpd_hi,
                n_eff: d.n_eff,
                rhat: d.rhat,
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "param", "mean", "sd", "mc_error", "hpd_2.5", "hpd_97.5", "n_eff", "Rhat",
];

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.param.clone(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.mc_error.to_string(),
            r.hpd_lo.to_string(),
            r.hpd_hi.to_string(),
            r.n_eff.to_string(),
            r.rhat.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
