//! Log posterior densities and gradients on the unconstrained scale.
//!
//! Combined regressions sample `[a0, slopes.., log sigma]`; per-category
//! models sample `[a0, a1, log sigma, log tau]`. Positive parameters carry
//! their log-Jacobian.

use std::f64::consts::PI;

use super::{BayesError, Priors, RegressionData, RegressionSpec};

/// A differentiable log density for the sampler.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density up to a constant; writes the gradient into `grad`.
    /// Returns a non-finite value where the density is undefined.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Names of the reported parameters.
    fn param_names(&self) -> Vec<String>;

    /// Starting point before jitter.
    fn initial_point(&self) -> Vec<f64>;

    /// Maps a sampler state to reported parameter values.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// The posterior of one regression model.
#[derive(Debug, Clone)]
pub struct RegressionPosterior<'a> {
    pub data: &'a RegressionData,
    pub spec: &'a RegressionSpec,
}

impl<'a> RegressionPosterior<'a> {
    pub fn new(data: &'a RegressionData, spec: &'a RegressionSpec) -> Self {
        Self { data, spec }
    }

    fn n_slopes(&self) -> usize {
        self.spec.model.slope_names().len()
    }

    fn sampler_names(&self) -> Vec<String> {
        let mut names = self.spec.model.param_names();
        for n in names.iter_mut() {
            if n == "sigma" || n == "tau" {
                *n = format!("log_{n}");
            }
        }
        names
    }
}

impl LogDensity for RegressionPosterior<'_> {
    fn dim(&self) -> usize {
        self.spec.model.dim()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        evaluate(self.data, self.spec, x, grad)
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.model.param_names()
    }

    fn initial_point(&self) -> Vec<f64> {
        let pr = &self.spec.priors;
        let mut x = vec![pr.intercept_mean];
        x.extend(std::iter::repeat_n(0.0, self.n_slopes()));
        // Mean of the half-normal noise prior.
        x.push((pr.sigma_scale * (2.0 / PI).sqrt()).ln());
        if !self.spec.model.is_combined() {
            x.push((pr.tau_shape / pr.tau_rate).ln());
        }
        x
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let k = self.n_slopes();
        let mut out = x.to_vec();
        for v in &mut out[k + 1..] {
            *v = v.exp();
        }
        out
    }
}

fn evaluate(data: &RegressionData, spec: &RegressionSpec, x: &[f64], grad: &mut [f64]) -> f64 {
    let pr: &Priors = &spec.priors;
    let k = spec.model.slope_names().len();
    let per_category = !spec.model.is_combined();
    grad.iter_mut().for_each(|g| *g = 0.0);

    let a0 = x[0];
    let slopes = &x[1..1 + k];
    let log_sigma = x[1 + k];
    let sigma2 = (2.0 * log_sigma).exp();

    let mut lp = 0.0;
    let mut sum_r2 = 0.0;
    for (row, &y) in data.x.iter().zip(&data.y) {
        let mu = a0 + row.iter().zip(slopes).map(|(xi, b)| xi * b).sum::<f64>();
        let r = y - mu;
        sum_r2 += r * r;
        grad[0] += r / sigma2;
        for (g, xi) in grad[1..1 + k].iter_mut().zip(row) {
            *g += r * xi / sigma2;
        }
    }
    let n = data.y.len() as f64;
    lp += -n * log_sigma - 0.5 * sum_r2 / sigma2;
    grad[1 + k] += sum_r2 / sigma2 - n;

    // Half-normal on sigma plus the log-sigma Jacobian.
    let s2 = pr.sigma_scale * pr.sigma_scale;
    lp += -0.5 * sigma2 / s2 + log_sigma;
    grad[1 + k] += -sigma2 / s2 + 1.0;

    for (g, b) in grad[1..1 + k].iter_mut().zip(slopes) {
        lp += -0.5 * b * b / (pr.slope_sd * pr.slope_sd);
        *g += -b / (pr.slope_sd * pr.slope_sd);
    }

    let d0 = a0 - pr.intercept_mean;
    if per_category {
        // a0 ~ normal(mean, tau^-1/2), tau ~ gamma(shape, rate), sampled as log tau.
        let log_tau = x[2 + k];
        let tau = log_tau.exp();
        lp += 0.5 * log_tau - 0.5 * tau * d0 * d0;
        grad[0] += -tau * d0;
        grad[2 + k] += 0.5 - 0.5 * tau * d0 * d0;
        lp += (pr.tau_shape - 1.0) * log_tau - pr.tau_rate * tau + log_tau;
        grad[2 + k] += pr.tau_shape - 1.0 - pr.tau_rate * tau + 1.0;
    } else {
        let v = pr.intercept_sd * pr.intercept_sd;
        lp += -0.5 * d0 * d0 / v;
        grad[0] += -d0 / v;
    }
    lp
}

/// Log posterior (up to a constant) and its gradient at `params`, given on
/// the sampler scale (`log sigma`, `log tau`).
pub fn log_posterior_grad(
    params: &[f64],
    data: &RegressionData,
    spec: &RegressionSpec,
) -> Result<(f64, Vec<f64>), BayesError> {
    let post = RegressionPosterior::new(data, spec);
    let dim = post.dim();
    if params.len() != dim {
        return Err(BayesError::Dimension {
            expected: dim,
            got: params.len(),
        });
    }
    let names = post.sampler_names();
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(BayesError::NonFinite {
            what: "input",
            param: names[i].clone(),
        });
    }
    let mut grad = vec![0.0; dim];
    let lp = post.logp_grad(params, &mut grad);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(BayesError::NonFinite {
            what: "gradient",
            param: names[i].clone(),
        });
    }
    if !lp.is_finite() {
        // Blame the positive-scale parameter driving the overflow.
        let i = (0..dim)
            .rev()
            .find(|&i| names[i].starts_with("log_"))
            .unwrap_or(0);
        return Err(BayesError::NonFinite {
            what: "log density",
            param: names[i].clone(),
        });
    }
    Ok((lp, grad))
}
