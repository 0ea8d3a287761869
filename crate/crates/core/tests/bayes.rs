use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stormlens::bayes::{
    effective_sample_size, hpd_interval, log_posterior_grad, sample, split_rhat,
    summarize_posterior, CategoryClass, Impact, LogDensity, ModelKind, RegressionData,
    RegressionSpec, SamplerConfig,
};

fn normal_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    // Normalizing constant omitted; only differences are compared.
    (shape - 1.0) * x.ln() - rate * x
}

/// Log posterior written directly on the constrained scale, then moved to
/// the sampler scale with the log-Jacobian of each exponentiated parameter.
fn oracle_log_posterior(params: &[f64], data: &RegressionData, model: ModelKind) -> f64 {
    let k = model.slope_names().len();
    let a0 = params[0];
    let slopes = &params[1..1 + k];
    let sigma = params[1 + k].exp();
    let mut lp = 0.0;
    for (row, y) in data.x.iter().zip(&data.y) {
        let mu = a0 + row.iter().zip(slopes).map(|(x, b)| x * b).sum::<f64>();
        lp += normal_logpdf(*y, mu, sigma);
    }
    lp += slopes
        .iter()
        .map(|b| normal_logpdf(*b, 0.0, 1.0))
        .sum::<f64>();
    lp += normal_logpdf(sigma, 0.0, 5.0) + params[1 + k];
    if model.is_combined() {
        lp += normal_logpdf(a0, -8.0, 3.0);
    } else {
        let tau = params[2 + k].exp();
        lp += normal_logpdf(a0, -8.0, tau.powf(-0.5));
        lp += gamma_logpdf(tau, 3.0, 1.0) + params[2 + k];
    }
    lp
}

fn synthetic(model: ModelKind, n: usize, seed: u64) -> RegressionData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = RegressionData::empty(model);
    let k = model.slope_names().len();
    for i in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..4.0)).collect();
        data.y
            .push(-6.0 + 0.3 * row.iter().sum::<f64>() + rng.gen_range(-0.5..0.5));
        data.x.push(row);
        data.labels.push(format!("s{i}"));
    }
    data
}

fn families() -> Vec<ModelKind> {
    vec![
        ModelKind::PerCategory {
            impact: Impact::Damage,
            class: CategoryClass::Category(3),
        },
        ModelKind::Reg1,
        ModelKind::Reg2,
        ModelKind::Reg3,
    ]
}

#[test]
fn log_posterior_matches_density_oracle_up_to_a_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for model in families() {
        let data = synthetic(model, 20, 9);
        let spec = RegressionSpec::new(model, 0);
        let dim = model.dim();
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let base = draw(&mut rng);
        let (lp0, _) = log_posterior_grad(&base, &data, &spec).unwrap();
        let oracle0 = oracle_log_posterior(&base, &data, model);
        for _ in 0..50 {
            let x = draw(&mut rng);
            let (lp, _) = log_posterior_grad(&x, &data, &spec).unwrap();
            let want = oracle_log_posterior(&x, &data, model) - oracle0;
            assert!(
                ((lp - lp0) - want).abs() <= 1e-9 * want.abs().max(1.0),
                "{model}: {} vs {want}",
                lp - lp0
            );
        }
    }
}

/// Two-coefficient linear regression with known noise and a normal prior;
/// the posterior is normal with closed-form moments.
struct Conjugate {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: f64,
    prior_sd: f64,
}

impl Conjugate {
    fn precision(&self) -> [[f64; 2]; 2] {
        let s2 = self.sigma * self.sigma;
        let p0 = 1.0 / (self.prior_sd * self.prior_sd);
        let n = self.x.len() as f64;
        let sx: f64 = self.x.iter().sum();
        let sxx: f64 = self.x.iter().map(|v| v * v).sum();
        [[n / s2 + p0, sx / s2], [sx / s2, sxx / s2 + p0]]
    }

    fn moments(&self) -> ([f64; 2], [f64; 2]) {
        let [[a, b], [c, d]] = self.precision();
        let det = a * d - b * c;
        let cov = [[d / det, -b / det], [-c / det, a / det]];
        let s2 = self.sigma * self.sigma;
        let ty = [
            self.y.iter().sum::<f64>() / s2,
            self.x.iter().zip(&self.y).map(|(x, y)| x * y).sum::<f64>() / s2,
        ];
        let mean = [
            cov[0][0] * ty[0] + cov[0][1] * ty[1],
            cov[1][0] * ty[0] + cov[1][1] * ty[1],
        ];
        (mean, [cov[0][0].sqrt(), cov[1][1].sqrt()])
    }
}

impl LogDensity for Conjugate {
    fn dim(&self) -> usize {
        2
    }
    fn logp_grad(&self, b: &[f64], grad: &mut [f64]) -> f64 {
        let s2 = self.sigma * self.sigma;
        let p0 = 1.0 / (self.prior_sd * self.prior_sd);
        let mut lp = -0.5 * p0 * (b[0] * b[0] + b[1] * b[1]);
        grad[0] = -p0 * b[0];
        grad[1] = -p0 * b[1];
        for (x, y) in self.x.iter().zip(&self.y) {
            let r = y - b[0] - b[1] * x;
            lp -= 0.5 * r * r / s2;
            grad[0] += r / s2;
            grad[1] += r * x / s2;
        }
        lp
    }
    fn param_names(&self) -> Vec<String> {
        vec!["b0".into(), "b1".into()]
    }
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
}

fn conjugate_problem() -> Conjugate {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 0.7).unwrap();
    let x: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..5.0)).collect();
    let y = x
        .iter()
        .map(|v| 1.5 - 0.8 * v + noise.sample(&mut rng))
        .collect();
    Conjugate {
        x,
        y,
        sigma: 0.7,
        prior_sd: 10.0,
    }
}

#[test]
fn sampler_recovers_conjugate_posterior() {
    let model = conjugate_problem();
    let (mean, sd) = model.moments();
    let cfg = SamplerConfig {
        chains: 4,
        draws: 2000,
        seed: 17,
        ..SamplerConfig::default()
    };
    let samples = sample(&model, &cfg, 500, "conjugate").unwrap();
    for (i, name) in ["b0", "b1"].iter().enumerate() {
        let chains = samples.param(name).unwrap();
        let pooled = samples.pooled(name).unwrap();
        let n = pooled.len() as f64;
        let m = pooled.iter().sum::<f64>() / n;
        let s = (pooled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let ess = effective_sample_size(chains).unwrap();
        let mc_error = sd[i] / ess.sqrt();
        assert!(
            (m - mean[i]).abs() < 4.0 * mc_error,
            "{name}: mean {m} vs {}",
            mean[i]
        );
        assert!(
            (s / sd[i] - 1.0).abs() < 0.06,
            "{name}: sd {s} vs {}",
            sd[i]
        );
        assert!(split_rhat(chains).unwrap() < 1.01);
        // Central 95% interval of a normal. The endpoints are 2.5% and
        // 97.5% quantiles whose standard error is sqrt(p(1-p)/ess)/phi(z).
        let phi = (-0.5f64 * 1.96 * 1.96).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tol = 4.0 * (0.025f64 * 0.975 / ess).sqrt() / phi * sd[i];
        let (lo, hi) = hpd_interval(&pooled, 0.95);
        assert!(
            (lo - (mean[i] - 1.96 * sd[i])).abs() < tol,
            "{name}: lo {lo}"
        );
        assert!(
            (hi - (mean[i] + 1.96 * sd[i])).abs() < tol,
            "{name}: hi {hi}"
        );
    }
}

struct Shifted<'a>(&'a Conjugate, f64);

impl LogDensity for Shifted<'_> {
    fn dim(&self) -> usize {
        2
    }
    fn logp_grad(&self, b: &[f64], grad: &mut [f64]) -> f64 {
        self.0.logp_grad(b, grad) + self.1
    }
    fn param_names(&self) -> Vec<String> {
        self.0.param_names()
    }
    fn initial_point(&self) -> Vec<f64> {
        self.0.initial_point()
    }
}

#[test]
fn normalizing_constant_does_not_change_the_posterior() {
    let model = conjugate_problem();
    let cfg = SamplerConfig {
        chains: 2,
        draws: 1500,
        seed: 5,
        ..SamplerConfig::default()
    };
    let plain = summarize_posterior(&sample(&model, &cfg, 500, "plain").unwrap()).unwrap();
    let shifted =
        summarize_posterior(&sample(&Shifted(&model, 1234.5), &cfg, 500, "shifted").unwrap())
            .unwrap();
    for (a, b) in plain.iter().zip(&shifted) {
        // Identical up to rounding in the energy differences, which can
        // flip a rare trajectory choice.
        assert!((a.mean - b.mean).abs() < 3.0 * a.mc_error, "{a:?} {b:?}");
        assert!((a.sd / b.sd - 1.0).abs() < 0.05, "{a:?} {b:?}");
    }
}

#[test]
fn identical_chains_have_rhat_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let chain: Vec<f64> = (0..2000)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    let chains = vec![chain.clone(); 4];
    let r = split_rhat(&chains).unwrap();
    assert!((r - 1.0).abs() < 0.01, "{r}");
}

#[test]
fn hpd_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(1..60);
        let draws: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64).collect();
        let mass = rng.gen_range(0.05..1.0);
        let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let widths: Vec<f64> = (0..=n - k).map(|i| sorted[i + k - 1] - sorted[i]).collect();
        let min = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        let i = widths.iter().position(|w| *w == min).unwrap();
        assert_eq!(hpd_interval(&draws, mass), (sorted[i], sorted[i + k - 1]));
    }
}
