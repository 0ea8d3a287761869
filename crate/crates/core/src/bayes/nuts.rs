//! No-U-Turn sampler with multinomial trajectory sampling, dual-averaging
//! step size and windowed diagonal mass-matrix adaptation.
//!
//! Every chain owns a ChaCha8 stream selected by its index, so results do
//! not depend on how chains are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::model::{LogDensity, RegressionPosterior};
use super::{BayesError, RegressionData, RegressionSpec, SamplerConfig};

const MAX_ENERGY_ERROR: f64 = 1000.0;
const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerReport {
    pub step_size: Vec<f64>,
    pub inv_mass: Vec<Vec<f64>>,
    pub divergences: Vec<usize>,
    pub mean_accept: Vec<f64>,
    pub max_depth_hits: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub model: String,
    pub seed: u64,
    pub param_names: Vec<String>,
    /// `draws[param][chain][draw]`, post burn-in.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub report: SamplerReport,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_draws(&self) -> usize {
        self.draws
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    pub fn param(&self, name: &str) -> Option<&[Vec<f64>]> {
        let i = self.param_names.iter().position(|n| n == name)?;
        Some(&self.draws[i])
    }

    /// All chains of one parameter, concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.param(name).map(|chains| chains.concat())
    }

    /// Raw draws of one chain as CSV, one column per parameter.
    pub fn chain_csv(&self, chain: usize) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.param_names).expect("in-memory write");
        for d in 0..self.n_draws() {
            w.write_record(self.draws.iter().map(|p| p[chain][d].to_string()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Subtree {
    /// Trajectory ends in time order.
    early: Point,
    late: Point,
    proposal: Point,
    log_w: f64,
    rho: Vec<f64>,
    sum_accept: f64,
    n_steps: usize,
    stop: bool,
    divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Hamiltonian<'a, M: LogDensity> {
    model: &'a M,
    inv_mass: Vec<f64>,
}

impl<M: LogDensity> Hamiltonian<'_, M> {
    fn point(&self, q: Vec<f64>, p: Vec<f64>) -> Point {
        let mut grad = vec![0.0; q.len()];
        let mut logp = self.model.logp_grad(&q, &mut grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            logp = f64::NEG_INFINITY;
        }
        Point { q, p, grad, logp }
    }

    fn energy(&self, z: &Point) -> f64 {
        let kinetic: f64 =
            z.p.iter()
                .zip(&self.inv_mass)
                .map(|(p, m)| 0.5 * p * p * m)
                .sum();
        -z.logp + kinetic
    }

    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_mass).map(|(p, m)| p * m).collect()
    }

    fn draw_momentum(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.inv_mass
            .iter()
            .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
            .collect()
    }

    fn leapfrog(&self, z: &Point, eps: f64) -> Point {
        let mut p: Vec<f64> =
            z.p.iter()
                .zip(&z.grad)
                .map(|(p, g)| p + 0.5 * eps * g)
                .collect();
        let q: Vec<f64> =
            z.q.iter()
                .zip(&p)
                .zip(&self.inv_mass)
                .map(|((q, p), m)| q + eps * m * p)
                .collect();
        let mut next = self.point(q, Vec::new());
        if next.logp.is_finite() {
            for (pi, g) in p.iter_mut().zip(&next.grad) {
                *pi += 0.5 * eps * g;
            }
        }
        next.p = p;
        next
    }

    fn no_u_turn(&self, minus: &[f64], plus: &[f64], rho: &[f64]) -> bool {
        dot(&self.sharp(minus), rho) > 0.0 && dot(&self.sharp(plus), rho) > 0.0
    }

    /// Generalized criterion across two time-ordered adjacent segments,
    /// including the checks that straddle their boundary.
    fn merged_ok(&self, a: &Subtree, b: &Subtree, rho: &[f64]) -> bool {
        if !self.no_u_turn(&a.early.p, &b.late.p, rho) {
            return false;
        }
        let left: Vec<f64> = a.rho.iter().zip(&b.early.p).map(|(r, p)| r + p).collect();
        if !self.no_u_turn(&a.early.p, &b.early.p, &left) {
            return false;
        }
        let right: Vec<f64> = b.rho.iter().zip(&a.late.p).map(|(r, p)| r + p).collect();
        self.no_u_turn(&a.late.p, &b.late.p, &right)
    }

    fn build_tree(
        &self,
        from: &Point,
        dir: f64,
        depth: usize,
        eps: f64,
        h0: f64,
        rng: &mut ChaCha8Rng,
    ) -> Subtree {
        if depth == 0 {
            let z = self.leapfrog(from, dir * eps);
            let h = self.energy(&z);
            let delta = if h.is_finite() { h - h0 } else { f64::INFINITY };
            let divergent = delta > MAX_ENERGY_ERROR;
            let accept = if delta.is_finite() {
                (-delta).exp().min(1.0)
            } else {
                0.0
            };
            return Subtree {
                early: z.clone(),
                late: z.clone(),
                rho: z.p.clone(),
                proposal: z,
                log_w: -delta,
                sum_accept: accept,
                n_steps: 1,
                stop: divergent,
                divergent,
            };
        }
        let first = self.build_tree(from, dir, depth - 1, eps, h0, rng);
        if first.stop {
            return first;
        }
        let edge = if dir > 0.0 { &first.late } else { &first.early };
        let second = self.build_tree(edge, dir, depth - 1, eps, h0, rng);
        let n_steps = first.n_steps + second.n_steps;
        let sum_accept = first.sum_accept + second.sum_accept;
        if second.stop {
            return Subtree {
                n_steps,
                sum_accept,
                stop: true,
                divergent: second.divergent,
                ..first
            };
        }
        let log_w = log_sum_exp(first.log_w, second.log_w);
        let take_second = rng.gen::<f64>() < (second.log_w - log_w).exp();
        let (a, b) = if dir > 0.0 {
            (first, second)
        } else {
            (second, first)
        };
        let rho: Vec<f64> = a.rho.iter().zip(&b.rho).map(|(x, y)| x + y).collect();
        let stop = !self.merged_ok(&a, &b, &rho);
        let proposal = match (take_second, dir > 0.0) {
            (true, true) | (false, false) => b.proposal,
            _ => a.proposal,
        };
        Subtree {
            early: a.early,
            late: b.late,
            proposal,
            log_w,
            rho,
            sum_accept,
            n_steps,
            stop,
            divergent: false,
        }
    }
}

struct Transition {
    point: Point,
    accept: f64,
    divergent: bool,
    depth_hit: bool,
}

fn transition<M: LogDensity>(
    ham: &Hamiltonian<'_, M>,
    start: &Point,
    eps: f64,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Transition {
    let z0 = Point {
        p: ham.draw_momentum(rng),
        ..start.clone()
    };
    let h0 = ham.energy(&z0);
    let mut tree = Subtree {
        early: z0.clone(),
        late: z0.clone(),
        rho: z0.p.clone(),
        proposal: z0,
        log_w: 0.0,
        sum_accept: 0.0,
        n_steps: 0,
        stop: false,
        divergent: false,
    };
    let mut depth_hit = true;
    for depth in 0..max_depth {
        let dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let edge = if dir > 0.0 {
            tree.late.clone()
        } else {
            tree.early.clone()
        };
        let sub = ham.build_tree(&edge, dir, depth, eps, h0, rng);
        tree.n_steps += sub.n_steps;
        tree.sum_accept += sub.sum_accept;
        if sub.stop {
            tree.divergent = sub.divergent;
            depth_hit = false;
            break;
        }
        // Biased progressive sampling favours the newer subtree.
        if rng.gen::<f64>() < (sub.log_w - tree.log_w).exp() {
            tree.proposal = sub.proposal.clone();
        }
        let log_w = log_sum_exp(tree.log_w, sub.log_w);
        let (n_steps, sum_accept, proposal) =
            (tree.n_steps, tree.sum_accept, tree.proposal.clone());
        let (a, b) = if dir > 0.0 { (tree, sub) } else { (sub, tree) };
        let rho: Vec<f64> = a.rho.iter().zip(&b.rho).map(|(x, y)| x + y).collect();
        let turning = !ham.merged_ok(&a, &b, &rho);
        tree = Subtree {
            early: a.early,
            late: b.late,
            proposal,
            log_w,
            rho,
            sum_accept,
            n_steps,
            stop: false,
            divergent: false,
        };
        if turning {
            depth_hit = false;
            break;
        }
    }
    Transition {
        accept: if tree.n_steps > 0 {
            tree.sum_accept / tree.n_steps as f64
        } else {
            0.0
        },
        divergent: tree.divergent,
        depth_hit,
        point: Point {
            p: Vec::new(),
            ..tree.proposal
        },
    }
}

/// Doubles or halves the step until a single leapfrog step crosses an
/// acceptance probability of 0.8.
fn initial_step_size<M: LogDensity>(
    ham: &Hamiltonian<'_, M>,
    z: &Point,
    eps0: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let threshold = 0.8f64.ln();
    let delta_h = |eps: f64, rng: &mut ChaCha8Rng| {
        let z0 = Point {
            p: ham.draw_momentum(rng),
            ..z.clone()
        };
        let h0 = ham.energy(&z0);
        let h1 = ham.energy(&ham.leapfrog(&z0, eps));
        let d = h0 - h1;
        if d.is_nan() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let mut eps = eps0;
    let grow = delta_h(eps, rng) > threshold;
    loop {
        let d = delta_h(eps, rng);
        if grow && !(d > threshold) || !grow && !(d < threshold) {
            break;
        }
        eps = if grow { eps * 2.0 } else { eps * 0.5 };
        if !(1e-8..=1e7).contains(&eps) {
            break;
        }
    }
    eps
}

struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps_bar: f64,
    counter: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            target,
            h_bar: 0.0,
            log_eps_bar: 0.0,
            counter: 0.0,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        let log_eps = self.mu - self.counter.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.counter.powf(-Self::KAPPA);
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Ends of the slow mass-adaptation windows within `burn_in` iterations.
fn adaptation_windows(burn_in: usize) -> (usize, Vec<usize>) {
    let (mut init, mut term, mut base) = (75, 50, 25);
    if burn_in < 20 {
        return (burn_in, Vec::new());
    }
    if init + term + base > burn_in {
        init = burn_in * 15 / 100;
        term = burn_in / 10;
        base = burn_in - init - term;
    }
    let last = burn_in - term;
    let mut ends = Vec::new();
    let (mut start, mut size) = (init, base);
    while start < last {
        let mut end = start + size;
        if end + 2 * size > last {
            end = last;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    (init, ends)
}

#[derive(Default)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn add(&mut self, x: &[f64]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.n += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Sample variance shrunk towards 1e-3.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|m2| {
                let var = m2 / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    step_size: f64,
    inv_mass: Vec<f64>,
    divergences: usize,
    mean_accept: f64,
    depth_hits: usize,
}

fn run_chain<M: LogDensity>(
    model: &M,
    cfg: &SamplerConfig,
    burn_in: usize,
    chain: usize,
) -> Result<ChainOutput, BayesError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let dim = model.dim();
    let mut ham = Hamiltonian {
        model,
        inv_mass: vec![1.0; dim],
    };

    let base = model.initial_point();
    let mut current = None;
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = base
            .iter()
            .map(|v| v + cfg.init_jitter * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z = ham.point(q, vec![0.0; dim]);
        if z.logp.is_finite() {
            current = Some(z);
            break;
        }
    }
    let mut current = current.ok_or(BayesError::Initialization { chain })?;

    let mut eps = initial_step_size(&ham, &current, 1.0, &mut rng);
    let mut adapt = DualAveraging::new(eps, cfg.target_accept);
    let (window_start, window_ends) = adaptation_windows(burn_in);
    let mut welford = Welford::default();

    for it in 0..burn_in {
        let t = transition(&ham, &current, eps, cfg.max_tree_depth, &mut rng);
        current = t.point;
        eps = adapt.update(t.accept);
        if it >= window_start && window_ends.last().is_some_and(|&e| it < e) {
            welford.add(&current.q);
            if window_ends.contains(&(it + 1)) {
                ham.inv_mass = welford.regularized();
                welford = Welford::default();
                eps = initial_step_size(&ham, &current, eps, &mut rng);
                adapt = DualAveraging::new(eps, cfg.target_accept);
            }
        }
    }
    if burn_in > 0 {
        eps = adapt.final_step();
    }

    let mut draws = Vec::with_capacity(cfg.draws);
    let (mut divergences, mut depth_hits, mut accept_sum) = (0, 0, 0.0);
    for _ in 0..cfg.draws {
        let t = transition(&ham, &current, eps, cfg.max_tree_depth, &mut rng);
        current = t.point;
        divergences += usize::from(t.divergent);
        depth_hits += usize::from(t.depth_hit);
        accept_sum += t.accept;
        let out = model.constrain(&current.q);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(BayesError::NonFinite {
                what: "draw",
                param: model.param_names()[out.iter().position(|v| !v.is_finite()).unwrap_or(0)]
                    .clone(),
            });
        }
        draws.push(out);
    }
    Ok(ChainOutput {
        draws,
        step_size: eps,
        inv_mass: ham.inv_mass,
        divergences,
        mean_accept: if cfg.draws > 0 {
            accept_sum / cfg.draws as f64
        } else {
            0.0
        },
        depth_hits,
    })
}

/// Samples any log density; chains run in parallel and are merged by index.
pub fn sample<M: LogDensity>(
    model: &M,
    cfg: &SamplerConfig,
    burn_in: usize,
    label: &str,
) -> Result<PosteriorSamples, BayesError> {
    if cfg.chains == 0 {
        return Err(BayesError::Config("chains must be positive".into()));
    }
    if !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) {
        return Err(BayesError::Config(
            "target_accept must lie in (0, 1)".into(),
        ));
    }
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(model, cfg, burn_in, c))
        .collect::<Result<_, _>>()?;

    let names = model.param_names();
    let mut draws = vec![Vec::with_capacity(cfg.chains); names.len()];
    for out in &outputs {
        for (i, per_param) in draws.iter_mut().enumerate() {
            per_param.push(out.draws.iter().map(|d| d[i]).collect::<Vec<f64>>());
        }
    }
    let mut warnings = Vec::new();
    let total_div: usize = outputs.iter().map(|o| o.divergences).sum();
    let total = cfg.chains * cfg.draws;
    if total > 0 && total_div as f64 > 0.1 * total as f64 {
        let msg = format!(
            "{label}: {total_div} of {total} transitions diverged ({:.1}%)",
            100.0 * total_div as f64 / total as f64
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(PosteriorSamples {
        model: label.to_string(),
        seed: cfg.seed,
        param_names: names,
        draws,
        report: SamplerReport {
            step_size: outputs.iter().map(|o| o.step_size).collect(),
            inv_mass: outputs.iter().map(|o| o.inv_mass.clone()).collect(),
            divergences: outputs.iter().map(|o| o.divergences).collect(),
            mean_accept: outputs.iter().map(|o| o.mean_accept).collect(),
            max_depth_hits: outputs.iter().map(|o| o.depth_hits).collect(),
            warnings,
        },
    })
}

/// Samples the posterior of `spec.model` given its design.
pub fn sample_posterior(
    spec: &RegressionSpec,
    data: &RegressionData,
) -> Result<PosteriorSamples, BayesError> {
    let post = RegressionPosterior::new(data, spec);
    sample(
        &post,
        &spec.sampler,
        spec.burn_in(),
        &spec.model.to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
        offset: f64,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = self.offset;
            for i in 0..x.len() {
                let z = (x[i] - self.mean[i]) / self.sd[i];
                lp -= 0.5 * z * z;
                grad[i] = -z / self.sd[i];
            }
            lp
        }
        fn param_names(&self) -> Vec<String> {
            (0..self.mean.len()).map(|i| format!("x{i}")).collect()
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0; self.mean.len()]
        }
    }

    fn small_cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            chains: 2,
            draws: 300,
            seed,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn windows_follow_the_standard_schedule() {
        assert_eq!(adaptation_windows(500), (75, vec![100, 150, 250, 450]));
        assert_eq!(
            adaptation_windows(1000),
            (75, vec![100, 150, 250, 450, 950])
        );
        let (init, ends) = adaptation_windows(100);
        assert_eq!(init, 15);
        assert_eq!(ends, vec![90]);
        assert_eq!(adaptation_windows(10), (10, vec![]));
    }

    #[test]
    fn adapts_to_scales() {
        let g = Gaussian {
            mean: vec![3.0, -1.0],
            sd: vec![10.0, 0.1],
            offset: 0.0,
        };
        let s = sample(&g, &small_cfg(5), 500, "g").unwrap();
        let m = s.report.inv_mass[0].clone();
        assert!(m[0] > 20.0 && m[1] < 0.05, "{m:?}");
        let x0 = s.pooled("x0").unwrap();
        let mean = x0.iter().sum::<f64>() / x0.len() as f64;
        assert!((mean - 3.0).abs() < 2.0, "{mean}");
        assert!(s.report.warnings.is_empty());
    }

    #[test]
    fn deterministic_and_chain_streams_differ() {
        let g = Gaussian {
            mean: vec![0.0],
            sd: vec![1.0],
            offset: 0.0,
        };
        let a = sample(&g, &small_cfg(11), 100, "g").unwrap();
        let b = sample(&g, &small_cfg(11), 100, "g").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.draws[0][0], a.draws[0][1]);
        let c = sample(&g, &small_cfg(12), 100, "g").unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_sum_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
