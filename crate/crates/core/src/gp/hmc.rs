//! Static-trajectory HMC with dual-averaging step-size adaptation over the
//! log-parameters of an [`ShoModel`].
//!
//! Priors are independent uniforms on each log-parameter. log w0 and log Q use
//! the fixed supports from [`super`]; log S0 and log jitter use supports
//! anchored to the data variance (see [`PriorBox::for_data`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{celerite::gp_loglike_grad, log_q_support, log_w0_support, ShoModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    /// Total iterations, warmup included.
    pub steps: usize,
    pub warmup: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    /// Energy error beyond which a transition counts as divergent.
    pub max_energy_error: f64,
    /// Post-warmup acceptance below this fails the fit.
    pub min_accept: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            steps: 1000,
            warmup: 500,
            leapfrog_steps: 10,
            target_accept: 0.8,
            max_energy_error: 1000.0,
            min_accept: 0.05,
        }
    }
}

/// Axis-aligned support of the uniform prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// log S0 spans [ln var - 25, ln var + 10].
pub const LOG_S0_SPAN: (f64, f64) = (-25.0, 10.0);
/// log jitter spans [ln sd - 12, ln sd + 3].
pub const LOG_JITTER_SPAN: (f64, f64) = (-12.0, 3.0);

impl PriorBox {
    pub fn for_data(n_components: usize, values: &[f64]) -> Self {
        let var = variance(values).max(1e-300);
        let (lw_lo, lw_hi) = log_w0_support();
        let (lq_lo, lq_hi) = log_q_support();
        let mut lower = Vec::with_capacity(3 * n_components + 1);
        let mut upper = Vec::with_capacity(3 * n_components + 1);
        for _ in 0..n_components {
            lower.extend([var.ln() + LOG_S0_SPAN.0, lq_lo, lw_lo]);
            upper.extend([var.ln() + LOG_S0_SPAN.1, lq_hi, lw_hi]);
        }
        let ln_sd = 0.5 * var.ln();
        lower.push(ln_sd + LOG_JITTER_SPAN.0);
        upper.push(ln_sd + LOG_JITTER_SPAN.1);
        PriorBox { lower, upper }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

pub(crate) fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub median: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_components: usize,
    /// Flattened like [`ShoModel::to_params`], components in ascending w0 order.
    pub params: Vec<ParamSummary>,
    pub acceptance_rate: f64,
    pub divergences: usize,
    pub n_samples: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl PosteriorSummary {
    pub fn median_model(&self) -> ShoModel {
        let p: Vec<f64> = self.params.iter().map(|p| p.median).collect();
        ShoModel::from_params(&p)
    }
}

pub fn param_names(n_components: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * n_components + 1);
    for k in 0..n_components {
        names.push(format!("c{k}.log_s0"));
        names.push(format!("c{k}.log_q"));
        names.push(format!("c{k}.log_w0"));
    }
    names.push("log_jitter".into());
    names
}

struct Target<'a> {
    times: &'a [f64],
    values: &'a [f64],
    prior: PriorBox,
}

impl Target<'_> {
    /// Log posterior (up to a constant) and gradient; `None` outside the prior
    /// support or where the factorization fails.
    fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        if !self.prior.contains(x) {
            return None;
        }
        let model = ShoModel::from_params(x);
        let (lp, g) = gp_loglike_grad(&model, self.times, self.values).ok()?;
        (lp.is_finite() && g.iter().all(|v| v.is_finite())).then_some((lp, g))
    }
}

struct State {
    x: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

enum Trajectory {
    Done(State, f64),
    /// Left the support or hit a failed factorization.
    Rejected,
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

fn leapfrog(target: &Target, start: &State, p0: &[f64], eps: f64, n_steps: usize) -> Trajectory {
    let mut x = start.x.clone();
    let mut p = p0.to_vec();
    let mut grad = start.grad.clone();
    let mut logp = start.logp;
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += eps * pi;
        }
        match target.eval(&x) {
            Some((lp, g)) => {
                logp = lp;
                grad = g;
            }
            None => return Trajectory::Rejected,
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
    }
    let k = kinetic(&p);
    Trajectory::Done(State { x, logp, grad }, k)
}

fn sample_momentum(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn accept_prob(h0: f64, h1: f64) -> f64 {
    let a = (h0 - h1).exp();
    if a.is_finite() {
        a.min(1.0)
    } else if h1 < h0 {
        1.0
    } else {
        0.0
    }
}

/// Step-size heuristic: double or halve from 0.1 until a single leapfrog step's
/// acceptance probability crosses 1/2.
fn initial_step_size(target: &Target, state: &State, rng: &mut ChaCha8Rng) -> f64 {
    let dim = state.x.len();
    let mut eps: f64 = 0.1;
    let p = sample_momentum(rng, dim);
    let h0 = -state.logp + kinetic(&p);
    let prob = |eps: f64| match leapfrog(target, state, &p, eps, 1) {
        Trajectory::Done(s, k) => accept_prob(h0, -s.logp + k),
        Trajectory::Rejected => 0.0,
    };
    let dir = if prob(eps) > 0.5 { 1.0 } else { -1.0 };
    for _ in 0..40 {
        let a = prob(eps);
        if (dir > 0.0 && a <= 0.5) || (dir < 0.0 && a > 0.5) {
            break;
        }
        eps *= 2f64.powf(dir);
    }
    eps.clamp(1e-6, 2.0)
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: usize,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            m: 0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.m += 1;
        let m = self.m as f64;
        let w = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Samples the posterior of `m0`'s parameters given mean-removed data.
///
/// Components in each draw are relabelled in ascending w0 before summarizing.
/// Deterministic for a given seed.
pub fn hmc_fit(m0: &ShoModel, times: &[f64], values: &[f64], cfg: &HmcConfig, seed: u64) -> Result<PosteriorSummary> {
    m0.validate()?;
    if cfg.warmup >= cfg.steps || cfg.leapfrog_steps == 0 {
        return Err(Error::Config {
            key: "hmc".into(),
            reason: "need warmup < steps and leapfrog_steps >= 1".into(),
        });
    }
    let n_comp = m0.components.len();
    let target = Target {
        times,
        values,
        prior: PriorBox::for_data(n_comp, values),
    };
    let mut x0 = m0.to_params();
    target.prior.clamp(&mut x0);
    let (logp, grad) = target.eval(&x0).ok_or_else(|| Error::FactorizationFailure(0))?;
    let mut state = State { x: x0, logp, grad };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = state.x.len();
    let mut eps = initial_step_size(&target, &state, &mut rng);
    let mut adapt = DualAveraging::new(eps, cfg.target_accept);

    let n_keep = cfg.steps - cfg.warmup;
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(n_keep);
    let mut accepted = 0usize;
    let mut divergences = 0usize;

    for iter in 0..cfg.steps {
        let warm = iter < cfg.warmup;
        let p = sample_momentum(&mut rng, dim);
        let h0 = -state.logp + kinetic(&p);
        let (prob, proposal) = match leapfrog(&target, &state, &p, eps, cfg.leapfrog_steps) {
            Trajectory::Done(s, k) => {
                let h1 = -s.logp + k;
                if !warm && (!h1.is_finite() || h1 - h0 > cfg.max_energy_error) {
                    divergences += 1;
                }
                (accept_prob(h0, h1), Some(s))
            }
            Trajectory::Rejected => (0.0, None),
        };
        let u: f64 = rng.gen();
        let take = proposal.is_some() && u < prob;
        if take {
            state = proposal.expect("checked");
        }
        if warm {
            eps = adapt.update(prob);
            if iter + 1 == cfg.warmup {
                eps = adapt.final_step_size();
            }
        } else {
            accepted += take as usize;
            draws.push(relabel(&state.x, n_comp));
        }
    }

    let acceptance_rate = accepted as f64 / n_keep as f64;
    if acceptance_rate < cfg.min_accept {
        return Err(Error::DegenerateChain(acceptance_rate));
    }
    let names = param_names(n_comp);
    let params = (0..dim)
        .map(|i| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let std = sample_std(&col);
            col.sort_by(f64::total_cmp);
            ParamSummary {
                name: names[i].clone(),
                median: median_sorted(&col),
                std,
            }
        })
        .collect();
    Ok(PosteriorSummary {
        n_components: n_comp,
        params,
        acceptance_rate,
        divergences,
        n_samples: n_keep,
        step_size: eps,
        seed,
    })
}

fn relabel(x: &[f64], n_comp: usize) -> Vec<f64> {
    let mut comps: Vec<[f64; 3]> = (0..n_comp).map(|k| [x[3 * k], x[3 * k + 1], x[3 * k + 2]]).collect();
    comps.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut out: Vec<f64> = comps.into_iter().flatten().collect();
    out.push(x[3 * n_comp]);
    out
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}
