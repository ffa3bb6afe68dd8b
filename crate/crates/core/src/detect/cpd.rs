//! Bayesian single change-point detection on a similarity series.
//!
//! Model:
//!
//! ```text
//! tau            ~ DiscreteUniform(0, n - 1)
//! mu_b, mu_a     ~ Normal(mean, 2 * sd)
//! sigma          ~ HalfNormal(sd)
//! x[t] | t < tau ~ Normal(mu_b, sigma)
//! x[t] | t >= tau~ Normal(mu_a, sigma)
//! ```
//!
//! where `mean` and `sd` are the series' own moments. The sampler is
//! Metropolis-within-Gibbs: Gaussian random-walk updates for the two means and
//! sigma, and an exact draw of `tau` from its discrete full conditional.
//! Random-walk step sizes are adapted during burn-in and frozen afterwards.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Verdict;
use crate::numeric;

pub const MIN_SERIES_LEN: usize = 8;
const TARGET_ACCEPT: f64 = 0.4;
const ADAPT_BATCH: usize = 50;

#[derive(Error, Debug, PartialEq)]
pub enum CpdError {
    #[error("series has {0} values; change-point detection needs at least {MIN_SERIES_LEN}")]
    SeriesTooShort(usize),
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("sample count must be positive")]
    NoSamples,
    #[error("strength of change is undefined when the two means average to zero")]
    ZeroMeanAverage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpdConfig {
    /// Posterior draws kept after burn-in.
    pub samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Percent; a strength above this declares a change.
    pub strength_threshold: f64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        CpdConfig { samples: 20_000, burn_in: 5_000, seed: 0, strength_threshold: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointEstimate {
    /// Posterior draw counts for each candidate index `0..n`.
    pub tau_posterior: Vec<u64>,
    /// Rounded posterior mean of tau.
    pub tau_point: usize,
    pub mu_before: f64,
    pub mu_after: f64,
    pub sigma: f64,
    /// Percent.
    pub strength_of_change: f64,
    pub changed: bool,
}

impl ChangePointEstimate {
    pub fn posterior_mode(&self) -> usize {
        self.tau_posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i)
    }

    /// Every value from `tau_point` on is an attack when a change was found.
    pub fn verdicts(&self, n: usize) -> Vec<Verdict> {
        (0..n)
            .map(|i| if self.changed && i >= self.tau_point { Verdict::Attack } else { Verdict::Benign })
            .collect()
    }

    /// `tau,count,probability` rows.
    pub fn write_posterior_csv<W: io::Write>(&self, sink: W) -> Result<(), csv::Error> {
        let total: u64 = self.tau_posterior.iter().sum();
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["tau", "count", "probability"])?;
        for (i, &c) in self.tau_posterior.iter().enumerate() {
            w.write_record([i.to_string(), c.to_string(), (c as f64 / total as f64).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sampler bookkeeping, mostly for tests and tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpdDiagnostics {
    /// Post-burn-in acceptance rates of the random-walk updates.
    pub accept_mu_before: f64,
    pub accept_mu_after: f64,
    pub accept_sigma: f64,
    /// Step sizes after adaptation, in the series' units.
    pub step_mu_before: f64,
    pub step_mu_after: f64,
    pub step_sigma: f64,
}

/// `|mu_before - mu_after|` relative to their average, in percent.
pub fn strength_of_change(mu_before: f64, mu_after: f64) -> Result<f64, CpdError> {
    let avg = 0.5 * (mu_before + mu_after);
    if avg == 0.0 {
        return Err(CpdError::ZeroMeanAverage);
    }
    // The absolute denominator keeps the percentage non-negative for
    // negative-valued (e.g. correlation) series.
    Ok((mu_before - mu_after).abs() / avg.abs() * 100.0)
}

pub fn change_point_detect(values: &[f64], config: &CpdConfig) -> Result<ChangePointEstimate, CpdError> {
    change_point_detect_with_diagnostics(values, config).map(|(e, _)| e)
}

/// Prefix sums of the centered series, for O(1) segment likelihoods.
struct Segments {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Segments {
    fn new(z: &[f64]) -> Self {
        let mut s1 = Vec::with_capacity(z.len() + 1);
        let mut s2 = Vec::with_capacity(z.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        for &v in z {
            s1.push(s1.last().unwrap() + v);
            s2.push(s2.last().unwrap() + v * v);
        }
        Segments { s1, s2 }
    }

    fn n(&self) -> usize {
        self.s1.len() - 1
    }

    /// Sum of squared deviations from `mu` over `lo..hi`.
    fn sse(&self, lo: usize, hi: usize, mu: f64) -> f64 {
        let len = (hi - lo) as f64;
        let sum = self.s1[hi] - self.s1[lo];
        let sq = self.s2[hi] - self.s2[lo];
        (sq - 2.0 * mu * sum + len * mu * mu).max(0.0)
    }

    fn sse_before(&self, tau: usize, mu: f64) -> f64 {
        self.sse(0, tau, mu)
    }

    fn sse_after(&self, tau: usize, mu: f64) -> f64 {
        self.sse(tau, self.n(), mu)
    }
}

struct Chain {
    tau: usize,
    mu_b: f64,
    mu_a: f64,
    sigma: f64,
}

/// Tracks acceptance for one random-walk coordinate.
#[derive(Clone, Copy)]
struct Walk {
    step: f64,
    batch_accepts: usize,
    batch_tries: usize,
    accepts: usize,
    tries: usize,
}

impl Walk {
    fn new(step: f64) -> Self {
        Walk { step, batch_accepts: 0, batch_tries: 0, accepts: 0, tries: 0 }
    }

    fn record(&mut self, accepted: bool, adapting: bool) {
        if adapting {
            self.batch_tries += 1;
            self.batch_accepts += usize::from(accepted);
            if self.batch_tries == ADAPT_BATCH {
                let rate = self.batch_accepts as f64 / ADAPT_BATCH as f64;
                self.step *= (2.0 * (rate - TARGET_ACCEPT)).exp();
                self.batch_tries = 0;
                self.batch_accepts = 0;
            }
        } else {
            self.tries += 1;
            self.accepts += usize::from(accepted);
        }
    }

    fn rate(&self) -> f64 {
        if self.tries == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }
}

fn log_normal_prior(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd) * (x / sd)
}

fn accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

pub fn change_point_detect_with_diagnostics(
    values: &[f64],
    config: &CpdConfig,
) -> Result<(ChangePointEstimate, CpdDiagnostics), CpdError> {
    let n = values.len();
    if n < MIN_SERIES_LEN {
        return Err(CpdError::SeriesTooShort(n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CpdError::NonFinite);
    }
    if config.samples == 0 {
        return Err(CpdError::NoSamples);
    }

    let center = numeric::mean(values);
    let sd = numeric::population_std(values);
    if sd == 0.0 {
        // Constant series: nothing to detect.
        let mut tau_posterior = vec![0; n];
        tau_posterior[0] = config.samples as u64;
        let est = ChangePointEstimate {
            tau_posterior,
            tau_point: 0,
            mu_before: center,
            mu_after: center,
            sigma: 0.0,
            strength_of_change: 0.0,
            changed: false,
        };
        let diag = CpdDiagnostics {
            accept_mu_before: f64::NAN,
            accept_mu_after: f64::NAN,
            accept_sigma: f64::NAN,
            step_mu_before: 0.0,
            step_mu_after: 0.0,
            step_sigma: 0.0,
        };
        return Ok((est, diag));
    }

    // Work on the centered series; priors on the means are then centered at 0.
    let z: Vec<f64> = values.iter().map(|v| v - center).collect();
    let seg = Segments::new(&z);
    let mu_prior_sd = 2.0 * sd;
    let sigma_prior_sd = sd;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = n / 2;
    let mut chain = Chain {
        tau: half,
        mu_b: numeric::mean(&z[..half]),
        mu_a: numeric::mean(&z[half..]),
        sigma: sd,
    };
    let initial_step = 0.1 * sd;
    let mut walk_b = Walk::new(initial_step);
    let mut walk_a = Walk::new(initial_step);
    let mut walk_s = Walk::new(initial_step);

    let mut tau_counts = vec![0u64; n];
    let mut tau_sum = 0.0;
    let mut mu_b_sum = 0.0;
    let mut mu_a_sum = 0.0;
    let mut sigma_sum = 0.0;
    let mut log_weights = vec![0.0; n];

    for iter in 0..config.burn_in + config.samples {
        let adapting = iter < config.burn_in;
        let inv2s2 = 0.5 / (chain.sigma * chain.sigma);

        // mu before the change
        let prop = chain.mu_b + walk_b.step * rng.sample::<f64, _>(StandardNormal);
        let log_ratio = (seg.sse_before(chain.tau, chain.mu_b) - seg.sse_before(chain.tau, prop)) * inv2s2
            + log_normal_prior(prop, mu_prior_sd)
            - log_normal_prior(chain.mu_b, mu_prior_sd);
        let ok = accept(&mut rng, log_ratio);
        if ok {
            chain.mu_b = prop;
        }
        walk_b.record(ok, adapting);

        // mu after the change
        let prop = chain.mu_a + walk_a.step * rng.sample::<f64, _>(StandardNormal);
        let log_ratio = (seg.sse_after(chain.tau, chain.mu_a) - seg.sse_after(chain.tau, prop)) * inv2s2
            + log_normal_prior(prop, mu_prior_sd)
            - log_normal_prior(chain.mu_a, mu_prior_sd);
        let ok = accept(&mut rng, log_ratio);
        if ok {
            chain.mu_a = prop;
        }
        walk_a.record(ok, adapting);

        // sigma (half-normal prior; proposals at or below zero are rejected)
        let prop = chain.sigma + walk_s.step * rng.sample::<f64, _>(StandardNormal);
        let ok = if prop > 0.0 {
            let sse = seg.sse_before(chain.tau, chain.mu_b) + seg.sse_after(chain.tau, chain.mu_a);
            let ll = |s: f64| -(n as f64) * s.ln() - sse * 0.5 / (s * s) + log_normal_prior(s, sigma_prior_sd);
            accept(&mut rng, ll(prop) - ll(chain.sigma))
        } else {
            false
        };
        if ok {
            chain.sigma = prop;
        }
        walk_s.record(ok, adapting);

        // tau from its full conditional
        let inv2s2 = 0.5 / (chain.sigma * chain.sigma);
        let mut max_lw = f64::NEG_INFINITY;
        for (k, lw) in log_weights.iter_mut().enumerate() {
            *lw = -(seg.sse_before(k, chain.mu_b) + seg.sse_after(k, chain.mu_a)) * inv2s2;
            max_lw = max_lw.max(*lw);
        }
        let total: f64 = log_weights.iter().map(|lw| (lw - max_lw).exp()).sum();
        let mut u = rng.random::<f64>() * total;
        chain.tau = n - 1;
        for (k, lw) in log_weights.iter().enumerate() {
            u -= (lw - max_lw).exp();
            if u <= 0.0 {
                chain.tau = k;
                break;
            }
        }

        if !adapting {
            tau_counts[chain.tau] += 1;
            tau_sum += chain.tau as f64;
            mu_b_sum += chain.mu_b;
            mu_a_sum += chain.mu_a;
            sigma_sum += chain.sigma;
        }
    }

    let m = config.samples as f64;
    let mu_before = center + mu_b_sum / m;
    let mu_after = center + mu_a_sum / m;
    let strength = strength_of_change(mu_before, mu_after)?;
    let est = ChangePointEstimate {
        tau_posterior: tau_counts,
        tau_point: ((tau_sum / m).round() as usize).min(n - 1),
        mu_before,
        mu_after,
        sigma: sigma_sum / m,
        strength_of_change: strength,
        changed: strength > config.strength_threshold,
    };
    let diag = CpdDiagnostics {
        accept_mu_before: walk_b.rate(),
        accept_mu_after: walk_a.rate(),
        accept_sigma: walk_s.rate(),
        step_mu_before: walk_b.step,
        step_mu_after: walk_a.step,
        step_sigma: walk_s.step,
    };
    Ok((est, diag))
}
