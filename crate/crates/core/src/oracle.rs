//! Brute-force checks for the analytic results: trajectory simulation and
//! exact dynamic-programming enumeration of the last-visit law.
//!
//! Nothing here touches the fundamental-matrix machinery in `chain` or
//! `passage`, so agreement between the two is meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{ChainError, Result};
use crate::matrix::TransitionMatrix;

pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
pub const DEFAULT_CHUNK: u64 = 10_000;
/// Rejections allowed per accepted trajectory requested.
pub const REJECTION_FACTOR: u64 = 10_000;
pub const MAX_ENUMERATION_STATES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Number of accepted trajectories to collect.
    pub trajectories: u64,
    pub max_steps: u64,
    /// Accepted trajectories per deterministic work unit.
    pub chunk: u64,
}

impl SimConfig {
    pub fn new(seed: u64, trajectories: u64) -> Self {
        SimConfig {
            seed,
            trajectories,
            max_steps: DEFAULT_MAX_STEPS,
            chunk: DEFAULT_CHUNK,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories == 0 || self.max_steps == 0 || self.chunk == 0 {
            return Err(ChainError::InvalidArgument(
                "trajectories, max_steps and chunk must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Unbiased (n - 1) sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Normal-theory approximation `sqrt(2 / (n - 1)) s^2`.
    pub se_variance: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub acceptance_rate: f64,
}

impl SimEstimate {
    /// `(value - mean) / se_mean`.
    pub fn z_mean(&self, value: f64) -> f64 {
        (value - self.mean) / self.se_mean
    }

    pub fn z_variance(&self, value: f64) -> f64 {
        (value - self.variance) / self.se_variance
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    rejected: u64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.n == 0 {
            return Moments {
                rejected: a.rejected + b.rejected,
                ..b
            };
        }
        if b.n == 0 {
            return Moments {
                rejected: a.rejected + b.rejected,
                ..a
            };
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        let (na, nb, nf) = (a.n as f64, b.n as f64, n as f64);
        Moments {
            n,
            mean: a.mean + d * nb / nf,
            m2: a.m2 + b.m2 + d * d * na * nb / nf,
            rejected: a.rejected + b.rejected,
        }
    }

    fn estimate(self) -> SimEstimate {
        let n = self.n as f64;
        let variance = if self.n > 1 { self.m2 / (n - 1.0) } else { 0.0 };
        let (se_mean, se_variance) = if self.n > 1 {
            ((variance / n).sqrt(), (2.0 / (n - 1.0)).sqrt() * variance)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        SimEstimate {
            mean: self.mean,
            variance,
            se_mean,
            se_variance,
            accepted: self.n,
            rejected: self.rejected,
            acceptance_rate: n / (n + self.rejected as f64),
        }
    }
}

/// Sparse cumulative rows for inverse-CDF sampling.
struct Sampler {
    absorbing: Vec<bool>,
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(p: &TransitionMatrix) -> Self {
        let n = p.n();
        let mut absorbing = vec![false; n];
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for a in 0..n {
            let row = p.row(a);
            absorbing[a] = row[a] == 1.0;
            let mut t = Vec::new();
            let mut c = Vec::new();
            let mut acc = 0.0;
            for (b, &x) in row.iter().enumerate() {
                if x > 0.0 {
                    acc += x;
                    t.push(b);
                    c.push(acc);
                }
            }
            targets.push(t);
            cumulative.push(c);
        }
        Sampler {
            absorbing,
            targets,
            cumulative,
        }
    }

    #[inline]
    fn step(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        let c = &self.cumulative[state];
        let u = rng.random::<f64>() * c[c.len() - 1];
        let k = c.partition_point(|&x| x <= u).min(c.len() - 1);
        self.targets[state][k]
    }
}

/// One trajectory's outcome.
enum Draw {
    Accept(f64),
    Reject,
}

fn run_chunks<F>(cfg: &SimConfig, draw: F) -> Result<SimEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Draw> + Sync,
{
    cfg.validate()?;
    let chunks = cfg.trajectories.div_ceil(cfg.chunk);
    let abort = AtomicBool::new(false);
    let results: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let want = cfg.chunk.min(cfg.trajectories - c * cfg.chunk);
            let cap = want.saturating_mul(REJECTION_FACTOR);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c);
            let mut acc = Moments::default();
            while acc.n < want {
                if abort.load(Ordering::Relaxed) {
                    return Err(ChainError::Simulation("aborted".into()));
                }
                match draw(&mut rng) {
                    Ok(Draw::Accept(t)) => acc.push(t),
                    Ok(Draw::Reject) => {
                        acc.rejected += 1;
                        if acc.rejected > cap {
                            abort.store(true, Ordering::Relaxed);
                            return Err(ChainError::Simulation(format!(
                                "rejection cap of {cap} exceeded: target unreachable or acceptance too low"
                            )));
                        }
                    }
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        return Err(e);
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    // Report the first real failure rather than an induced abort.
    let mut level = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(m) => level.push(m),
            Err(ChainError::Simulation(msg)) if msg == "aborted" => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    if level.len() as u64 != chunks {
        return Err(ChainError::Simulation("aborted".into()));
    }
    // fixed pairwise tree, independent of scheduling
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => Moments::merge(*a, *b),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect();
    }
    Ok(level[0].estimate())
}

fn check_pair(p: &TransitionMatrix, states: &[usize]) -> Result<Sampler> {
    for &s in states {
        p.check_index(s)?;
    }
    let sampler = Sampler::new(p);
    for &s in states {
        if sampler.absorbing[s] {
            return Err(ChainError::NotTransient {
                state: p.label(s).to_string(),
            });
        }
    }
    Ok(sampler)
}

fn step_cap_error(cfg: &SimConfig) -> ChainError {
    ChainError::Simulation(format!(
        "trajectory exceeded {} steps; chain may not be absorbing",
        cfg.max_steps
    ))
}

/// Simulates from `i` to absorption and records the time of the last visit
/// to `j`; trajectories that never visit `j` after time 0 are rejected.
pub fn simulate_elapsed(p: &TransitionMatrix, i: usize, j: usize, cfg: &SimConfig) -> Result<SimEstimate> {
    let sampler = check_pair(p, &[i, j])?;
    run_chunks(cfg, |rng| {
        let mut state = i;
        let mut last = None;
        let mut t = 0u64;
        while !sampler.absorbing[state] {
            if t >= cfg.max_steps {
                return Err(step_cap_error(cfg));
            }
            state = sampler.step(state, rng);
            t += 1;
            if state == j {
                last = Some(t);
            }
        }
        Ok(last.map_or(Draw::Reject, |t| Draw::Accept(t as f64)))
    })
}

/// Simulates from `j` and records the first return time; trajectories that
/// absorb first are rejected.
pub fn simulate_recurrence(p: &TransitionMatrix, j: usize, cfg: &SimConfig) -> Result<SimEstimate> {
    let sampler = check_pair(p, &[j])?;
    run_chunks(cfg, |rng| {
        let mut state = j;
        let mut t = 0u64;
        loop {
            if t >= cfg.max_steps {
                return Err(step_cap_error(cfg));
            }
            state = sampler.step(state, rng);
            t += 1;
            if state == j {
                return Ok(Draw::Accept(t as f64));
            }
            if sampler.absorbing[state] {
                return Ok(Draw::Reject);
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    /// `distribution[t - 1] = P(T = t)`.
    pub distribution: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Mass beyond the horizon.
    pub residual: f64,
    /// Geometric tail bound on the mean's truncation error plus roundoff allowance.
    pub mean_bound: f64,
    pub variance_bound: f64,
}

/// Probability of ever visiting `j` (at time >= 0) from each state, by
/// monotone fixed-point iteration.
fn visit_probabilities(p: &TransitionMatrix, j: usize, absorbing: &[bool]) -> Result<Vec<f64>> {
    let n = p.n();
    let mut g = vec![0.0; n];
    g[j] = 1.0;
    for _ in 0..10_000_000u64 {
        let mut change = 0.0f64;
        for k in 0..n {
            if k == j || absorbing[k] {
                continue;
            }
            let v: f64 = p.row(k).iter().zip(&g).map(|(a, b)| a * b).sum();
            change = change.max((v - g[k]).abs());
            g[k] = v;
        }
        if change == 0.0 {
            return Ok(g);
        }
    }
    Err(ChainError::Enumeration("hitting probabilities did not converge".into()))
}

/// Exact last-visit law of `T` by forward propagation over the full chain,
/// stopped once the remaining mass is below `tail`.
pub fn enumerate_elapsed(p: &TransitionMatrix, i: usize, j: usize, tail: f64) -> Result<Enumeration> {
    let n = p.n();
    if n > MAX_ENUMERATION_STATES {
        return Err(ChainError::Enumeration(format!(
            "{n} states exceeds the limit of {MAX_ENUMERATION_STATES}"
        )));
    }
    if !(tail > 0.0 && tail <= 1e-6) {
        return Err(ChainError::InvalidArgument(format!("tail {tail} not in (0, 1e-6]")));
    }
    p.check_index(i)?;
    p.check_index(j)?;
    let absorbing: Vec<bool> = (0..n).map(|k| p.get(k, k) == 1.0).collect();
    for s in [i, j] {
        if absorbing[s] {
            return Err(ChainError::NotTransient {
                state: p.label(s).to_string(),
            });
        }
    }
    let g = visit_probabilities(p, j, &absorbing)?;
    let ret: f64 = p.row(j).iter().zip(&g).map(|(a, b)| a * b).sum();
    let reach = if i == j { ret } else { g[i] };
    if reach <= 0.0 {
        return Err(ChainError::ImpossiblePair {
            from: p.label(i).to_string(),
            to: p.label(j).to_string(),
            reason: "no path to the target".into(),
        });
    }
    let scale = (1.0 - ret) / reach;
    let pending = |pi: &[f64]| -> f64 {
        let mut s = pi[j] * ret;
        for k in 0..n {
            if k != j && !absorbing[k] {
                s += pi[k] * g[k];
            }
        }
        scale * s
    };

    let mut pi = vec![0.0; n];
    pi[i] = 1.0;
    let mut next = vec![0.0; n];
    let mut distribution = Vec::new();
    let mut ratios = std::collections::VecDeque::with_capacity(16);
    let mut prev_mass = 1.0;
    let mut residual = 1.0;
    let mut mass = 1.0;
    while residual >= tail {
        if distribution.len() >= crate::elapsed::DISTRIBUTION_CAP {
            return Err(ChainError::Enumeration("horizon cap reached".into()));
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..n {
            if pi[a] == 0.0 || absorbing[a] {
                continue;
            }
            for (b, x) in next.iter_mut().enumerate() {
                *x += pi[a] * p.get(a, b);
            }
        }
        std::mem::swap(&mut pi, &mut next);
        distribution.push(pi[j] * scale);
        residual = pending(&pi);
        mass = (0..n).filter(|&k| !absorbing[k]).map(|k| pi[k]).sum::<f64>();
        if prev_mass > 0.0 {
            if ratios.len() == 16 {
                ratios.pop_front();
            }
            ratios.push_back(mass / prev_mass);
        }
        prev_mass = mass;
    }

    let mean: f64 = distribution
        .iter()
        .enumerate()
        .map(|(k, q)| (k + 1) as f64 * q)
        .sum();
    let variance: f64 = distribution
        .iter()
        .enumerate()
        .map(|(k, q)| ((k + 1) as f64 - mean).powi(2) * q)
        .sum();

    let t = distribution.len() as f64;
    let rho = ratios
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .min(1.0 - 1e-12);
    let c = scale * mass;
    let g1 = rho / (1.0 - rho);
    let mean_tail = c * (t * g1 + rho / (1.0 - rho).powi(2));
    let second_tail = c
        * (t * t * g1 + 2.0 * t * rho / (1.0 - rho).powi(2) + rho * (1.0 + rho) / (1.0 - rho).powi(3));
    let roundoff = 1e-12 * (1.0 + mean);
    let mean_bound = mean_tail + roundoff;
    let variance_bound =
        second_tail + mean_tail * (2.0 * mean + mean_tail) + 1e-12 * (1.0 + variance + mean * mean);

    Ok(Enumeration {
        distribution,
        mean,
        variance,
        residual,
        mean_bound,
        variance_bound,
    })
}
