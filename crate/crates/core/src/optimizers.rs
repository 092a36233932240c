//! JAYA and PPO-ES, both driving a [`FitnessOracle`] and recording every
//! evaluation in an [`OptRun`].
//!
//! Both algorithms evaluate one generation at a time as a single batch, so
//! the oracle may run the points concurrently. All random draws come from
//! streams keyed by the run seed and the generation (and worker for PPO-ES),
//! which makes a run independent of thread count.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Bounds, ParamPoint};
use crate::objective::{Evaluation, FitnessOracle};
use crate::rng::{self, StreamRng};

const INIT_STREAM: u64 = 0x1417;
const ES_STREAM: u64 = 0xE5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "jaya")]
    Jaya,
    #[serde(rename = "ppo-es")]
    PpoEs,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Jaya => "jaya",
            Algorithm::PpoEs => "ppo-es",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaya" => Ok(Algorithm::Jaya),
            "ppo-es" => Ok(Algorithm::PpoEs),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    #[serde(flatten)]
    pub eval: Evaluation,
    pub algo: Algorithm,
    pub gen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRun {
    pub algorithm: Algorithm,
    pub config: Value,
    pub history: Vec<HistoryEntry>,
    pub best: Option<HistoryEntry>,
    /// Set when the run stopped early; the history up to that point is kept.
    pub failure: Option<String>,
}

impl OptRun {
    fn new(algorithm: Algorithm, config: Value) -> Self {
        Self {
            algorithm,
            config,
            history: Vec::new(),
            best: None,
            failure: None,
        }
    }

    fn record(&mut self, gen: usize, eval: Evaluation) {
        let entry = HistoryEntry {
            eval,
            algo: self.algorithm,
            gen,
        };
        if self.best.as_ref().is_none_or(|b| entry.eval.fitness < b.eval.fitness) {
            self.best = Some(entry.clone());
        }
        self.history.push(entry);
    }

    /// Best fitness seen after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .map(|h| {
                best = best.min(h.eval.fitness);
                best
            })
            .collect()
    }

    /// Writes `config.json`, `history.jsonl`, `timing.jsonl` and `best.json`
    /// into `dir`. The history holds physics only, so reruns reproduce it
    /// byte for byte; wall times go to `timing.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config = serde_json::to_string_pretty(&self.config).expect("config serializes");
        write_file(&dir.join("config.json"), config.as_bytes())?;
        let physics = |h: &HistoryEntry| {
            let mut record = serde_json::to_value(h).expect("history serializes");
            record.as_object_mut().unwrap().remove("ms");
            record
        };
        let mut lines = Vec::new();
        let mut timing = Vec::new();
        for h in &self.history {
            serde_json::to_writer(&mut lines, &physics(h)).expect("history serializes");
            lines.push(b'\n');
            let t = serde_json::json!({ "eval": h.eval.eval_index, "ms": h.eval.wall_time_ms });
            serde_json::to_writer(&mut timing, &t).expect("timing serializes");
            timing.push(b'\n');
        }
        write_file(&dir.join("history.jsonl"), &lines)?;
        write_file(&dir.join("timing.jsonl"), &timing)?;
        let summary = serde_json::json!({
            "algo": self.algorithm,
            "evaluations": self.history.len(),
            "best": self.best.as_ref().map(physics),
            "failure": self.failure,
        });
        let summary = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&dir.join("best.json"), summary.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Oracle over a plain scalar function, for exercising the optimizers on
/// analytic test problems. Records carry `k = 0` and `fast_flux = 0`.
pub struct FnOracle<F> {
    bounds: Bounds,
    f: F,
    next: AtomicU64,
}

impl<F: Fn(ParamPoint) -> f64 + Sync> FnOracle<F> {
    pub fn new(bounds: Bounds, f: F) -> Self {
        Self {
            bounds,
            f,
            next: AtomicU64::new(0),
        }
    }
}

impl<F: Fn(ParamPoint) -> f64 + Sync> FitnessOracle for FnOracle<F> {
    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn evaluate_batch(&self, points: &[ParamPoint]) -> Vec<Result<Evaluation>> {
        let first = self.next.fetch_add(points.len() as u64, Ordering::SeqCst);
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                self.bounds.check(p)?;
                Ok(Evaluation {
                    params: p,
                    k: 0.0,
                    k_std: 0.0,
                    fast_flux: 0.0,
                    fast_flux_std: 0.0,
                    fitness: (self.f)(p),
                    eval_index: first + i as u64,
                    wall_time_ms: 0.0,
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JAYA

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JayaConfig {
    pub pop_size: usize,
    pub max_evals: usize,
    pub seed: u64,
    /// Box the initial population is drawn from; the oracle bounds if unset.
    pub init_bounds: Option<Bounds>,
}

impl Default for JayaConfig {
    fn default() -> Self {
        Self {
            pop_size: 10,
            max_evals: 400,
            seed: 1,
            init_bounds: None,
        }
    }
}

impl JayaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 4 || self.max_evals < self.pop_size {
            return Err(Error::InvalidConfig(format!(
                "JAYA needs pop_size >= 4 and max_evals >= pop_size, got {} / {}",
                self.pop_size, self.max_evals
            )));
        }
        if let Some(b) = &self.init_bounds {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Individual {
    pub params: ParamPoint,
    pub fitness: Option<f64>,
}

fn fitness_of(ind: &Individual) -> f64 {
    ind.fitness.expect("individual evaluated")
}

/// Indices of the best and worst individual (first one wins ties).
pub fn best_and_worst(pop: &[Individual]) -> (usize, usize) {
    let mut best = 0;
    let mut worst = 0;
    for (i, ind) in pop.iter().enumerate() {
        if fitness_of(ind) < fitness_of(&pop[best]) {
            best = i;
        }
        if fitness_of(ind) > fitness_of(&pop[worst]) {
            worst = i;
        }
    }
    (best, worst)
}

/// The JAYA move for every individual, clipped to `bounds`. Draws `r1, r2`
/// per individual and dimension, in that order.
pub fn jaya_candidates(
    pop: &[Individual],
    best: &Individual,
    worst: &Individual,
    bounds: &Bounds,
    rng: &mut StreamRng,
) -> Vec<ParamPoint> {
    let b = best.params.to_array();
    let w = worst.params.to_array();
    pop.iter()
        .map(|ind| {
            let x = ind.params.to_array();
            let mut next = [0.0; 2];
            for j in 0..2 {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                next[j] = x[j] + r1 * (b[j] - x[j].abs()) - r2 * (w[j] - x[j].abs());
            }
            bounds.clip(ParamPoint::from_array(next))
        })
        .collect()
}

/// One JAYA generation with greedy replacement. Only the first `limit`
/// candidates are evaluated (the random draws do not depend on `limit`).
/// Returns the evaluation results in population order.
pub fn jaya_step(
    pop: &mut [Individual],
    oracle: &dyn FitnessOracle,
    rng: &mut StreamRng,
    limit: usize,
) -> Vec<Result<Evaluation>> {
    let (bi, wi) = best_and_worst(pop);
    let (best, worst) = (pop[bi], pop[wi]);
    let mut candidates = jaya_candidates(pop, &best, &worst, &oracle.bounds(), rng);
    candidates.truncate(limit);
    let results = oracle.evaluate_batch(&candidates);
    for (ind, res) in pop.iter_mut().zip(&results) {
        if let Ok(e) = res {
            if e.fitness < fitness_of(ind) {
                *ind = Individual {
                    params: e.params,
                    fitness: Some(e.fitness),
                };
            }
        }
    }
    results
}

/// Runs JAYA until `max_evals` evaluations have been spent.
pub fn jaya_run(cfg: &JayaConfig, oracle: &dyn FitnessOracle) -> Result<OptRun> {
    cfg.validate()?;
    let bounds = oracle.bounds();
    let init = cfg.init_bounds.unwrap_or(bounds);
    let mut run = OptRun::new(Algorithm::Jaya, serde_json::to_value(cfg).expect("config serializes"));

    let mut rng = rng::stream(&[cfg.seed, INIT_STREAM]);
    let start: Vec<ParamPoint> = (0..cfg.pop_size)
        .map(|_| {
            bounds.clip(ParamPoint::new(
                rng.gen_range(init.u_min..=init.u_max),
                rng.gen_range(init.w_min..=init.w_max),
            ))
        })
        .collect();
    let mut pop = Vec::with_capacity(cfg.pop_size);
    for res in oracle.evaluate_batch(&start) {
        match res {
            Ok(e) => {
                pop.push(Individual {
                    params: e.params,
                    fitness: Some(e.fitness),
                });
                run.record(0, e);
            }
            Err(e) => {
                run.failure = Some(e.to_string());
                return Ok(run);
            }
        }
    }

    let mut gen = 1;
    while run.history.len() < cfg.max_evals {
        let limit = cfg.max_evals - run.history.len();
        let mut rng = rng::stream(&[cfg.seed, gen as u64]);
        for res in jaya_step(&mut pop, oracle, &mut rng, limit) {
            match res {
                Ok(e) => run.record(gen, e),
                Err(e) => {
                    run.failure = Some(e.to_string());
                    return Ok(run);
                }
            }
        }
        gen += 1;
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// Policy network

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Multilayer perceptron with tanh hidden layers and a linear output giving
/// the mean of a diagonal Gaussian policy.
///
/// `weights` stores each layer as its `fan_out x fan_in` matrix (row-major)
/// followed by its `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub log_std: Vec<f64>,
}

pub fn weight_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|p| (p[0] + 1) * p[1]).sum()
}

impl PolicyNet {
    pub fn zeros(layer_sizes: &[usize], log_std: f64) -> Self {
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: vec![0.0; weight_count(layer_sizes)],
            log_std: vec![log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); *layer_sizes.last().unwrap()],
        }
    }

    /// Glorot-uniform weights, zero biases; the output layer is further
    /// multiplied by `output_scale`.
    pub fn random(layer_sizes: &[usize], log_std: f64, output_scale: f64, rng: &mut StreamRng) -> Self {
        let mut net = Self::zeros(layer_sizes, log_std);
        let n_layers = layer_sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (fi, fo) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fi + fo) as f64).sqrt();
            let scale = if l + 1 == n_layers { output_scale } else { 1.0 };
            for w in &mut net.weights[off..off + fi * fo] {
                *w = scale * rng.gen_range(-limit..limit);
            }
            off += (fi + 1) * fo;
        }
        net
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "bad layer sizes {:?}",
                self.layer_sizes
            )));
        }
        if self.weights.len() != weight_count(&self.layer_sizes) {
            return Err(Error::InvalidConfig(format!(
                "weight vector has {} entries, layer sizes need {}",
                self.weights.len(),
                weight_count(&self.layer_sizes)
            )));
        }
        if self.log_std.len() != self.action_dim()
            || self.log_std.iter().any(|s| !(LOG_STD_MIN..=LOG_STD_MAX).contains(s))
        {
            return Err(Error::InvalidConfig("log_std has wrong size or is out of range".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn action_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Layer activations, input first and the (linear) mean last.
    fn activations(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(state.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (fi, fo) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[off..off + fi * fo];
            let b = &self.weights[off + fi * fo..off + fi * fo + fo];
            let input = &acts[l];
            let out: Vec<f64> = (0..fo)
                .map(|o| {
                    let z = b[o] + w[o * fi..(o + 1) * fi].iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += (fi + 1) * fo;
        }
        acts
    }

    /// Accumulates `d(loss)/d(weights)` given `d(loss)/d(mean)`.
    fn backward(&self, acts: &[Vec<f64>], d_mean: &[f64], grad: &mut [f64]) {
        let n_layers = self.layer_sizes.len() - 1;
        let offsets: Vec<usize> = self
            .layer_sizes
            .windows(2)
            .scan(0, |off, p| {
                let here = *off;
                *off += (p[0] + 1) * p[1];
                Some(here)
            })
            .collect();
        let mut delta = d_mean.to_vec();
        for l in (0..n_layers).rev() {
            let (fi, fo) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..fo {
                for i in 0..fi {
                    grad[off + o * fi + i] += delta[o] * input[i];
                }
                grad[off + fi * fo + o] += delta[o];
            }
            if l > 0 {
                let w = &self.weights[off..off + fi * fo];
                delta = (0..fi)
                    .map(|i| {
                        let back: f64 = (0..fo).map(|o| w[o * fi + i] * delta[o]).sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }
}

/// Mean and standard deviation of the action distribution at `state`.
pub fn policy_forward(net: &PolicyNet, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mean = net.activations(state).pop().unwrap();
    let std = net.log_std.iter().map(|s| s.exp()).collect();
    (mean, std)
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) * (-s).exp();
            -0.5 * z * z - s - half_ln_2pi
        })
        .sum()
}

/// Draws an action from the policy at `state`; returns it with its log-density.
pub fn sample_action(net: &PolicyNet, state: &[f64], rng: &mut StreamRng) -> (Vec<f64>, f64) {
    let (mean, std) = policy_forward(net, state);
    let action: Vec<f64> = mean
        .iter()
        .zip(&std)
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lp = gaussian_log_prob(&mean, &net.log_std, &action);
    (action, lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob_old: f64,
    pub reward: f64,
}

/// Rewards minus their batch mean.
pub fn advantages(rollout: &[Transition]) -> Vec<f64> {
    let mean = rollout.iter().map(|t| t.reward).sum::<f64>() / rollout.len() as f64;
    rollout.iter().map(|t| t.reward - mean).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoGradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Clipped-surrogate loss `-mean(min(r A, clip(r, 1-eps, 1+eps) A))`.
pub fn ppo_loss(net: &PolicyNet, rollout: &[Transition], clip_eps: f64) -> f64 {
    let adv = advantages(rollout);
    let n = rollout.len() as f64;
    rollout
        .iter()
        .zip(&adv)
        .map(|(t, &a)| {
            let mean = net.activations(&t.state).pop().unwrap();
            let ratio = (gaussian_log_prob(&mean, &net.log_std, &t.action) - t.log_prob_old).exp();
            -(ratio * a).min(ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a) / n
        })
        .sum()
}

/// Loss and its analytic gradient with respect to the weights and `log_std`.
pub fn ppo_loss_and_grad(net: &PolicyNet, rollout: &[Transition], clip_eps: f64) -> PpoGradient {
    let adv = advantages(rollout);
    let n = rollout.len() as f64;
    let inv_std: Vec<f64> = net.log_std.iter().map(|s| (-s).exp()).collect();
    let mut grad_w = vec![0.0; net.weights.len()];
    let mut grad_s = vec![0.0; net.log_std.len()];
    let mut loss = 0.0;
    for (t, &a) in rollout.iter().zip(&adv) {
        let acts = net.activations(&t.state);
        let mean = acts.last().unwrap();
        let ratio = (gaussian_log_prob(mean, &net.log_std, &t.action) - t.log_prob_old).exp();
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        loss -= (ratio * a).min(clipped * a) / n;
        // The unclipped branch is the one selected by min (or both coincide).
        let active = clipped == ratio || ratio * a < clipped * a;
        if !active || a == 0.0 {
            continue;
        }
        // d(loss)/d(log_prob) = -A r / n
        let coef = -a * ratio / n;
        let z: Vec<f64> = mean
            .iter()
            .zip(&t.action)
            .zip(&inv_std)
            .map(|((m, x), is)| (x - m) * is)
            .collect();
        let d_mean: Vec<f64> = z.iter().zip(&inv_std).map(|(z, is)| coef * z * is).collect();
        for (g, z) in grad_s.iter_mut().zip(&z) {
            *g += coef * (z * z - 1.0);
        }
        net.backward(&acts, &d_mean, &mut grad_w);
    }
    PpoGradient {
        loss,
        weights: grad_w,
        log_std: grad_s,
    }
}

/// `n` on-policy transitions at uniform random states in [-1, 1] with
/// uniform random rewards in [-2, 0], for checking gradients.
pub fn synthetic_rollout(net: &PolicyNet, n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng::stream(&[seed, 99]);
    (0..n)
        .map(|_| {
            let state: Vec<f64> = (0..net.state_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (action, log_prob_old) = sample_action(net, &state, &mut rng);
            Transition {
                state,
                action,
                log_prob_old,
                reward: rng.gen_range(-2.0..0.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub n_params: usize,
}

/// Finite-difference step used by [`gradient_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that parameters whose true
/// gradient vanishes are judged by absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient with central differences over every weight
/// and `log_std` entry.
pub fn gradient_check(net: &PolicyNet, rollout: &[Transition], cfg: &PpoEsConfig) -> GradCheck {
    let analytic = ppo_loss_and_grad(net, rollout, cfg.ppo_clip_eps);
    let mut probe = net.clone();
    let mut check = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        n_params: 0,
    };
    let mut compare = |a: f64, numeric: f64| {
        let abs = (a - numeric).abs();
        check.max_abs_error = check.max_abs_error.max(abs);
        check.max_rel_error = check.max_rel_error.max(abs / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR));
        check.n_params += 1;
    };
    let h = GRAD_CHECK_STEP;
    for i in 0..net.weights.len() {
        probe.weights[i] = net.weights[i] + h;
        let up = ppo_loss(&probe, rollout, cfg.ppo_clip_eps);
        probe.weights[i] = net.weights[i] - h;
        let down = ppo_loss(&probe, rollout, cfg.ppo_clip_eps);
        probe.weights[i] = net.weights[i];
        compare(analytic.weights[i], (up - down) / (2.0 * h));
    }
    for j in 0..net.log_std.len() {
        probe.log_std[j] = net.log_std[j] + h;
        let up = ppo_loss(&probe, rollout, cfg.ppo_clip_eps);
        probe.log_std[j] = net.log_std[j] - h;
        let down = ppo_loss(&probe, rollout, cfg.ppo_clip_eps);
        probe.log_std[j] = net.log_std[j];
        compare(analytic.log_std[j], (up - down) / (2.0 * h));
    }
    check
}

/// `ppo_inner_iters` gradient-descent epochs of size `ppo_lr` on one rollout.
/// `log_std` is clamped to its allowed range after each step.
pub fn ppo_update(net: &PolicyNet, rollout: &[Transition], cfg: &PpoEsConfig) -> Result<PolicyNet> {
    if rollout.is_empty() {
        return Err(Error::InvalidConfig("empty rollout".into()));
    }
    let mut next = net.clone();
    for _ in 0..cfg.ppo_inner_iters {
        let g = ppo_loss_and_grad(&next, rollout, cfg.ppo_clip_eps);
        if !g.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss = {}", g.loss)));
        }
        if g.weights.iter().chain(&g.log_std).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient has non-finite entries".into()));
        }
        for (w, d) in next.weights.iter_mut().zip(&g.weights) {
            *w -= cfg.ppo_lr * d;
        }
        for (s, d) in next.log_std.iter_mut().zip(&g.log_std) {
            *s = (*s - cfg.ppo_lr * d).clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
    Ok(next)
}

// ---------------------------------------------------------------------------
// PPO-ES

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoEsConfig {
    pub es_pop: usize,
    pub es_sigma: f64,
    pub es_elite_frac: f64,
    /// Gradient epochs per worker rollout.
    pub ppo_inner_iters: usize,
    pub ppo_clip_eps: f64,
    pub ppo_lr: f64,
    /// Evaluations in each worker's rollout per generation.
    pub steps_per_update: usize,
    pub generations: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    /// Initial policy standard deviation in raw action space.
    pub init_std: f64,
}

impl Default for PpoEsConfig {
    fn default() -> Self {
        Self {
            es_pop: 8,
            es_sigma: 0.05,
            es_elite_frac: 0.5,
            ppo_inner_iters: 4,
            ppo_clip_eps: 0.2,
            ppo_lr: 3e-3,
            steps_per_update: 16,
            generations: 3,
            seed: 1,
            hidden_layers: vec![32, 32],
            init_std: 0.85,
        }
    }
}

impl PpoEsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.es_pop < 4 {
            return bad(format!("es_pop must be >= 4, got {}", self.es_pop));
        }
        if !(self.ppo_clip_eps > 0.0 && self.ppo_clip_eps < 1.0) {
            return bad(format!("ppo_clip_eps must be in (0, 1), got {}", self.ppo_clip_eps));
        }
        if !(self.es_elite_frac > 0.0 && self.es_elite_frac <= 1.0) {
            return bad(format!("es_elite_frac must be in (0, 1], got {}", self.es_elite_frac));
        }
        if !(self.es_sigma >= 0.0 && self.ppo_lr >= 0.0 && self.init_std > 0.0) {
            return bad("es_sigma and ppo_lr must be >= 0, init_std > 0".into());
        }
        if self.steps_per_update == 0 || self.generations == 0 {
            return bad("steps_per_update and generations must be >= 1".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2];
        sizes.extend(&self.hidden_layers);
        sizes.push(2);
        sizes
    }

    pub fn budget(&self) -> usize {
        self.generations * self.es_pop * self.steps_per_update
    }

    fn elite_count(&self) -> usize {
        ((self.es_elite_frac * self.es_pop as f64).ceil() as usize).clamp(1, self.es_pop)
    }
}

/// Maps a raw action onto the open parameter box.
pub fn squash(action: &[f64], bounds: &Bounds) -> ParamPoint {
    let lo = bounds.lower();
    let hi = bounds.upper();
    let v: [f64; 2] = std::array::from_fn(|j| lo[j] + (hi[j] - lo[j]) * 0.5 * (action[j].tanh() + 1.0));
    bounds.clip(ParamPoint::from_array(v))
}

/// Log-rank recombination weights for `n` elites, best first; they are
/// positive and sum to one.
pub fn elite_weights(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|i| ((n as f64) + 0.5).ln() - (i as f64).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|r| r / sum).collect()
}

/// `center + sum_i w_i (x_i - center)`: a convex combination of the `x_i`
/// that reproduces `center` exactly when every `x_i` equals it.
pub fn recombine(center: &[f64], members: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    (0..center.len())
        .map(|k| {
            center[k]
                + members
                    .iter()
                    .zip(weights)
                    .map(|(m, w)| w * (m[k] - center[k]))
                    .sum::<f64>()
        })
        .collect()
}

struct Worker {
    net: PolicyNet,
    rollout: Vec<Transition>,
    points: Vec<ParamPoint>,
}

/// Runs PPO-ES for `cfg.generations` generations.
///
/// Each generation perturbs the central policy's weights once per worker,
/// rolls out `steps_per_update` one-step episodes per worker (the state is the
/// previous normalized point, starting from the domain center), evaluates all
/// workers' points as one batch, applies [`ppo_update`] to each worker, and
/// recombines the best workers by mean reward into the next central policy.
pub fn ppo_es_run(cfg: &PpoEsConfig, oracle: &dyn FitnessOracle) -> Result<OptRun> {
    cfg.validate()?;
    let bounds = oracle.bounds();
    let mut run = OptRun::new(Algorithm::PpoEs, serde_json::to_value(cfg).expect("config serializes"));
    let mut init_rng = rng::stream(&[cfg.seed, INIT_STREAM]);
    let mut central = PolicyNet::random(&cfg.layer_sizes(), cfg.init_std.ln(), 0.01, &mut init_rng);
    let start_state = bounds.normalize(bounds.center()).to_vec();

    for gen in 0..cfg.generations {
        let mut noise_rng = rng::stream(&[cfg.seed, gen as u64, ES_STREAM]);
        let mut workers: Vec<Worker> = (0..cfg.es_pop)
            .map(|w| {
                let mut net = central.clone();
                for x in &mut net.weights {
                    *x += cfg.es_sigma * noise_rng.sample::<f64, _>(StandardNormal);
                }
                let mut rng = rng::stream(&[cfg.seed, gen as u64, w as u64]);
                let mut state = start_state.clone();
                let mut rollout = Vec::with_capacity(cfg.steps_per_update);
                let mut points = Vec::with_capacity(cfg.steps_per_update);
                for _ in 0..cfg.steps_per_update {
                    let (action, log_prob_old) = sample_action(&net, &state, &mut rng);
                    let p = squash(&action, &bounds);
                    rollout.push(Transition {
                        state: state.clone(),
                        action,
                        log_prob_old,
                        reward: 0.0,
                    });
                    points.push(p);
                    state = bounds.normalize(p).to_vec();
                }
                Worker { net, rollout, points }
            })
            .collect();

        let all: Vec<ParamPoint> = workers.iter().flat_map(|w| w.points.iter().copied()).collect();
        let mut results = oracle.evaluate_batch(&all).into_iter();
        let mut scores = Vec::with_capacity(cfg.es_pop);
        for worker in &mut workers {
            let mut ok = true;
            for t in &mut worker.rollout {
                match results.next().unwrap() {
                    Ok(e) => {
                        t.reward = -e.fitness;
                        run.record(gen, e);
                    }
                    Err(_) => ok = false,
                }
            }
            let score = if ok {
                worker.rollout.iter().map(|t| t.reward).sum::<f64>() / worker.rollout.len() as f64
            } else {
                f64::NEG_INFINITY
            };
            if ok {
                // A rejected update leaves the worker at its perturbed weights.
                if let Ok(updated) = ppo_update(&worker.net, &worker.rollout, cfg) {
                    worker.net = updated;
                }
            }
            scores.push(score);
        }

        let mut order: Vec<usize> = (0..cfg.es_pop).filter(|&i| scores[i].is_finite()).collect();
        if order.is_empty() {
            run.failure = Some(format!("every worker failed in generation {gen}"));
            return Ok(run);
        }
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(cfg.elite_count());
        let weights = elite_weights(order.len());
        let w_members: Vec<&[f64]> = order.iter().map(|&i| workers[i].net.weights.as_slice()).collect();
        let s_members: Vec<&[f64]> = order.iter().map(|&i| workers[i].net.log_std.as_slice()).collect();
        central = PolicyNet {
            layer_sizes: central.layer_sizes.clone(),
            weights: recombine(&central.weights, &w_members, &weights),
            log_std: recombine(&central.log_std, &s_members, &weights),
        };
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn sphere(p: ParamPoint) -> f64 {
        (p.u_density - 5.0).powi(2) + (p.w_density - 5.0).powi(2)
    }

    /// Straight transcription of the JAYA update on scalar arrays, drawing from
    /// the same streams, used as the reference trajectory.
    fn reference_jaya(seed: u64, pop_size: usize, gens: usize) -> Vec<f64> {
        let (lo, hi) = ([0.1, 0.001], [19.0, 25.0]);
        let f = |x: [f64; 2]| (x[0] - 5.0).powi(2) + (x[1] - 5.0).powi(2);
        let mut rng = rng::stream(&[seed, INIT_STREAM]);
        let mut xs: Vec<[f64; 2]> = (0..pop_size)
            .map(|_| [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])])
            .collect();
        let mut fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut best_per_gen = vec![fs.iter().cloned().fold(f64::INFINITY, f64::min)];
        for g in 1..=gens {
            let mut rng = rng::stream(&[seed, g as u64]);
            let mut bi = 0;
            let mut wi = 0;
            for i in 0..pop_size {
                if fs[i] < fs[bi] {
                    bi = i;
                }
                if fs[i] > fs[wi] {
                    wi = i;
                }
            }
            let (b, w) = (xs[bi], xs[wi]);
            let cands: Vec<[f64; 2]> = xs
                .iter()
                .map(|x| {
                    let mut c = [0.0; 2];
                    for j in 0..2 {
                        let r1: f64 = rng.gen();
                        let r2: f64 = rng.gen();
                        c[j] = (x[j] + r1 * (b[j] - x[j].abs()) - r2 * (w[j] - x[j].abs())).clamp(lo[j], hi[j]);
                    }
                    c
                })
                .collect();
            for (i, c) in cands.into_iter().enumerate() {
                let fc = f(c);
                if fc < fs[i] {
                    xs[i] = c;
                    fs[i] = fc;
                }
            }
            best_per_gen.push(fs.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        best_per_gen
    }

    #[test]
    fn jaya_fixed_point() {
        let p = ParamPoint::new(4.0, 2.0);
        let ind = Individual {
            params: p,
            fitness: Some(1.0),
        };
        let mut rng = rng::stream(&[1]);
        let out = jaya_candidates(&[ind; 3], &ind, &ind, &Bounds::default(), &mut rng);
        assert!(out.iter().all(|&c| c == p));
    }

    #[test]
    fn jaya_keeps_incumbent_when_candidate_is_worse() {
        // Best sits at the optimum; every move of the other individuals is
        // scored by a function that punishes any change.
        let anchor = ParamPoint::new(5.0, 5.0);
        let other = ParamPoint::new(9.0, 9.0);
        let oracle = FnOracle::new(Bounds::default(), move |p: ParamPoint| if p == other { 0.5 } else { 10.0 });
        let mut pop = vec![
            Individual {
                params: anchor,
                fitness: Some(0.1),
            },
            Individual {
                params: other,
                fitness: Some(0.5),
            },
        ];
        let mut rng = rng::stream(&[3]);
        let res = jaya_step(&mut pop, &oracle, &mut rng, 2);
        assert_eq!(res.len(), 2);
        assert_eq!(pop[0].params, anchor);
        assert_eq!(pop[1].params, other);
    }

    #[test]
    fn jaya_sphere_matches_reference_and_converges() {
        let cfg = JayaConfig {
            pop_size: 8,
            max_evals: 8 * 201,
            seed: 42,
            init_bounds: None,
        };
        let oracle = FnOracle::new(Bounds::default(), sphere);
        let run = jaya_run(&cfg, &oracle).unwrap();
        assert!(run.failure.is_none());
        assert_eq!(run.history.len(), cfg.max_evals);

        let reference = reference_jaya(42, 8, 200);
        for (g, expected) in reference.iter().enumerate() {
            let got = run
                .history
                .iter()
                .filter(|h| h.gen <= g)
                .map(|h| h.eval.fitness)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(got, *expected, "generation {g}");
        }
        let curve = run.best_so_far();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        let best = run.best.unwrap().eval.params;
        assert!(
            (best.u_density - 5.0).hypot(best.w_density - 5.0) < 0.1,
            "best {best:?}"
        );
    }

    #[test]
    fn jaya_respects_budget_and_bounds() {
        let cfg = JayaConfig {
            pop_size: 6,
            max_evals: 23,
            seed: 9,
            init_bounds: Some(Bounds {
                w_min: 5.0,
                ..Bounds::default()
            }),
        };
        let oracle = FnOracle::new(Bounds::default(), |p: ParamPoint| -p.w_density);
        let run = jaya_run(&cfg, &oracle).unwrap();
        assert_eq!(run.history.len(), 23);
        assert!(run.history[..6].iter().all(|h| h.eval.params.w_density >= 5.0));
        assert!(run.history.iter().all(|h| Bounds::default().contains(h.eval.params)));
        let best = run.best.as_ref().unwrap();
        assert_eq!(best.eval.fitness, run.best_so_far().last().copied().unwrap());
    }

    #[test]
    fn jaya_config_invariants() {
        assert!(JayaConfig {
            pop_size: 3,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(JayaConfig {
            max_evals: 5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_weights_give_zero_mean() {
        let net = PolicyNet::zeros(&[2, 5, 3], 0.0);
        let (m, s) = policy_forward(&net, &[0.3, -0.7]);
        assert_eq!(m, vec![0.0; 3]);
        assert_eq!(s, vec![1.0; 3]);
        assert_eq!(net.weights.len(), 3 * 5 + 6 * 3);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = PolicyNet::random(&[2, 8, 2], 0.0, 1.0, &mut rng::stream(&[7]));
        assert_eq!(policy_forward(&net, &[0.1, 0.2]), policy_forward(&net, &[0.1, 0.2]));
        net.validate().unwrap();
    }

    #[test]
    fn fresh_rollout_has_unit_ratio_and_unclipped_loss() {
        let net = PolicyNet::random(&[2, 8, 2], -0.3, 1.0, &mut rng::stream(&[4]));
        let rollout = synthetic_rollout(&net, 12, 4);
        let adv = advantages(&rollout);
        let expected = -adv.iter().sum::<f64>() / 12.0;
        assert!((ppo_loss(&net, &rollout, 0.2) - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = PpoEsConfig::default();
        let net = PolicyNet::random(&[2, 8, 2], -0.2, 1.0, &mut rng::stream(&[7]));
        let rollout = synthetic_rollout(&net, 16, 7);
        let check = gradient_check(&net, &rollout, &cfg);
        assert_eq!(check.n_params, weight_count(&[2, 8, 2]) + 2);
        assert!(check.max_rel_error < 1e-4, "{check:?}");
        assert_eq!(check, gradient_check(&net, &rollout, &cfg));

        // Off-policy samples exercise the clipped branch as well.
        let mut shifted = rollout.clone();
        for (i, t) in shifted.iter_mut().enumerate() {
            t.log_prob_old += if i % 2 == 0 { 0.5 } else { -0.5 };
        }
        assert!(gradient_check(&net, &shifted, &cfg).max_rel_error < 1e-4);
    }

    #[test]
    fn zero_advantage_gives_zero_gradient() {
        let cfg = PpoEsConfig::default();
        let net = PolicyNet::random(&[2, 8, 2], 0.0, 1.0, &mut rng::stream(&[8]));
        let mut rollout = synthetic_rollout(&net, 10, 8);
        for t in &mut rollout {
            t.reward = -0.5;
        }
        let g = ppo_loss_and_grad(&net, &rollout, cfg.ppo_clip_eps);
        assert!(g.weights.iter().chain(&g.log_std).all(|v| v.abs() < 1e-8));
        assert!(gradient_check(&net, &rollout, &cfg).max_abs_error < 1e-8);
        assert_eq!(ppo_update(&net, &rollout, &cfg).unwrap(), net);
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let cfg = PpoEsConfig::default();
        let net = PolicyNet::random(&[2, 4, 2], 0.0, 1.0, &mut rng::stream(&[2]));
        let mut rollout = synthetic_rollout(&net, 4, 2);
        rollout[0].reward = f64::NAN;
        assert!(matches!(ppo_update(&net, &rollout, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gaussian_bandit_converges_to_best_action() {
        let target = 0.3;
        let reward = |a: f64| -(a - target) * (a - target);
        let cfg = PpoEsConfig {
            ppo_inner_iters: 1,
            ppo_lr: 0.02,
            ..Default::default()
        };
        let mut net = PolicyNet::zeros(&[1, 1], (0.5f64).ln());
        let mut rng = rng::stream(&[11]);
        let state = vec![0.0];
        let mut updates = 0;
        while updates < 2000 {
            let rollout: Vec<Transition> = (0..16)
                .map(|_| {
                    let (action, log_prob_old) = sample_action(&net, &state, &mut rng);
                    let r = reward(action[0]);
                    Transition {
                        state: state.clone(),
                        action,
                        log_prob_old,
                        reward: r,
                    }
                })
                .collect();
            net = ppo_update(&net, &rollout, &cfg).unwrap();
            updates += 1;
            if (policy_forward(&net, &state).0[0] - target).abs() < 0.01 {
                break;
            }
        }
        // Exhaustive oracle: the expected reward -(a - t)^2 - sigma^2 is
        // maximized on a fine action grid at the target.
        let sigma2 = (2.0 * net.log_std[0]).exp();
        let oracle = (0..=2000)
            .map(|i| -1.0 + i as f64 * 1e-3)
            .max_by(|a, b| (reward(*a) - sigma2).total_cmp(&(reward(*b) - sigma2)))
            .unwrap();
        let mean = policy_forward(&net, &state).0[0];
        assert!((mean - oracle).abs() < 0.05, "mean {mean}, oracle {oracle}, {updates} updates");
    }

    #[test]
    fn elite_weights_are_a_decreasing_partition_of_unity() {
        for n in 1..10 {
            let w = elite_weights(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[0] > p[1]));
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    proptest! {
        #[test]
        fn recombination_stays_in_convex_hull(
            members in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 1..6),
            center in prop::collection::vec(-5.0..5.0f64, 3),
        ) {
            let refs: Vec<&[f64]> = members.iter().map(|m| m.as_slice()).collect();
            let w = elite_weights(refs.len());
            let out = recombine(&center, &refs, &w);
            for k in 0..3 {
                let lo = members.iter().map(|m| m[k]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|m| m[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[k] >= lo - 1e-9 && out[k] <= hi + 1e-9);
            }
        }

        #[test]
        fn squash_lands_inside_bounds(a in -50.0..50.0f64, b in -50.0..50.0f64) {
            let bounds = Bounds::default();
            prop_assert!(bounds.contains(squash(&[a, b], &bounds)));
        }
    }

    fn quadratic_oracle() -> FnOracle<impl Fn(ParamPoint) -> f64 + Sync> {
        FnOracle::new(Bounds::default(), |p: ParamPoint| {
            ((p.u_density - 12.0) / 19.0).powi(2) + ((p.w_density - 0.5) / 25.0).powi(2)
        })
    }

    #[test]
    fn ppo_es_budget_and_history() {
        let cfg = PpoEsConfig {
            generations: 2,
            es_pop: 4,
            steps_per_update: 5,
            hidden_layers: vec![8],
            ..Default::default()
        };
        let run = ppo_es_run(&cfg, &quadratic_oracle()).unwrap();
        assert_eq!(run.history.len(), cfg.budget());
        assert!(run.history.iter().all(|h| h.algo == Algorithm::PpoEs));
        assert_eq!(run.history.last().unwrap().gen, 1);
        let min = run.history.iter().map(|h| h.eval.fitness).fold(f64::INFINITY, f64::min);
        assert_eq!(run.best.unwrap().eval.fitness, min);
        let again = ppo_es_run(&cfg, &quadratic_oracle()).unwrap();
        assert_eq!(again.history, run.history);
    }

    #[test]
    fn ppo_es_without_perturbation_or_learning_keeps_the_policy() {
        // With es_sigma = 0 all workers start from the central weights; with a
        // zero learning rate their updates vanish, so recombination must give
        // back the same policy and the next generation samples from it again.
        let cfg = PpoEsConfig {
            generations: 2,
            es_pop: 4,
            steps_per_update: 3,
            es_sigma: 0.0,
            ppo_lr: 0.0,
            hidden_layers: vec![6],
            ..Default::default()
        };
        let run = ppo_es_run(&cfg, &quadratic_oracle()).unwrap();
        let central = PolicyNet::random(&cfg.layer_sizes(), cfg.init_std.ln(), 0.01, &mut rng::stream(&[cfg.seed, INIT_STREAM]));
        let bounds = Bounds::default();
        for gen in 0..2u64 {
            for w in 0..4u64 {
                let mut rng = rng::stream(&[cfg.seed, gen, w]);
                let mut state = bounds.normalize(bounds.center()).to_vec();
                for s in 0..3 {
                    let (a, _) = sample_action(&central, &state, &mut rng);
                    let p = squash(&a, &bounds);
                    let idx = (gen as usize * 4 + w as usize) * 3 + s;
                    assert_eq!(run.history[idx].eval.params, p);
                    state = bounds.normalize(p).to_vec();
                }
            }
        }
    }

    #[test]
    fn history_round_trips_through_jsonl() {
        let cfg = JayaConfig {
            pop_size: 4,
            max_evals: 9,
            seed: 1,
            init_bounds: None,
        };
        let run = jaya_run(&cfg, &FnOracle::new(Bounds::default(), sphere)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run.write(dir.path()).unwrap();
        let back = read_history(&dir.path().join("history.jsonl")).unwrap();
        assert_eq!(back.len(), run.history.len());
        for (a, b) in back.iter().zip(&run.history) {
            assert!(a.eval.same_physics(&b.eval));
            assert_eq!((a.algo, a.gen), (b.algo, b.gen));
        }
        let timing = fs::read_to_string(dir.path().join("timing.jsonl")).unwrap();
        assert_eq!(timing.lines().count(), run.history.len());
        let line = fs::read_to_string(dir.path().join("history.jsonl")).unwrap();
        let first: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(first["algo"], "jaya");
        assert_eq!(first["gen"], 0);
        assert!(first.get("ms").is_none());
        for key in ["eval", "u", "w", "k", "k_std", "flux", "flux_std", "fitness"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        let best: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("best.json")).unwrap()).unwrap();
        assert_eq!(best["best"]["fitness"], serde_json::json!(run.best.unwrap().eval.fitness));
        assert!(best["best"].get("ms").is_none());
    }
}
