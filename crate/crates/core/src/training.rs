//! Terminal reward with the rule bonus, and REINFORCE training with an
//! entropy bonus, a moving-average baseline, Adam and gradient clipping.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::eval::{evaluate, RuleCounts};
use crate::kg::{Dataset, Graph, Triple};
use crate::policy::{
    accumulate_gradients, rollout, ExcludedEdge, PolicyConfig, PolicyParams, Rollout, Selection,
};
use crate::rng::substream;
use crate::rules::{match_rules, InstancePath, RuleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BonusMode {
    /// `b = 1`: the rule bonus is paid whatever the terminal entity.
    Always,
    /// `b = 1{terminal = target}`.
    OnCorrect,
}

impl fmt::Display for BonusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BonusMode::Always => "always",
            BonusMode::OnCorrect => "on_correct",
        })
    }
}

impl FromStr for BonusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "always" => Ok(BonusMode::Always),
            "on_correct" => Ok(BonusMode::OnCorrect),
            _ => Err("expected `always` or `on_correct`".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
    pub b_mode: BonusMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            b_mode: BonusMode::Always,
        }
    }
}

/// `R = 1{terminal = target} + b·λ·s(M)` where `M` is the rule whose body
/// equals the path's metapath with self-loops removed.
pub fn compute_reward(
    graph: &Graph,
    path: &InstancePath,
    target: crate::kg::EntityId,
    rules: &RuleSet,
    config: &RewardConfig,
) -> f64 {
    let correct = if path.terminal() == target { 1.0 } else { 0.0 };
    let b = match config.b_mode {
        BonusMode::Always => 1.0,
        BonusMode::OnCorrect => correct,
    };
    let score = match_rules(graph, path, rules).map_or(0.0, |i| rules.rules()[i].score);
    correct + b * config.lambda * score
}

/// Exponential moving average `decay·prev + (1 − decay)·batch_mean`.
pub fn update_baseline(prev: f64, batch_mean_reward: f64, decay: f64) -> f64 {
    decay * prev + (1.0 - decay) * batch_mean_reward
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub entropy_beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub baseline_decay: f64,
    /// Global L2 norm cap on the gradient; non-positive disables clipping.
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            entropy_beta: 0.05,
            epochs: 20,
            batch_size: 64,
            baseline_decay: 0.95,
            grad_clip_norm: 5.0,
            seed: 20_200_911,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.entropy_beta.is_nan() || self.entropy_beta < 0.0 {
            return bad("entropy_beta must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates; `step` ascends or descends
/// depending on the sign convention of the supplied gradient (it subtracts).
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: PolicyParams,
    v: PolicyParams,
    t: u32,
}

impl Adam {
    pub fn new(params: &PolicyParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Applies `θ ← θ − lr·m̂/(√v̂ + ε)` for the loss gradient `grads`.
    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let g_blocks = grads.blocks();
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, m), v), g) in params
            .blocks_mut()
            .into_iter()
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
            .zip(g_blocks.iter())
        {
            for i in 0..p.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Scales `grads` down so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradient(grads: &mut PolicyParams, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Surrogate loss `−(1/N)·Σᵢ[(Rᵢ − b)·Σₗ log πₗ + β·Σₗ Hₗ]` over a batch of
/// rollouts, and its gradient accumulated into `grads`.
pub fn surrogate_loss(
    params: &PolicyParams,
    rollouts: &[Rollout],
    baseline: f64,
    entropy_beta: f64,
    grads: &mut PolicyParams,
) -> f64 {
    let n = rollouts.len().max(1) as f64;
    let mut loss = 0.0;
    for r in rollouts {
        let advantage = r.reward - baseline;
        loss -= (advantage * r.log_prob() + entropy_beta * r.entropies.iter().sum::<f64>()) / n;
        accumulate_gradients(params, r, -advantage / n, -entropy_beta / n, grads);
    }
    loss
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub mean_reward: f64,
    pub rule_match_rate: f64,
    pub rule_accuracy: Option<f64>,
    pub val_hits1_pruned: Option<f64>,
}

pub fn write_diagnostics_csv<W: Write>(
    out: &mut W,
    diagnostics: &[EpochDiagnostics],
) -> std::io::Result<()> {
    writeln!(
        out,
        "epoch,mean_reward,rule_match_rate,rule_accuracy,val_hits1_pruned"
    )?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for d in diagnostics {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            d.epoch,
            d.mean_reward,
            d.rule_match_rate,
            opt(d.rule_accuracy),
            opt(d.val_hits1_pruned)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: PolicyParams,
    /// Parameters with the best validation hits@1 (pruned); the final
    /// parameters when there is no validation split.
    pub best_params: PolicyParams,
    pub best_epoch: Option<usize>,
    pub diagnostics: Vec<EpochDiagnostics>,
}

/// Samples the rollouts of one batch against frozen parameters. Each rollout
/// draws from its own sub-stream, so the result does not depend on threading.
#[allow(clippy::too_many_arguments)]
fn sample_batch(
    dataset: &Dataset,
    rules: &RuleSet,
    params: &PolicyParams,
    policy: &PolicyConfig,
    reward: &RewardConfig,
    seed: u64,
    coords: [u64; 2],
    batch: &[Triple],
) -> Vec<Rollout> {
    let graph = &dataset.graph;
    let jobs: Vec<(usize, usize)> = (0..batch.len())
        .flat_map(|q| (0..policy.train_rollouts).map(move |k| (q, k)))
        .collect();
    jobs.par_iter()
        .map(|&(q, k)| {
            let query = batch[q];
            let exclude = ExcludedEdge::new(graph, query.head, query.relation, query.tail);
            let mut rng = substream(seed, "rollout", &[coords[0], coords[1], q as u64, k as u64]);
            let mut r = rollout(
                graph,
                params,
                policy,
                query.head,
                Some(&exclude),
                Selection::Sample,
                &mut rng,
            );
            r.reward = compute_reward(graph, &r.path, query.tail, rules, reward);
            r
        })
        .collect()
}

pub fn train(
    dataset: &Dataset,
    rules: &RuleSet,
    policy: &PolicyConfig,
    reward: &RewardConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    policy.validate()?;
    config.validate()?;
    if reward.lambda.is_nan() || reward.lambda < 0.0 {
        return Err(TrainError::InvalidConfig(
            "lambda must be non-negative".into(),
        ));
    }
    if dataset.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let graph = &dataset.graph;
    let mut init_rng = substream(config.seed, "init", &[]);
    let mut params = PolicyParams::init(
        policy,
        graph.num_entities(),
        graph.num_relations(),
        &mut init_rng,
    );
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut baseline = 0.0;
    let mut best: Option<(f64, usize, PolicyParams)> = None;
    let mut diagnostics = Vec::with_capacity(config.epochs);
    let known = dataset.all_known();
    let mut queries = dataset.train.clone();

    for epoch in 1..=config.epochs {
        queries.shuffle(&mut substream(
            config.seed,
            "graph-shuffle",
            &[epoch as u64],
        ));
        let mut reward_sum = 0.0;
        let mut counts = RuleCounts::default();
        for (b, batch) in queries.chunks(config.batch_size).enumerate() {
            let rollouts = sample_batch(
                dataset,
                rules,
                &params,
                policy,
                reward,
                config.seed,
                [epoch as u64, b as u64],
                batch,
            );
            let batch_reward: f64 = rollouts.iter().map(|r| r.reward).sum();
            for (i, r) in rollouts.iter().enumerate() {
                let target = batch[i / policy.train_rollouts].tail;
                let matched = match_rules(graph, &r.path, rules).is_some();
                counts = counts.merge(RuleCounts {
                    rollouts: 1,
                    matched: matched as usize,
                    matched_correct: (matched && r.terminal() == target) as usize,
                });
            }
            reward_sum += batch_reward;
            let mean_reward = batch_reward / rollouts.len() as f64;

            let mut grads = params.zeros_like();
            let loss = surrogate_loss(
                &params,
                &rollouts,
                baseline,
                config.entropy_beta,
                &mut grads,
            );
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: b,
                    baseline,
                    mean_reward,
                });
            }
            let norm = clip_gradient(&mut grads, config.grad_clip_norm);
            adam.step(&mut params, &grads);
            baseline = update_baseline(baseline, mean_reward, config.baseline_decay);
            debug!("epoch {epoch} batch {b}: loss {loss:.5} grad norm {norm:.4} baseline {baseline:.4}");
        }

        let val_hits1_pruned = (!dataset.valid.is_empty()).then(|| {
            let e = evaluate(
                graph,
                &params,
                policy,
                rules,
                &dataset.valid,
                known,
                policy.test_rollouts,
            );
            if rules.is_empty() {
                e.standard.hits_at_1
            } else {
                e.pruned.hits_at_1
            }
        });
        if let Some(h) = val_hits1_pruned {
            if best.as_ref().is_none_or(|(b, _, _)| h > *b) {
                best = Some((h, epoch, params.clone()));
            }
        }
        let d = EpochDiagnostics {
            epoch,
            mean_reward: reward_sum / (queries.len() * policy.train_rollouts) as f64,
            rule_match_rate: counts.match_rate(),
            rule_accuracy: counts.accuracy(),
            val_hits1_pruned,
        };
        info!(
            "epoch {epoch}: mean reward {:.4}, rule match {:.3}, val hits@1 (pruned) {}",
            d.mean_reward,
            d.rule_match_rate,
            val_hits1_pruned.map_or("-".to_string(), |h| format!("{h:.3}"))
        );
        diagnostics.push(d);
    }

    let (best_params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, Some(epoch)),
        None => (params.clone(), None),
    };
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_epoch,
        diagnostics,
    })
}
