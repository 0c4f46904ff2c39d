use rand::Rng;

use super::params::{axpy, dot, PolicyParams};
use crate::kg::{Action, EntityId};

/// Forward values of the action scorer `softmax(A · W2 · relu(W1 · [h; e]))`.
#[derive(Clone, Debug)]
pub struct ScorerCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub activation: Vec<f64>,
    pub query: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub entropy: f64,
}

/// Scores every admissible action for the walker at `entity` with LSTM output `hidden`.
pub fn score_actions(
    params: &PolicyParams,
    hidden: &[f64],
    entity: EntityId,
    actions: &[Action],
) -> ScorerCache {
    let d = params.embedding_dim();
    let mut input = Vec::with_capacity(hidden.len() + d);
    input.extend_from_slice(hidden);
    input.extend_from_slice(params.entity.row(entity.index()));

    let mut pre_activation = vec![0.0; params.w1.rows];
    params.w1.matvec(&input, &mut pre_activation);
    let activation: Vec<f64> = pre_activation.iter().map(|z| z.max(0.0)).collect();
    let mut query = vec![0.0; 2 * d];
    params.w2.matvec(&activation, &mut query);

    let logits: Vec<f64> = actions
        .iter()
        .map(|a| {
            dot(params.relation.row(a.relation.index()), &query[..d])
                + dot(params.entity.row(a.target.index()), &query[d..])
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let log_probs: Vec<f64> = logits.iter().map(|l| l - log_norm).collect();
    let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    let entropy = -probs
        .iter()
        .zip(&log_probs)
        .map(|(p, l)| p * l)
        .sum::<f64>();

    ScorerCache {
        input,
        pre_activation,
        activation,
        query,
        log_probs,
        probs,
        entropy: entropy.max(0.0),
    }
}

impl ScorerCache {
    /// Gradient w.r.t. the logits of `logp_weight · log p[chosen] + entropy_weight · H`.
    pub fn logit_gradient(&self, chosen: usize, logp_weight: f64, entropy_weight: f64) -> Vec<f64> {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .enumerate()
            .map(|(j, (p, lp))| {
                let onehot = if j == chosen { 1.0 } else { 0.0 };
                logp_weight * (onehot - p) - entropy_weight * p * (lp + self.entropy)
            })
            .collect()
    }

    /// Backpropagates logit gradients into `grads`; returns the gradient
    /// w.r.t. the LSTM output that fed the scorer.
    pub fn backward(
        &self,
        params: &PolicyParams,
        entity: EntityId,
        actions: &[Action],
        d_logits: &[f64],
        grads: &mut PolicyParams,
    ) -> Vec<f64> {
        let d = params.embedding_dim();
        let mut d_query = vec![0.0; 2 * d];
        for (a, g) in actions.iter().zip(d_logits) {
            if *g == 0.0 {
                continue;
            }
            let (dq_rel, dq_ent) = d_query.split_at_mut(d);
            axpy(*g, params.relation.row(a.relation.index()), dq_rel);
            axpy(*g, params.entity.row(a.target.index()), dq_ent);
            axpy(
                *g,
                &self.query[..d],
                grads.relation.row_mut(a.relation.index()),
            );
            axpy(*g, &self.query[d..], grads.entity.row_mut(a.target.index()));
        }
        grads.w2.add_outer(&d_query, &self.activation);
        let mut d_act = vec![0.0; params.w2.cols];
        params.w2.matvec_t_add(&d_query, &mut d_act);
        for (da, z) in d_act.iter_mut().zip(&self.pre_activation) {
            if *z <= 0.0 {
                *da = 0.0;
            }
        }
        grads.w1.add_outer(&d_act, &self.input);
        let mut d_input = vec![0.0; params.w1.cols];
        params.w1.matvec_t_add(&d_act, &mut d_input);
        let hidden = d_input.len() - d;
        axpy(
            1.0,
            &d_input[hidden..],
            grads.entity.row_mut(entity.index()),
        );
        d_input.truncate(hidden);
        d_input
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Sample,
    /// Argmax, ties broken by the lowest index.
    Greedy,
}

/// Picks an action index from a probability vector.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], selection: Selection, rng: &mut R) -> usize {
    match selection {
        Selection::Greedy => {
            let mut best = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = i;
                }
            }
            best
        }
        Selection::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last_positive = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    last_positive = i;
                }
                acc += p;
                if u < acc {
                    return i;
                }
            }
            last_positive
        }
    }
}
