use rand::Rng;

use super::lstm::{lstm_step, LstmCache, LstmState};
use super::params::{axpy, PolicyParams};
use super::scorer::{sample_action, score_actions, ScorerCache, Selection};
use super::PolicyConfig;
use crate::error::PolicyError;
use crate::kg::{Action, EntityId, Graph, RelationId};
use crate::rules::InstancePath;

/// A query edge hidden from the walker (in both directions) while it answers
/// that query during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExcludedEdge {
    pub head: EntityId,
    pub relation: RelationId,
    pub inverse: RelationId,
    pub tail: EntityId,
}

impl ExcludedEdge {
    pub fn new(graph: &Graph, head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            inverse: graph.relations().inverse(relation),
            tail,
        }
    }

    fn hides(&self, at: EntityId, action: &Action) -> bool {
        (at == self.head && action.relation == self.relation && action.target == self.tail)
            || (at == self.tail && action.relation == self.inverse && action.target == self.head)
    }
}

/// Admissible actions at `entity`: the first `max_actions` outgoing edges in
/// adjacency order (minus any excluded edge), then the self-loop.
pub fn available_actions(
    graph: &Graph,
    entity: EntityId,
    max_actions: usize,
    exclude: Option<&ExcludedEdge>,
) -> Vec<Action> {
    let mut out: Vec<Action> = graph
        .neighbors(entity)
        .iter()
        .filter(|a| !exclude.is_some_and(|x| x.hides(entity, a)))
        .take(max_actions)
        .copied()
        .collect();
    out.push(Action {
        relation: graph.relations().no_op(),
        target: entity,
    });
    out
}

/// The part of the environment state the walker observes, plus its memory.
#[derive(Clone, Debug)]
pub struct WalkState {
    pub source: EntityId,
    pub current: EntityId,
    pub lstm: LstmState,
    /// Action taken on the previous step; `None` before the first step.
    pub previous: Option<Action>,
}

/// Everything computed at one decision point.
#[derive(Clone, Debug)]
pub struct Observation {
    pub actions: Vec<Action>,
    pub lstm_caches: Vec<LstmCache>,
    pub lstm: LstmState,
    pub scorer: ScorerCache,
}

impl WalkState {
    pub fn start(params: &PolicyParams, source: EntityId) -> Self {
        Self {
            source,
            current: source,
            lstm: LstmState::zeros(params.lstm.len(), params.hidden_dim()),
            previous: None,
        }
    }

    /// Embedding `[r; e]` of the previous action, or zeros before the first step.
    pub fn previous_embedding(&self, params: &PolicyParams) -> Vec<f64> {
        let d = params.embedding_dim();
        let mut v = vec![0.0; 2 * d];
        if let Some(a) = self.previous {
            v[..d].copy_from_slice(params.relation.row(a.relation.index()));
            v[d..].copy_from_slice(params.entity.row(a.target.index()));
        }
        v
    }

    /// Updates the history encoding with the previous action and scores the
    /// admissible actions at the current entity.
    pub fn observe(
        &self,
        graph: &Graph,
        params: &PolicyParams,
        max_actions: usize,
        exclude: Option<&ExcludedEdge>,
    ) -> Observation {
        let (lstm, lstm_caches) = lstm_step(params, &self.lstm, &self.previous_embedding(params));
        let actions = available_actions(graph, self.current, max_actions, exclude);
        let scorer = score_actions(params, lstm.top(), self.current, &actions);
        Observation {
            actions,
            lstm_caches,
            lstm,
            scorer,
        }
    }

    pub fn advance(&self, observation: Observation, action: Action) -> WalkState {
        WalkState {
            source: self.source,
            current: action.target,
            lstm: observation.lstm,
            previous: Some(action),
        }
    }
}

/// Forward record of one step, sufficient for backpropagation.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub entity: EntityId,
    pub input_action: Option<Action>,
    pub actions: Vec<Action>,
    pub lstm: Vec<LstmCache>,
    pub scorer: ScorerCache,
    pub chosen: usize,
}

/// One L-step walk with per-step log-probabilities and entropies.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub path: InstancePath,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub reward: f64,
    pub steps: Vec<StepRecord>,
}

impl Rollout {
    pub fn terminal(&self) -> EntityId {
        self.path.terminal()
    }

    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

fn walk(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    source: EntityId,
    exclude: Option<&ExcludedEdge>,
    mut choose: impl FnMut(usize, &Observation) -> Result<usize, PolicyError>,
) -> Result<Rollout, PolicyError> {
    let mut state = WalkState::start(params, source);
    let mut rollout = Rollout {
        path: InstancePath::start(source),
        log_probs: Vec::with_capacity(config.path_length),
        entropies: Vec::with_capacity(config.path_length),
        reward: 0.0,
        steps: Vec::with_capacity(config.path_length),
    };
    for step in 0..config.path_length {
        let obs = state.observe(graph, params, config.max_actions, exclude);
        let chosen = choose(step, &obs)?;
        let action = obs.actions[chosen];
        rollout.path.push(action.relation, action.target);
        rollout.log_probs.push(obs.scorer.log_probs[chosen]);
        rollout.entropies.push(obs.scorer.entropy);
        rollout.steps.push(StepRecord {
            entity: state.current,
            input_action: state.previous,
            actions: obs.actions.clone(),
            lstm: obs.lstm_caches.clone(),
            scorer: obs.scorer.clone(),
            chosen,
        });
        state = state.advance(obs, action);
    }
    Ok(rollout)
}

/// Samples (or greedily follows) `config.path_length` transitions from `source`.
pub fn rollout<R: Rng + ?Sized>(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    source: EntityId,
    exclude: Option<&ExcludedEdge>,
    selection: Selection,
    rng: &mut R,
) -> Rollout {
    walk(graph, params, config, source, exclude, |_, obs| {
        Ok(sample_action(&obs.scorer.probs, selection, rng))
    })
    .expect("sampling never fails")
}

/// Re-runs the policy along a fixed path, recomputing every step record.
pub fn replay(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    path: &InstancePath,
    exclude: Option<&ExcludedEdge>,
) -> Result<Rollout, PolicyError> {
    let config = PolicyConfig {
        path_length: path.len(),
        ..config.clone()
    };
    walk(
        graph,
        params,
        &config,
        path.source(),
        exclude,
        |step, obs| {
            let wanted = Action {
                relation: path.relations[step],
                target: path.entities[step + 1],
            };
            obs.actions
                .iter()
                .position(|a| *a == wanted)
                .ok_or(PolicyError::UnavailableAction {
                    step,
                    relation: wanted.relation.0,
                    entity: wanted.target.0,
                })
        },
    )
}

/// Adds to `grads` the gradient of
/// `logp_weight · Σ_l log π(a_l) + entropy_weight · Σ_l H_l`
/// for the actions recorded in `rollout`, backpropagating through time.
pub fn accumulate_gradients(
    params: &PolicyParams,
    rollout: &Rollout,
    logp_weight: f64,
    entropy_weight: f64,
    grads: &mut PolicyParams,
) {
    let layers = params.lstm.len();
    let width = params.hidden_dim();
    let d = params.embedding_dim();
    let mut d_hidden = vec![vec![0.0; width]; layers];
    let mut d_cell = vec![vec![0.0; width]; layers];

    for step in rollout.steps.iter().rev() {
        let d_logits = step
            .scorer
            .logit_gradient(step.chosen, logp_weight, entropy_weight);
        let mut from_above =
            step.scorer
                .backward(params, step.entity, &step.actions, &d_logits, grads);
        for k in (0..layers).rev() {
            axpy(1.0, &d_hidden[k], &mut from_above);
            let (d_input, dh_prev, dc_prev) =
                params.lstm[k].backward(&step.lstm[k], &from_above, &d_cell[k], &mut grads.lstm[k]);
            d_hidden[k] = dh_prev;
            d_cell[k] = dc_prev;
            from_above = d_input;
        }
        if let Some(a) = step.input_action {
            axpy(
                1.0,
                &from_above[..d],
                grads.relation.row_mut(a.relation.index()),
            );
            axpy(
                1.0,
                &from_above[d..],
                grads.entity.row_mut(a.target.index()),
            );
        }
    }
}
