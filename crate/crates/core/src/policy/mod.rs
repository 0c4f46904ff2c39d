//! The walking policy: entity/relation embeddings, an LSTM history encoder,
//! a two-layer action scorer and categorical action selection, together with
//! exact reverse-mode gradients through the unrolled walk.

mod lstm;
mod params;
mod scorer;
mod walk;

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;

pub use lstm::{lstm_step, LstmCache, LstmState};
pub use params::{axpy, dot, LstmLayer, Matrix, ParamBlock, PolicyParams};
pub use scorer::{sample_action, score_actions, ScorerCache, Selection};
pub use walk::{
    accumulate_gradients, available_actions, replay, rollout, ExcludedEdge, Observation, Rollout,
    StepRecord, WalkState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub embedding_dim: usize,
    pub lstm_layers: usize,
    /// Width of the LSTM state and of the scorer's hidden layer.
    pub hidden_dim: usize,
    pub path_length: usize,
    pub train_rollouts: usize,
    /// Beam width at inference.
    pub test_rollouts: usize,
    /// Cap on outgoing edges considered per node; the self-loop is always kept.
    pub max_actions: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            lstm_layers: 1,
            hidden_dim: 128,
            path_length: 3,
            train_rollouts: 30,
            test_rollouts: 100,
            max_actions: 400,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("lstm_layers", self.lstm_layers),
            ("hidden_dim", self.hidden_dim),
            ("path_length", self.path_length),
            ("train_rollouts", self.train_rollouts),
            ("test_rollouts", self.test_rollouts),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(PolicyError::InvalidConfig(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}
