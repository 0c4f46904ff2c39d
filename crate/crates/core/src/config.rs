//! Flat `key = value` run configuration covering the policy, reward and
//! training settings plus dataset and rule-confidence options.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::kg::{DatasetOptions, GraphOptions};
use crate::policy::PolicyConfig;
use crate::training::{RewardConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub policy: PolicyConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub query_relation: String,
    pub add_inverses: bool,
    pub no_inverse_relations: Vec<String>,
    pub confidence_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            query_relation: "treats".into(),
            add_inverses: true,
            no_inverse_relations: Vec::new(),
            confidence_samples: 5000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "embedding_dim",
    "hidden_dim",
    "lstm_layers",
    "path_length",
    "train_rollouts",
    "test_rollouts",
    "max_actions",
    "lambda",
    "b_mode",
    "learning_rate",
    "entropy_beta",
    "epochs",
    "batch_size",
    "baseline_decay",
    "grad_clip_norm",
    "seed",
    "query_relation",
    "add_inverses",
    "no_inverse_relations",
    "confidence_samples",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "embedding_dim" => self.policy.embedding_dim = parse(key, v)?,
            "hidden_dim" => self.policy.hidden_dim = parse(key, v)?,
            "lstm_layers" => self.policy.lstm_layers = parse(key, v)?,
            "path_length" => self.policy.path_length = parse(key, v)?,
            "train_rollouts" => self.policy.train_rollouts = parse(key, v)?,
            "test_rollouts" => self.policy.test_rollouts = parse(key, v)?,
            "max_actions" => self.policy.max_actions = parse(key, v)?,
            "lambda" => self.reward.lambda = parse(key, v)?,
            "b_mode" => self.reward.b_mode = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "entropy_beta" => self.train.entropy_beta = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "baseline_decay" => self.train.baseline_decay = parse(key, v)?,
            "grad_clip_norm" => self.train.grad_clip_norm = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "query_relation" => self.query_relation = v.to_string(),
            "add_inverses" => self.add_inverses = parse(key, v)?,
            "no_inverse_relations" => {
                self.no_inverse_relations = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "confidence_samples" => self.confidence_samples = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            if key.trim().is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_str(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: 1 })?;
        self.set(key, value)
    }

    /// Every key with its resolved value, one per line, in [`KEYS`] order.
    pub fn snapshot(&self) -> String {
        let p = &self.policy;
        let t = &self.train;
        let values: Vec<String> = vec![
            p.embedding_dim.to_string(),
            p.hidden_dim.to_string(),
            p.lstm_layers.to_string(),
            p.path_length.to_string(),
            p.train_rollouts.to_string(),
            p.test_rollouts.to_string(),
            p.max_actions.to_string(),
            format!("{:?}", self.reward.lambda),
            self.reward.b_mode.to_string(),
            format!("{:?}", t.learning_rate),
            format!("{:?}", t.entropy_beta),
            t.epochs.to_string(),
            t.batch_size.to_string(),
            format!("{:?}", t.baseline_decay),
            format!("{:?}", t.grad_clip_norm),
            t.seed.to_string(),
            self.query_relation.clone(),
            self.add_inverses.to_string(),
            self.no_inverse_relations.join(","),
            self.confidence_samples.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            query_relation: self.query_relation.clone(),
            graph: GraphOptions {
                add_inverses: self.add_inverses,
                no_inverse_relations: self
                    .no_inverse_relations
                    .iter()
                    .cloned()
                    .collect::<HashSet<_>>(),
            },
        }
    }
}
