//! Rule-guided multi-hop reasoning on typed knowledge graphs.
//!
//! A walker trained with REINFORCE moves along graph edges from a query
//! entity; its terminal reward counts hitting the right answer and, scaled
//! by `lambda`, following a path whose metapath is the body of a known
//! cyclic rule. Inference ranks the tails reached by beam search, either
//! over all paths or only over rule-matching ones.

pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod policy;
pub mod rng;
pub mod rules;
pub mod synthetic;
pub mod training;

pub use error::{ConfigError, KgError, PolicyError, RuleError, TrainError};
pub use kg::{Action, Dataset, DatasetOptions, EntityId, Graph, RelationId, Triple, TypeId};
pub use policy::{PolicyConfig, PolicyParams, Rollout};
pub use rules::{InstancePath, Metapath, Rule, RuleSet};
