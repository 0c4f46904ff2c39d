//! Random fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use polo::eval::ScoredPath;
use polo::kg::{Action, Dataset, DatasetOptions, EntityId, Graph, RelationId, Triple};
use polo::policy::{replay, PolicyConfig, PolicyParams};
use polo::rules::{InstancePath, Metapath, Rule, RuleSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TYPES: [&str; 3] = ["Compound", "Disease", "Gene"];
pub const RELATIONS: [&str; 3] = ["binds", "resembles", "regulates"];

/// A random typed KG with a `treats` relation from compounds to diseases.
pub struct Fixture {
    pub background: Vec<[String; 3]>,
    pub train: Vec<[String; 3]>,
    pub valid: Vec<[String; 3]>,
    pub test: Vec<[String; 3]>,
}

fn entity_name(i: usize) -> String {
    format!("{}::e{i}", TYPES[i % 3])
}

/// `entities` entities, about `edges` background edges and `treats_pairs`
/// compound-disease pairs split between train, valid and test.
pub fn random_fixture(
    rng: &mut ChaCha8Rng,
    entities: usize,
    edges: usize,
    treats_pairs: usize,
) -> Fixture {
    let mut background = Vec::new();
    for _ in 0..edges {
        let h = rng.gen_range(0..entities);
        let t = rng.gen_range(0..entities);
        let r = RELATIONS.choose(rng).unwrap();
        background.push([entity_name(h), r.to_string(), entity_name(t)]);
    }
    let compounds: Vec<usize> = (0..entities).filter(|i| i % 3 == 0).collect();
    let diseases: Vec<usize> = (0..entities).filter(|i| i % 3 == 1).collect();
    let mut pairs = BTreeSet::new();
    for _ in 0..treats_pairs {
        pairs.insert((
            *compounds.choose(rng).unwrap(),
            *diseases.choose(rng).unwrap(),
        ));
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.shuffle(rng);
    let triples: Vec<[String; 3]> = pairs
        .iter()
        .map(|&(c, d)| [entity_name(c), "treats".to_string(), entity_name(d)])
        .collect();
    let n_train = triples.len().div_ceil(2);
    let n_valid = (triples.len() - n_train) / 3;
    Fixture {
        background,
        train: triples[..n_train].to_vec(),
        valid: triples[n_train..n_train + n_valid].to_vec(),
        test: triples[n_train + n_valid..].to_vec(),
    }
}

fn view(ts: &[[String; 3]]) -> Vec<[&str; 3]> {
    ts.iter()
        .map(|[h, r, t]| [h.as_str(), r.as_str(), t.as_str()])
        .collect()
}

impl Fixture {
    pub fn dataset(&self) -> Dataset {
        Dataset::from_named(
            &view(&self.background),
            &view(&self.train),
            &view(&self.valid),
            &view(&self.test),
            &HashMap::new(),
            &DatasetOptions::default(),
        )
        .expect("fixture is well formed")
    }

    /// Every `treats` pair of every split, by name.
    pub fn treats_pairs(&self) -> HashSet<(String, String)> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .map(|t| (t[0].clone(), t[2].clone()))
            .collect()
    }
}

/// Random parameters with embeddings scaled up so action scores differ visibly.
pub fn random_params(
    graph: &Graph,
    config: &PolicyConfig,
    rng: &mut ChaCha8Rng,
    scale: f64,
) -> PolicyParams {
    let mut params = PolicyParams::init(config, graph.num_entities(), graph.num_relations(), rng);
    for v in params
        .entity
        .data
        .iter_mut()
        .chain(params.relation.data.iter_mut())
    {
        *v *= scale;
    }
    params
}

/// Distinct cyclic compound -> disease metapaths observed in the graph,
/// of length 1..=`max_len` and without self-loops, turned into rules with random scores.
pub fn random_rules(
    graph: &Graph,
    max_len: usize,
    max_rules: usize,
    rng: &mut ChaCha8Rng,
) -> RuleSet {
    let treats = graph.relation_id("treats").unwrap();
    let compound = graph.type_id("Compound").unwrap();
    let disease = graph.type_id("Disease").unwrap();
    let no_op = graph.relations().no_op();
    let mut bodies = BTreeSet::new();
    let mut stack: Vec<(EntityId, Vec<RelationId>, Vec<polo::TypeId>)> = (0..graph.num_entities())
        .map(|i| EntityId(i as u32))
        .filter(|e| graph.type_of(*e) == compound)
        .map(|e| (e, vec![], vec![compound]))
        .collect();
    while let Some((e, rels, types)) = stack.pop() {
        if !rels.is_empty() && graph.type_of(e) == disease {
            bodies.insert((types.clone(), rels.clone()));
        }
        if rels.len() == max_len {
            continue;
        }
        for a in graph.neighbors(e) {
            if a.relation == no_op {
                continue;
            }
            let mut r = rels.clone();
            r.push(a.relation);
            let mut t = types.clone();
            t.push(graph.type_of(a.target));
            stack.push((a.target, r, t));
        }
    }
    let mut bodies: Vec<_> = bodies.into_iter().collect();
    bodies.shuffle(rng);
    bodies.truncate(max_rules);
    RuleSet::new(
        bodies
            .into_iter()
            .map(|(types, relations)| Rule {
                head_relation: treats,
                head_source_type: compound,
                head_target_type: disease,
                body: Metapath { types, relations },
                score: rng.gen_range(0.05..=1.0),
            })
            .collect(),
    )
    .unwrap()
}

/// Counts body instances of `rule` and those whose endpoints are a `treats` pair.
pub fn oracle_confidence(
    graph: &Graph,
    rule: &Rule,
    treats: &HashSet<(String, String)>,
) -> (usize, usize) {
    let body = &rule.body;
    let mut instances = 0;
    let mut satisfied = 0;
    let mut stack: Vec<(EntityId, EntityId, usize)> = (0..graph.num_entities())
        .map(|i| EntityId(i as u32))
        .filter(|e| graph.type_of(*e) == body.types[0])
        .map(|e| (e, e, 0))
        .collect();
    while let Some((source, e, k)) = stack.pop() {
        if k == body.relations.len() {
            instances += 1;
            let pair = (
                graph.entity_name(source).to_string(),
                graph.entity_name(e).to_string(),
            );
            if treats.contains(&pair) {
                satisfied += 1;
            }
            continue;
        }
        for a in graph.neighbors(e) {
            if a.relation == body.relations[k] && graph.type_of(a.target) == body.types[k + 1] {
                stack.push((source, a.target, k + 1));
            }
        }
    }
    (instances, satisfied)
}

/// Admissible actions at `e`: the first `max_actions` out-edges, then the self-loop.
pub fn oracle_actions(graph: &Graph, e: EntityId, max_actions: usize) -> Vec<Action> {
    let mut out: Vec<Action> = graph
        .neighbors(e)
        .iter()
        .take(max_actions)
        .copied()
        .collect();
    out.push(Action {
        relation: graph.relations().no_op(),
        target: e,
    });
    out
}

pub fn count_paths(graph: &Graph, source: EntityId, length: usize, max_actions: usize) -> usize {
    if length == 0 {
        return 1;
    }
    oracle_actions(graph, source, max_actions)
        .iter()
        .map(|a| count_paths(graph, a.target, length - 1, max_actions))
        .sum()
}

fn step_key(p: &InstancePath) -> Vec<(u32, u32)> {
    p.relations
        .iter()
        .zip(&p.entities[1..])
        .map(|(r, e)| (r.0, e.0))
        .collect()
}

/// Every length-L path from `source`, scored by replaying it under the policy
/// and sorted by (log-probability descending, step sequence).
pub fn enumerate_paths(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    source: EntityId,
) -> Vec<ScoredPath> {
    let mut partial = vec![InstancePath::start(source)];
    for _ in 0..config.path_length {
        partial = partial
            .into_iter()
            .flat_map(|p| {
                oracle_actions(graph, p.terminal(), config.max_actions)
                    .into_iter()
                    .map(move |a| {
                        let mut q = p.clone();
                        q.push(a.relation, a.target);
                        q
                    })
            })
            .collect();
    }
    let mut scored: Vec<ScoredPath> = partial
        .into_iter()
        .map(|path| {
            let r =
                replay(graph, params, config, &path, None).expect("enumerated path is admissible");
            ScoredPath {
                log_prob: r.log_prob(),
                path,
                rule: None,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.log_prob
            .partial_cmp(&a.log_prob)
            .unwrap_or(Ordering::Equal)
            .then_with(|| step_key(&a.path).cmp(&step_key(&b.path)))
    });
    scored
}

/// Whether the self-loop-free metapath of `path` equals some rule body.
pub fn oracle_matches(graph: &Graph, path: &InstancePath, rules: &RuleSet) -> bool {
    let no_op = graph.relations().no_op();
    let mut types = vec![graph.type_name(graph.type_of(path.entities[0])).to_string()];
    let mut rels = Vec::new();
    for (r, e) in path.relations.iter().zip(&path.entities[1..]) {
        if *r != no_op {
            rels.push(graph.relation_name(*r).to_string());
            types.push(graph.type_name(graph.type_of(*e)).to_string());
        }
    }
    rules.rules().iter().any(|rule| {
        let bt: Vec<_> = rule
            .body
            .types
            .iter()
            .map(|t| graph.type_name(*t).to_string())
            .collect();
        let br: Vec<_> = rule
            .body
            .relations
            .iter()
            .map(|r| graph.relation_name(*r).to_string())
            .collect();
        bt == types && br == rels
    })
}

#[derive(Debug, PartialEq)]
pub struct OracleReport {
    pub ranks: Vec<Option<usize>>,
    pub hits: [f64; 3],
    pub mrr: f64,
    pub match_rate: f64,
    pub accuracy: Option<f64>,
}

/// Filtered tail ranks computed over every entity of the graph: an entity's
/// score is its best path log-probability, other known true tails are skipped.
pub fn oracle_report(
    graph: &Graph,
    paths_by_head: &BTreeMap<EntityId, Vec<ScoredPath>>,
    queries: &[Triple],
    known: &HashSet<(String, String)>,
    rules: &RuleSet,
    pruned: bool,
) -> OracleReport {
    let mut ranks = Vec::new();
    let (mut rollouts, mut matched, mut matched_correct) = (0usize, 0usize, 0usize);
    for q in queries {
        let paths = &paths_by_head[&q.head];
        let score = |e: EntityId| -> Option<f64> {
            paths
                .iter()
                .filter(|p| {
                    p.path.terminal() == e && (!pruned || oracle_matches(graph, &p.path, rules))
                })
                .map(|p| p.log_prob)
                .fold(None, |acc: Option<f64>, x| {
                    Some(acc.map_or(x, |a| a.max(x)))
                })
        };
        let head_name = graph.entity_name(q.head).to_string();
        let rank = score(q.tail).map(|target| {
            1 + (0..graph.num_entities())
                .map(|i| EntityId(i as u32))
                .filter(|e| *e != q.tail)
                .filter(|e| {
                    !known.contains(&(head_name.clone(), graph.entity_name(*e).to_string()))
                })
                .filter(|e| score(*e).is_some_and(|s| s > target))
                .count()
        });
        ranks.push(rank);
        for p in paths {
            rollouts += 1;
            if oracle_matches(graph, &p.path, rules) {
                matched += 1;
                if p.path.terminal() == q.tail {
                    matched_correct += 1;
                }
            }
        }
    }
    let n = ranks.len();
    let mut hits = [0usize; 3];
    let mut rr = 0.0;
    for rank in ranks.iter().flatten() {
        for (slot, k) in hits.iter_mut().zip([1, 3, 10]) {
            if *rank <= k {
                *slot += 1;
            }
        }
        rr += 1.0 / *rank as f64;
    }
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    OracleReport {
        ranks,
        hits: [
            mean(hits[0] as f64),
            mean(hits[1] as f64),
            mean(hits[2] as f64),
        ],
        mrr: mean(rr),
        match_rate: if rollouts == 0 {
            0.0
        } else {
            matched as f64 / rollouts as f64
        },
        accuracy: (matched > 0).then(|| matched_correct as f64 / matched as f64),
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
