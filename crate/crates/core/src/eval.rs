//! Inference and evaluation: beam search over policy-guided paths, standard
//! and rule-pruned tail ranking, filtered hits@k / MRR and rule diagnostics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::kg::{Action, EntityId, Graph, Triple};
use crate::policy::{PolicyConfig, PolicyParams, WalkState};
use crate::rules::{match_rules, InstancePath, RuleSet};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPath {
    pub path: InstancePath,
    /// Sum of the chosen actions' log-probabilities.
    pub log_prob: f64,
    pub rule: Option<usize>,
}

fn path_key(path: &InstancePath) -> impl Iterator<Item = Action> + '_ {
    path.relations
        .iter()
        .zip(&path.entities[1..])
        .map(|(r, e)| Action {
            relation: *r,
            target: *e,
        })
}

/// Orders paths by descending log-probability, then lexicographically by
/// their `(relation, entity)` step sequence.
pub fn compare_paths(a: &ScoredPath, b: &ScoredPath) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| path_key(&a.path).cmp(path_key(&b.path)))
}

/// Keeps the `beam_width` most probable partial paths at each of the
/// `path_length` levels, expanding every admissible action (self-loop included).
pub fn beam_search(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    source: EntityId,
    beam_width: usize,
) -> Vec<ScoredPath> {
    assert!(beam_width >= 1, "beam width must be at least 1");
    struct Beam {
        state: WalkState,
        path: InstancePath,
        log_prob: f64,
    }
    let mut beams = vec![Beam {
        state: WalkState::start(params, source),
        path: InstancePath::start(source),
        log_prob: 0.0,
    }];
    for _ in 0..config.path_length {
        let observations: Vec<_> = beams
            .iter()
            .map(|b| b.state.observe(graph, params, config.max_actions, None))
            .collect();
        let mut candidates: Vec<(usize, usize, ScoredPath)> = Vec::new();
        for (bi, (beam, obs)) in beams.iter().zip(&observations).enumerate() {
            for (ai, action) in obs.actions.iter().enumerate() {
                let mut path = beam.path.clone();
                path.push(action.relation, action.target);
                candidates.push((
                    bi,
                    ai,
                    ScoredPath {
                        path,
                        log_prob: beam.log_prob + obs.scorer.log_probs[ai],
                        rule: None,
                    },
                ));
            }
        }
        candidates.sort_by(|a, b| compare_paths(&a.2, &b.2));
        candidates.truncate(beam_width);
        beams = candidates
            .into_iter()
            .map(|(bi, ai, scored)| {
                let obs = &observations[bi];
                Beam {
                    state: beams[bi].state.advance(obs.clone(), obs.actions[ai]),
                    path: scored.path,
                    log_prob: scored.log_prob,
                }
            })
            .collect();
    }
    beams
        .into_iter()
        .map(|b| ScoredPath {
            path: b.path,
            log_prob: b.log_prob,
            rule: None,
        })
        .collect()
}

/// Fills in the matched rule of every path.
pub fn annotate_rules(graph: &Graph, paths: &mut [ScoredPath], rules: &RuleSet) {
    for p in paths {
        p.rule = match_rules(graph, &p.path, rules);
    }
}

/// Groups paths by terminal entity, scoring each entity by its best path.
/// With `prune_to_rules`, paths without a matching rule are ignored.
pub fn rank_targets(paths: &[ScoredPath], prune_to_rules: bool) -> Vec<(EntityId, f64)> {
    let mut best: BTreeMap<EntityId, f64> = BTreeMap::new();
    for p in paths.iter().filter(|p| !prune_to_rules || p.rule.is_some()) {
        let slot = best.entry(p.path.terminal()).or_insert(f64::NEG_INFINITY);
        if p.log_prob > *slot {
            *slot = p.log_prob;
        }
    }
    let mut ranked: Vec<(EntityId, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Filtered rank of `target`: one plus the number of candidates that are not
/// other known true tails and score strictly higher. `None` if unranked.
pub fn filtered_rank(
    candidates: &[(EntityId, f64)],
    target: EntityId,
    known: Option<&BTreeSet<EntityId>>,
) -> Option<usize> {
    let target_score = candidates.iter().find(|(e, _)| *e == target)?.1;
    let above = candidates
        .iter()
        .filter(|(e, s)| *e != target && !known.is_some_and(|k| k.contains(e)) && *s > target_score)
        .count();
    Some(above + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRanking {
    pub query: Triple,
    pub candidates: Vec<(EntityId, f64)>,
    pub rank: Option<usize>,
}

/// Rollout counts behind the rule-match rate and rule accuracy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RuleCounts {
    pub rollouts: usize,
    pub matched: usize,
    pub matched_correct: usize,
}

impl RuleCounts {
    pub fn merge(self, other: Self) -> Self {
        Self {
            rollouts: self.rollouts + other.rollouts,
            matched: self.matched + other.matched,
            matched_correct: self.matched_correct + other.matched_correct,
        }
    }

    pub fn match_rate(&self) -> f64 {
        if self.rollouts == 0 {
            0.0
        } else {
            self.matched as f64 / self.rollouts as f64
        }
    }

    /// `None` when no rollout matched a rule.
    pub fn accuracy(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.matched_correct as f64 / self.matched as f64)
    }
}

/// Counts rule-matching paths, and those among them ending at `target`.
pub fn rule_diagnostics(paths: &[ScoredPath], target: EntityId) -> RuleCounts {
    let matched: Vec<_> = paths.iter().filter(|p| p.rule.is_some()).collect();
    RuleCounts {
        rollouts: paths.len(),
        matched: matched.len(),
        matched_correct: matched
            .iter()
            .filter(|p| p.path.terminal() == target)
            .count(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: usize,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
    pub mrr: f64,
    pub rule_match_rate: f64,
    pub rule_accuracy: Option<f64>,
    #[serde(skip)]
    pub rankings: Vec<QueryRanking>,
}

/// Aggregates filtered, tail-sided metrics. Unranked targets count as misses
/// and contribute zero reciprocal rank.
pub fn filtered_metrics(rankings: Vec<QueryRanking>, rule_counts: RuleCounts) -> EvalReport {
    let n = rankings.len();
    let mut hits = [0usize; 3];
    let mut rr = 0.0;
    for q in &rankings {
        if let Some(rank) = q.rank {
            for (slot, k) in hits.iter_mut().zip([1, 3, 10]) {
                if rank <= k {
                    *slot += 1;
                }
            }
            rr += 1.0 / rank as f64;
        }
    }
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    EvalReport {
        queries: n,
        hits_at_1: mean(hits[0] as f64),
        hits_at_3: mean(hits[1] as f64),
        hits_at_10: mean(hits[2] as f64),
        mrr: mean(rr),
        rule_match_rate: rule_counts.match_rate(),
        rule_accuracy: rule_counts.accuracy(),
        rankings,
    }
}

#[derive(Clone, Debug)]
pub struct QueryResult {
    pub query: Triple,
    pub paths: Vec<ScoredPath>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub standard: EvalReport,
    pub pruned: EvalReport,
    pub results: Vec<QueryResult>,
}

/// Runs beam search from every distinct query head and scores the queries
/// under both ranking schemes.
pub fn evaluate(
    graph: &Graph,
    params: &PolicyParams,
    config: &PolicyConfig,
    rules: &RuleSet,
    queries: &[Triple],
    known: &BTreeMap<EntityId, BTreeSet<EntityId>>,
    beam_width: usize,
) -> Evaluation {
    let heads: BTreeSet<EntityId> = queries.iter().map(|q| q.head).collect();
    let heads: Vec<EntityId> = heads.into_iter().collect();
    let searched: HashMap<EntityId, Vec<ScoredPath>> = heads
        .par_iter()
        .map(|&h| {
            let mut paths = beam_search(graph, params, config, h, beam_width);
            annotate_rules(graph, &mut paths, rules);
            (h, paths)
        })
        .collect();

    let mut standard = Vec::with_capacity(queries.len());
    let mut pruned = Vec::with_capacity(queries.len());
    let mut counts = RuleCounts::default();
    let mut results = Vec::with_capacity(queries.len());
    for q in queries {
        let paths = &searched[&q.head];
        let known_tails = known.get(&q.head);
        for (prune, out) in [(false, &mut standard), (true, &mut pruned)] {
            let candidates = rank_targets(paths, prune);
            let rank = filtered_rank(&candidates, q.tail, known_tails);
            out.push(QueryRanking {
                query: *q,
                candidates,
                rank,
            });
        }
        counts = counts.merge(rule_diagnostics(paths, q.tail));
        results.push(QueryResult {
            query: *q,
            paths: paths.clone(),
        });
    }
    Evaluation {
        standard: filtered_metrics(standard, counts),
        pruned: filtered_metrics(pruned, counts),
        results,
    }
}

/// Best-scoring path reaching each entity, in ranking order.
pub fn explanations<'a>(
    paths: &'a [ScoredPath],
    ranking: &[(EntityId, f64)],
    prune_to_rules: bool,
) -> Vec<(EntityId, f64, &'a ScoredPath)> {
    ranking
        .iter()
        .filter_map(|(e, score)| {
            paths
                .iter()
                .filter(|p| p.path.terminal() == *e && (!prune_to_rules || p.rule.is_some()))
                .min_by(|a, b| compare_paths(a, b))
                .map(|p| (*e, *score, p))
        })
        .collect()
}

/// One JSON object per query: the query, filtered ranks under both schemes
/// and the top-k predictions with their explanation paths.
pub fn query_json(
    graph: &Graph,
    rules: &RuleSet,
    result: &QueryResult,
    standard: &QueryRanking,
    pruned: &QueryRanking,
    top_k: usize,
) -> serde_json::Value {
    let predictions: Vec<_> = explanations(&result.paths, &standard.candidates, false)
        .into_iter()
        .take(top_k)
        .map(|(e, score, p)| {
            json!({
                "entity": graph.entity_name(e),
                "score": score,
                "rule": p.rule.map(|i| rules.rules()[i].body.render(graph)),
                "path": p.path.collapse_no_op(graph.relations().no_op()).render(graph),
            })
        })
        .collect();
    json!({
        "head": graph.entity_name(result.query.head),
        "relation": graph.relation_name(result.query.relation),
        "tail": graph.entity_name(result.query.tail),
        "rank": standard.rank,
        "rank_pruned": pruned.rank,
        "predictions": predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RelationId;

    fn sp(entities: &[u32], log_prob: f64, rule: Option<usize>) -> ScoredPath {
        let mut path = InstancePath::start(EntityId(entities[0]));
        for e in &entities[1..] {
            path.push(RelationId(0), EntityId(*e));
        }
        ScoredPath {
            path,
            log_prob,
            rule,
        }
    }

    #[test]
    fn ranking_uses_max_path_score() {
        assert_eq!(
            rank_targets(&[sp(&[0, 7], -1.0, None)], false),
            vec![(EntityId(7), -1.0)]
        );
        let paths = [
            sp(&[0, 1, 5], -1.0, None),
            sp(&[0, 2, 5], -3.0, None),
            sp(&[0, 3, 6], -2.0, None),
        ];
        let ranked = rank_targets(&paths, false);
        assert_eq!(ranked, vec![(EntityId(5), -1.0), (EntityId(6), -2.0)]);
        assert!(rank_targets(&paths, true).is_empty());
    }

    #[test]
    fn ties_break_by_entity_id() {
        let paths = [sp(&[0, 9], -1.0, None), sp(&[0, 4], -1.0, None)];
        assert_eq!(
            rank_targets(&paths, false),
            vec![(EntityId(4), -1.0), (EntityId(9), -1.0)]
        );
    }

    #[test]
    fn filtered_rank_skips_other_true_tails() {
        let candidates = [
            (EntityId(1), -0.5),
            (EntityId(2), -1.0),
            (EntityId(3), -2.0),
        ];
        let known: BTreeSet<EntityId> = [EntityId(1), EntityId(2)].into();
        assert_eq!(
            filtered_rank(&candidates, EntityId(2), Some(&known)),
            Some(1)
        );
        assert_eq!(filtered_rank(&candidates, EntityId(2), None), Some(2));
        assert_eq!(
            filtered_rank(&candidates, EntityId(3), Some(&known)),
            Some(1)
        );
        assert_eq!(filtered_rank(&candidates, EntityId(8), Some(&known)), None);
    }

    #[test]
    fn metrics_from_ranks() {
        let q = |rank| QueryRanking {
            query: Triple::new(EntityId(0), RelationId(0), EntityId(1)),
            candidates: vec![],
            rank,
        };
        let report = filtered_metrics(vec![q(Some(1)), q(Some(4)), q(None)], RuleCounts::default());
        assert_eq!(report.queries, 3);
        assert!((report.hits_at_1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.hits_at_3 - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.hits_at_10 - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.mrr - 1.25 / 3.0).abs() < 1e-12);
        let empty = filtered_metrics(vec![], RuleCounts::default());
        assert_eq!(empty.queries, 0);
        assert_eq!(empty.mrr, 0.0);
        assert_eq!(empty.rule_accuracy, None);
    }

    #[test]
    fn rule_counts_arithmetic() {
        let none = rule_diagnostics(&[sp(&[0, 1], -1.0, None)], EntityId(1));
        assert_eq!(none.match_rate(), 0.0);
        assert_eq!(none.accuracy(), None);
        let paths = [
            sp(&[0, 1], -1.0, Some(0)),
            sp(&[0, 2], -1.0, Some(1)),
            sp(&[0, 1], -1.0, None),
            sp(&[0, 3], -1.0, None),
        ];
        let c = rule_diagnostics(&paths, EntityId(1));
        assert_eq!((c.match_rate(), c.accuracy()), (0.5, Some(0.5)));
    }
}
