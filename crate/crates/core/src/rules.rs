//! Cyclic rules over typed metapaths: parsing, matching of instance paths,
//! and confidence estimation by sampling body instances.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::RuleError;
use crate::kg::{EntityId, Graph, RelationId, RelationKind, TypeId};

/// A concrete walk `e_1 -r_1-> e_2 ... -r_n-> e_{n+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InstancePath {
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
}

impl InstancePath {
    pub fn start(source: EntityId) -> Self {
        Self {
            entities: vec![source],
            relations: Vec::new(),
        }
    }

    pub fn push(&mut self, relation: RelationId, entity: EntityId) {
        self.relations.push(relation);
        self.entities.push(entity);
    }

    pub fn source(&self) -> EntityId {
        self.entities[0]
    }

    pub fn terminal(&self) -> EntityId {
        *self.entities.last().expect("path has a source")
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Drops every `NO_OP` step.
    pub fn collapse_no_op(&self, no_op: RelationId) -> InstancePath {
        let mut out = InstancePath::start(self.source());
        for (r, e) in self.relations.iter().zip(&self.entities[1..]) {
            if *r != no_op {
                out.push(*r, *e);
            }
        }
        out
    }

    /// Renders `(E1 —r1→ E2 —r2→ E3)` with entity and relation names.
    pub fn render(&self, graph: &Graph) -> String {
        let mut s = String::from("(");
        s.push_str(graph.entity_name(self.entities[0]));
        for (r, e) in self.relations.iter().zip(&self.entities[1..]) {
            let _ = write!(
                s,
                " —{}→ {}",
                graph.relation_name(*r),
                graph.entity_name(*e)
            );
        }
        s.push(')');
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Metapath {
    pub types: Vec<TypeId>,
    pub relations: Vec<RelationId>,
}

impl Metapath {
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn render(&self, graph: &Graph) -> String {
        let mut s = String::from("(");
        s.push_str(graph.type_name(self.types[0]));
        for (r, t) in self.relations.iter().zip(&self.types[1..]) {
            let _ = write!(s, " —{}→ {}", graph.relation_name(*r), graph.type_name(*t));
        }
        s.push(')');
        s
    }
}

/// Type-level projection of a path, optionally with `NO_OP` steps removed.
pub fn path_metapath(graph: &Graph, path: &InstancePath, collapse_no_op: bool) -> Metapath {
    let owned;
    let path = if collapse_no_op {
        owned = path.collapse_no_op(graph.relations().no_op());
        &owned
    } else {
        path
    };
    Metapath {
        types: path.entities.iter().map(|e| graph.type_of(*e)).collect(),
        relations: path.relations.clone(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub head_relation: RelationId,
    pub head_source_type: TypeId,
    pub head_target_type: TypeId,
    pub body: Metapath,
    pub score: f64,
}

/// Rules sharing one head relation, with pairwise distinct bodies.
#[derive(Clone, Debug, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
    by_body: HashMap<Metapath, usize>,
    max_body_len: usize,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self, String> {
        let mut set = RuleSet::default();
        for rule in rules {
            set.push(rule)?;
        }
        Ok(set)
    }

    fn push(&mut self, rule: Rule) -> Result<(), String> {
        if let Some(first) = self.rules.first() {
            if first.head_relation != rule.head_relation {
                return Err("all rules must share one head relation".to_owned());
            }
        }
        if rule.body.is_empty() || rule.body.types.len() != rule.body.relations.len() + 1 {
            return Err("rule body must have n >= 1 relations and n + 1 types".to_owned());
        }
        if !(rule.score > 0.0 && rule.score <= 1.0) {
            return Err(format!("score {} is outside (0, 1]", rule.score));
        }
        if rule.body.types[0] != rule.head_source_type
            || *rule.body.types.last().unwrap() != rule.head_target_type
        {
            return Err("rule body does not connect the head's source and target types".to_owned());
        }
        if self.by_body.contains_key(&rule.body) {
            return Err("duplicate rule body".to_owned());
        }
        self.max_body_len = self.max_body_len.max(rule.body.len());
        self.by_body.insert(rule.body.clone(), self.rules.len());
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn max_body_len(&self) -> usize {
        self.max_body_len
    }

    pub fn head_relation(&self) -> Option<RelationId> {
        self.rules.first().map(|r| r.head_relation)
    }

    pub fn max_score(&self) -> f64 {
        self.rules.iter().map(|r| r.score).fold(0.0, f64::max)
    }

    /// Index of the rule whose body equals `metapath`.
    pub fn lookup(&self, metapath: &Metapath) -> Option<usize> {
        self.by_body.get(metapath).copied()
    }
}

/// Index of the rule whose body equals the `NO_OP`-collapsed metapath of
/// `path`. Bodies are distinct, so there is at most one.
pub fn match_rules(graph: &Graph, path: &InstancePath, rules: &RuleSet) -> Option<usize> {
    if rules.is_empty() {
        return None;
    }
    rules.lookup(&path_metapath(graph, path, true))
}

/// Reads a rule file: `score TAB head TAB T1 TAB r1 TAB T2 ... TAB Tn+1` per line.
pub fn load_rules(path: &Path, graph: &Graph) -> Result<RuleSet, RuleError> {
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_rules(&text, &path.display().to_string(), graph)
}

pub fn parse_rules(text: &str, origin: &str, graph: &Graph) -> Result<RuleSet, RuleError> {
    let mut set = RuleSet::default();
    let mut signature = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| RuleError::Parse {
            path: origin.to_owned(),
            line: line_no,
            message,
        };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 || (fields.len() - 2).is_multiple_of(2) {
            return Err(err(format!(
                "expected `score TAB head TAB type (TAB relation TAB type)+`, found {} fields",
                fields.len()
            )));
        }
        let score: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("invalid score `{}`", fields[0])))?;
        if !(score > 0.0 && score <= 1.0) {
            return Err(err(format!("score {score} is outside (0, 1]")));
        }
        let head = graph
            .relation_id(fields[1])
            .filter(|r| matches!(graph.relations().kind(*r), RelationKind::Base { .. }))
            .ok_or_else(|| err(format!("unknown head relation `{}`", fields[1])))?;

        let mut types = Vec::new();
        let mut relations = Vec::new();
        for (pos, field) in fields[2..].iter().enumerate() {
            if pos % 2 == 0 {
                types.push(
                    graph
                        .type_id(field)
                        .ok_or_else(|| err(format!("unknown type `{field}`")))?,
                );
            } else {
                let r = graph
                    .relation_id(field)
                    .filter(|r| *r != graph.relations().no_op())
                    .ok_or_else(|| err(format!("unknown relation `{field}`")))?;
                relations.push(r);
            }
        }

        let (domain, range) = signature
            .get_or_insert_with(|| (head, graph.relation_signature(head)))
            .1
            .clone();
        let source = types[0];
        let target = *types.last().unwrap();
        if (!domain.is_empty() && !domain.contains(&source))
            || (!range.is_empty() && !range.contains(&target))
        {
            return Err(err(format!(
                "rule is not cyclic: body runs {} -> {} but `{}` connects {} -> {}",
                graph.type_name(source),
                graph.type_name(target),
                fields[1],
                type_list(graph, &domain),
                type_list(graph, &range),
            )));
        }
        set.push(Rule {
            head_relation: head,
            head_source_type: source,
            head_target_type: target,
            body: Metapath { types, relations },
            score,
        })
        .map_err(err)?;
    }
    Ok(set)
}

fn type_list(graph: &Graph, types: &std::collections::BTreeSet<TypeId>) -> String {
    types
        .iter()
        .map(|t| graph.type_name(*t))
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceEstimate {
    pub score: f64,
    /// Number of sampled body instances.
    pub body_support: usize,
    /// Sampled instances whose endpoints satisfy the rule head.
    pub rule_support: usize,
    /// Exact number of body instances in the graph.
    pub body_instances: f64,
}

/// Estimates `P(head holds | body instance)` by drawing `num_samples` body
/// instances uniformly at random.
///
/// Sampling is exact-uniform over all instance paths matching the body:
/// completion counts are computed backwards along the body, the start entity
/// is drawn proportionally to its count and each step proportionally to the
/// count of the next entity. No walk can dead-end.
pub fn estimate_confidence<R: Rng>(
    graph: &Graph,
    rule: &Rule,
    num_samples: usize,
    rng: &mut R,
) -> Result<ConfidenceEstimate, RuleError> {
    if num_samples == 0 {
        return Err(RuleError::NoSamples);
    }
    let body = &rule.body;
    let n = body.len();
    let num_entities = graph.num_entities();

    // completions[k][v]: number of body suffixes starting at position k from v.
    let mut completions = vec![vec![0.0f64; num_entities]; n + 1];
    for (v, slot) in completions[n].iter_mut().enumerate() {
        if graph.type_of(EntityId(v as u32)) == body.types[n] {
            *slot = 1.0;
        }
    }
    for k in (0..n).rev() {
        let (head, tail) = completions.split_at_mut(k + 1);
        let next = &tail[0];
        for (v, slot) in head[k].iter_mut().enumerate() {
            let e = EntityId(v as u32);
            if graph.type_of(e) != body.types[k] {
                continue;
            }
            *slot = graph
                .neighbors_via(e, body.relations[k])
                .iter()
                .map(|a| next[a.target.index()])
                .sum();
        }
    }
    let total: f64 = completions[0].iter().sum();
    if total <= 0.0 {
        return Err(RuleError::ZeroSupport {
            body: body.render(graph),
        });
    }

    let start = WeightedIndex::new(&completions[0]).expect("positive total weight");
    let mut satisfied = 0usize;
    for _ in 0..num_samples {
        let source = EntityId(start.sample(rng) as u32);
        let mut current = source;
        for k in 0..n {
            let options = graph.neighbors_via(current, body.relations[k]);
            let weights = options.iter().map(|a| completions[k + 1][a.target.index()]);
            let pick = WeightedIndex::new(weights).expect("count > 0 implies a live edge");
            current = options[pick.sample(rng)].target;
        }
        if graph.has_edge(source, rule.head_relation, current) {
            satisfied += 1;
        }
    }
    Ok(ConfidenceEstimate {
        score: satisfied as f64 / num_samples as f64,
        body_support: num_samples,
        rule_support: satisfied,
        body_instances: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{build_graph, parse_triples, Dictionaries, GraphOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig2_graph() -> Graph {
        let triples = "\
Compound::Sorafenib\tbinds\tGene::AURKC
Compound::Pazopanib\tbinds\tGene::AURKC
Compound::Pazopanib\ttreats\tDisease::KidneyCancer
Compound::Sorafenib\ttreats\tDisease::LiverCancer
Disease::LiverCancer\tresembles\tDisease::KidneyCancer
Pharmacologic Class::PC1\tincludes\tCompound::Sorafenib
Compound::Sorafenib\tpalliates\tDisease::LiverCancer
Compound::Sorafenib\tresembles\tCompound::Pazopanib
Compound::Sorafenib\tcauses\tSide Effect::Rash
Disease::LiverCancer\tassociates\tGene::AURKC
Anatomy::Liver\texpresses\tGene::AURKC
Disease::LiverCancer\tlocalizes\tAnatomy::Liver
";
        let mut dicts = Dictionaries::default();
        let t = parse_triples(triples.as_bytes(), "fig2", &mut dicts).unwrap();
        build_graph(&dicts, &t, &GraphOptions::with_inverses(), &HashMap::new()).unwrap()
    }

    const TABLE3: &str = "\
0.446\ttreats\tCompound\tincludes_inv\tPharmacologic Class\tincludes\tCompound\ttreats\tDisease
0.265\ttreats\tCompound\tresembles\tCompound\tresembles\tCompound\ttreats\tDisease
0.184\ttreats\tCompound\tbinds\tGene\tassociates_inv\tDisease
0.182\ttreats\tCompound\tresembles\tCompound\ttreats\tDisease
0.169\ttreats\tCompound\tpalliates\tDisease\tpalliates_inv\tCompound\ttreats\tDisease
0.143\ttreats\tCompound\tbinds\tGene\tbinds_inv\tCompound\ttreats\tDisease
0.058\ttreats\tCompound\tcauses\tSide Effect\tcauses_inv\tCompound\ttreats\tDisease
0.040\ttreats\tCompound\ttreats\tDisease\tresembles\tDisease
0.017\ttreats\tCompound\tresembles\tCompound\tbinds\tGene\tassociates_inv\tDisease
0.004\ttreats\tCompound\tbinds\tGene\texpresses_inv\tAnatomy\tlocalizes_inv\tDisease
";

    fn path(g: &Graph, steps: &[&str]) -> InstancePath {
        let mut p = InstancePath::start(g.entity_id(steps[0]).unwrap());
        for pair in steps[1..].chunks(2) {
            p.push(
                g.relation_id(pair[0]).unwrap(),
                g.entity_id(pair[1]).unwrap(),
            );
        }
        p
    }

    #[test]
    fn parses_table_of_ten_rules() {
        let g = fig2_graph();
        let rules = parse_rules(TABLE3, "t3", &g).unwrap();
        assert_eq!(rules.len(), 10);
        assert_eq!(rules.rules()[0].score, 0.446);
        assert_eq!(rules.max_body_len(), 3);
        assert_eq!(
            rules.rules()[0].body.render(&g),
            "(Compound —includes_inv→ Pharmacologic Class —includes→ Compound —treats→ Disease)"
        );
    }

    #[test]
    fn rejects_duplicate_and_acyclic_rules() {
        let g = fig2_graph();
        let line = "0.5\ttreats\tCompound\tbinds\tGene\tassociates_inv\tDisease\n";
        let dup = format!("{line}{line}");
        assert!(matches!(
            parse_rules(&dup, "x", &g),
            Err(RuleError::Parse { line: 2, .. })
        ));
        let acyclic = "0.5\ttreats\tCompound\tresembles\tCompound\tbinds\tGene\n";
        assert!(matches!(
            parse_rules(acyclic, "x", &g),
            Err(RuleError::Parse { line: 1, .. })
        ));
        for bad in [
            "1.5\ttreats\tCompound\tbinds\tGene\tassociates_inv\tDisease",
            "0\ttreats\tCompound\tbinds\tGene\tassociates_inv\tDisease",
            "0.5\ttreats\tCompound\tfrobs\tGene\tassociates_inv\tDisease",
            "0.5\ttreats\tCompound\tbinds\tMineral\tassociates_inv\tDisease",
            "0.5\ttreats\tCompound\tbinds\tGene\tassociates_inv",
            "0.5\ttreats\tCompound\tNO_OP\tCompound\ttreats\tDisease",
        ] {
            assert!(parse_rules(bad, "x", &g).is_err(), "{bad}");
        }
        assert!(parse_rules("", "x", &g).unwrap().is_empty());
    }

    #[test]
    fn sorafenib_path_matches_binds_rule() {
        let g = fig2_graph();
        let rules = parse_rules(TABLE3, "t3", &g).unwrap();
        let p = path(
            &g,
            &[
                "Compound::Sorafenib",
                "binds",
                "Gene::AURKC",
                "binds_inv",
                "Compound::Pazopanib",
                "treats",
                "Disease::KidneyCancer",
            ],
        );
        let mp = path_metapath(&g, &p, true);
        let names: Vec<&str> = mp.types.iter().map(|t| g.type_name(*t)).collect();
        assert_eq!(names, ["Compound", "Gene", "Compound", "Disease"]);
        let idx = match_rules(&g, &p, &rules).unwrap();
        assert_eq!(rules.rules()[idx].score, 0.143);

        let wrong = path(
            &g,
            &[
                "Compound::Sorafenib",
                "binds",
                "Gene::AURKC",
                "binds_inv",
                "Compound::Pazopanib",
            ],
        );
        assert_eq!(match_rules(&g, &wrong, &rules), None);
    }

    #[test]
    fn no_op_steps_collapse_before_matching() {
        let g = fig2_graph();
        let rules = parse_rules(TABLE3, "t3", &g).unwrap();
        let p = path(
            &g,
            &[
                "Compound::Sorafenib",
                "treats",
                "Disease::LiverCancer",
                "NO_OP",
                "Disease::LiverCancer",
                "NO_OP",
                "Disease::LiverCancer",
            ],
        );
        let mp = path_metapath(&g, &p, true);
        assert_eq!(mp.len(), 1);
        assert_eq!(path_metapath(&g, &p, false).len(), 3);

        let padded = path(
            &g,
            &[
                "Compound::Sorafenib",
                "NO_OP",
                "Compound::Sorafenib",
                "binds",
                "Gene::AURKC",
                "associates_inv",
                "Disease::LiverCancer",
            ],
        );
        let idx = match_rules(&g, &padded, &rules).unwrap();
        assert_eq!(rules.rules()[idx].score, 0.184);

        let only_no_op = path(&g, &["Compound::Sorafenib", "NO_OP", "Compound::Sorafenib"]);
        let mp = path_metapath(&g, &only_no_op, true);
        assert_eq!(mp.types.len(), 1);
        assert!(mp.relations.is_empty());
    }

    #[test]
    fn confidence_is_one_when_every_body_instance_satisfies_the_head() {
        let g = fig2_graph();
        let rule_text = "0.5\ttreats\tCompound\tpalliates\tDisease\n";
        let rules = parse_rules(rule_text, "x", &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let est = estimate_confidence(&g, &rules.rules()[0], 200, &mut rng).unwrap();
        assert_eq!(est.score, 1.0);
        assert_eq!(est.body_support, 200);
        assert_eq!(est.body_instances, 1.0);
    }

    #[test]
    fn confidence_errors() {
        let g = fig2_graph();
        let rules = parse_rules(
            "0.5\ttreats\tCompound\tcauses\tSide Effect\tcauses_inv\tCompound\tpalliates\tDisease\n",
            "x",
            &g,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            estimate_confidence(&g, &rules.rules()[0], 0, &mut rng),
            Err(RuleError::NoSamples)
        ));
        // Pazopanib is the only other compound and palliates nothing.
        let est = estimate_confidence(&g, &rules.rules()[0], 10, &mut rng).unwrap();
        assert_eq!(est.body_instances, 1.0);
        let dead = parse_rules(
            "0.5\ttreats\tCompound\tcauses\tSide Effect\tcauses_inv\tCompound\tresembles\tCompound\tpalliates\tDisease\n",
            "x",
            &g,
        )
        .unwrap();
        assert!(matches!(
            estimate_confidence(&g, &dead.rules()[0], 10, &mut rng),
            Err(RuleError::ZeroSupport { .. })
        ));
    }
}
