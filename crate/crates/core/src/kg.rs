//! Typed multi-relational graph: identifiers, triple files, inverse edges,
//! per-node action lists, data splits and type-level statistics.
//!
//! Entity names follow the `Type::Local` convention (`Gene::AURKC`), so the
//! type of an entity can be read off its name. An explicit `entity TAB type`
//! map may be supplied instead; when both are present they must agree.
//!
//! Relation ids are laid out as `[base relations | inverses | NO_OP]`. The
//! inverse of base relation `r` is named `r_inv`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::KgError;

pub const NO_OP: &str = "NO_OP";
pub const INVERSE_SUFFIX: &str = "_inv";

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Dense entity identifier.
    EntityId
);
id_type!(
    /// Dense relation identifier (base, inverse or `NO_OP`).
    RelationId
);
id_type!(
    /// Dense entity-type identifier.
    TypeId
);

/// Bijective name <-> dense id dictionary.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Entity and (base) relation dictionaries shared across all files of a dataset.
#[derive(Clone, Debug, Default)]
pub struct Dictionaries {
    pub entities: Vocab,
    pub relations: Vocab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Reads a triple file (`head TAB relation TAB tail` per line).
pub fn load_triples(path: &Path, dicts: &mut Dictionaries) -> Result<Vec<Triple>, KgError> {
    let file = fs::File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_triples(file, &path.display().to_string(), dicts)
}

/// Parses triples from any reader; `origin` is only used in error messages.
pub fn parse_triples<R: Read>(
    reader: R,
    origin: &str,
    dicts: &mut Dictionaries,
) -> Result<Vec<Triple>, KgError> {
    let mut triples = Vec::new();
    for (line_no, line) in read_lines(reader, origin)? {
        if line.is_empty() {
            continue;
        }
        let [h, r, t] = split_triple(&line).map_err(|(column, message)| KgError::Parse {
            path: origin.to_owned(),
            line: line_no,
            column,
            message,
        })?;
        triples.push(Triple {
            head: EntityId(dicts.entities.get_or_insert(h)),
            relation: RelationId(dicts.relations.get_or_insert(r)),
            tail: EntityId(dicts.entities.get_or_insert(t)),
        });
    }
    Ok(triples)
}

fn read_lines<R: Read>(reader: R, origin: &str) -> Result<Vec<(usize, String)>, KgError> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.map(|l| (i + 1, l)).map_err(|source| KgError::Io {
                path: origin.into(),
                source,
            })
        })
        .collect()
}

/// Splits one line into exactly three non-empty fields, or returns the
/// 1-based column of the first problem.
fn split_triple(line: &str) -> Result<[&str; 3], (usize, String)> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        let column = if fields.len() > 3 {
            fields[0].len() + fields[1].len() + fields[2].len() + 3
        } else {
            line.len() + 1
        };
        return Err((
            column,
            format!("expected 3 tab-separated fields, found {}", fields.len()),
        ));
    }
    let mut column = 1;
    for field in &fields {
        if field.is_empty() {
            return Err((column, "empty field".to_owned()));
        }
        column += field.len() + 1;
    }
    Ok([fields[0], fields[1], fields[2]])
}

/// Reads an `entity TAB type` map.
pub fn load_type_map(path: &Path) -> Result<HashMap<String, String>, KgError> {
    let file = fs::File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let origin = path.display().to_string();
    let mut map = HashMap::new();
    for (line_no, line) in read_lines(file, &origin)? {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(KgError::Parse {
                path: origin.clone(),
                line: line_no,
                column: 1,
                message: format!("expected `entity TAB type`, found {} fields", fields.len()),
            });
        }
        map.insert(fields[0].to_owned(), fields[1].to_owned());
    }
    Ok(map)
}

/// Resolves the type name of an entity from its `Type::Local` prefix and/or
/// an explicit map.
pub fn entity_type(name: &str, type_map: &HashMap<String, String>) -> Result<String, KgError> {
    let from_prefix = name
        .split_once("::")
        .map(|(prefix, _)| prefix)
        .filter(|prefix| !prefix.is_empty());
    match (from_prefix, type_map.get(name)) {
        (Some(prefix), Some(mapped)) if prefix != mapped => Err(KgError::Typing {
            entity: name.to_owned(),
            reason: format!("name prefix says `{prefix}` but the type map says `{mapped}`"),
        }),
        (_, Some(mapped)) => Ok(mapped.clone()),
        (Some(prefix), None) => Ok(prefix.to_owned()),
        (None, None) => Err(KgError::Typing {
            entity: name.to_owned(),
            reason: "no `Type::` prefix and no entry in the type map".to_owned(),
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationKind {
    Base { inverse: RelationId },
    Inverse { base: RelationId },
    NoOp,
}

/// Relation names and the inverse pairing between them.
#[derive(Clone, Debug)]
pub struct RelationTable {
    names: Vocab,
    kinds: Vec<RelationKind>,
    num_base: usize,
}

impl RelationTable {
    /// Builds `[base | base_inv | NO_OP]` from the base relation names.
    pub fn from_base(base: &Vocab) -> Result<Self, KgError> {
        let n = base.len();
        let mut names = Vocab::new();
        let mut kinds = Vec::with_capacity(2 * n + 1);
        for (i, name) in base.names().iter().enumerate() {
            names.get_or_insert(name);
            kinds.push(RelationKind::Base {
                inverse: RelationId((n + i) as u32),
            });
        }
        for (i, name) in base.names().iter().enumerate() {
            let inv = format!("{name}{INVERSE_SUFFIX}");
            if names.get(&inv).is_some() {
                return Err(KgError::RelationNameCollision(inv));
            }
            names.get_or_insert(&inv);
            kinds.push(RelationKind::Inverse {
                base: RelationId(i as u32),
            });
        }
        if names.get(NO_OP).is_some() {
            return Err(KgError::RelationNameCollision(NO_OP.to_owned()));
        }
        names.get_or_insert(NO_OP);
        kinds.push(RelationKind::NoOp);
        Ok(Self {
            names,
            kinds,
            num_base: n,
        })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn num_base(&self) -> usize {
        self.num_base
    }

    pub fn no_op(&self) -> RelationId {
        RelationId((2 * self.num_base) as u32)
    }

    pub fn kind(&self, r: RelationId) -> RelationKind {
        self.kinds[r.index()]
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        matches!(self.kind(r), RelationKind::Inverse { .. })
    }

    pub fn inverse(&self, r: RelationId) -> RelationId {
        match self.kind(r) {
            RelationKind::Base { inverse } => inverse,
            RelationKind::Inverse { base } => base,
            RelationKind::NoOp => r,
        }
    }

    pub fn name(&self, r: RelationId) -> &str {
        self.names.name(r.0)
    }

    pub fn id(&self, name: &str) -> Option<RelationId> {
        self.names.get(name).map(RelationId)
    }
}

/// One outgoing edge, or equivalently one admissible action `(relation, target)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub relation: RelationId,
    pub target: EntityId,
}

#[derive(Clone, Debug, Default)]
pub struct GraphOptions {
    pub add_inverses: bool,
    /// Base relation names that do not receive generated inverse edges.
    pub no_inverse_relations: HashSet<String>,
}

impl GraphOptions {
    pub fn with_inverses() -> Self {
        Self {
            add_inverses: true,
            no_inverse_relations: HashSet::new(),
        }
    }
}

/// Immutable typed graph with CSR adjacency sorted by `(relation, tail)`.
#[derive(Clone, Debug)]
pub struct Graph {
    entities: Vocab,
    relations: RelationTable,
    types: Vocab,
    type_of: Vec<TypeId>,
    offsets: Vec<usize>,
    edges: Vec<Action>,
    num_base_triples: usize,
}

/// Builds the graph over every entity in `dicts`.
pub fn build_graph(
    dicts: &Dictionaries,
    triples: &[Triple],
    options: &GraphOptions,
    type_map: &HashMap<String, String>,
) -> Result<Graph, KgError> {
    let relations = RelationTable::from_base(&dicts.relations)?;
    for name in &options.no_inverse_relations {
        if dicts.relations.get(name).is_none() {
            return Err(KgError::UnknownRelation(name.clone()));
        }
    }

    let mut types = Vocab::new();
    let mut type_of = Vec::with_capacity(dicts.entities.len());
    for name in dicts.entities.names() {
        let ty = entity_type(name, type_map)?;
        type_of.push(TypeId(types.get_or_insert(&ty)));
    }

    let num_entities = dicts.entities.len();
    let mut lists: Vec<Vec<Action>> = vec![Vec::new(); num_entities];
    let base: BTreeSet<Triple> = triples.iter().copied().collect();
    for t in &base {
        lists[t.head.index()].push(Action {
            relation: t.relation,
            target: t.tail,
        });
        let base_name = dicts.relations.name(t.relation.0);
        if options.add_inverses && !options.no_inverse_relations.contains(base_name) {
            lists[t.tail.index()].push(Action {
                relation: relations.inverse(t.relation),
                target: t.head,
            });
        }
    }

    let mut offsets = Vec::with_capacity(num_entities + 1);
    let mut edges = Vec::new();
    offsets.push(0);
    for mut list in lists {
        list.sort_unstable();
        list.dedup();
        edges.extend(list);
        offsets.push(edges.len());
    }

    Ok(Graph {
        entities: dicts.entities.clone(),
        relations,
        types,
        type_of,
        offsets,
        edges,
        num_base_triples: base.len(),
    })
}

impl Graph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_base_triples(&self) -> usize {
        self.num_base_triples
    }

    pub fn relations(&self) -> &RelationTable {
        &self.relations
    }

    pub fn types(&self) -> &Vocab {
        &self.types
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.0)
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.name(r)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.id(name)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get(name).map(TypeId)
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        self.types.name(t.0)
    }

    pub fn type_of(&self, e: EntityId) -> TypeId {
        self.type_of[e.index()]
    }

    /// Outgoing edges of `e` (without the self-loop), sorted by `(relation, tail)`.
    pub fn neighbors(&self, e: EntityId) -> &[Action] {
        &self.edges[self.offsets[e.index()]..self.offsets[e.index() + 1]]
    }

    /// Outgoing edges of `e` carrying relation `r`.
    pub fn neighbors_via(&self, e: EntityId, r: RelationId) -> &[Action] {
        let all = self.neighbors(e);
        let lo = all.partition_point(|a| a.relation < r);
        let hi = all.partition_point(|a| a.relation <= r);
        &all[lo..hi]
    }

    pub fn out_degree(&self, e: EntityId) -> usize {
        self.offsets[e.index() + 1] - self.offsets[e.index()]
    }

    pub fn has_edge(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.neighbors(head)
            .binary_search(&Action {
                relation,
                target: tail,
            })
            .is_ok()
    }

    /// Admissible actions at `e`: every outgoing edge followed by `(NO_OP, e)`.
    pub fn actions(&self, e: EntityId) -> Vec<Action> {
        let mut out = Vec::with_capacity(self.out_degree(e) + 1);
        out.extend_from_slice(self.neighbors(e));
        out.push(Action {
            relation: self.relations.no_op(),
            target: e,
        });
        out
    }

    /// Iterates over base (non-inverse) edges as triples.
    pub fn base_triples(&self) -> impl Iterator<Item = Triple> + '_ {
        (0..self.num_entities()).flat_map(move |h| {
            let head = EntityId(h as u32);
            self.neighbors(head)
                .iter()
                .filter(|a| matches!(self.relations.kind(a.relation), RelationKind::Base { .. }))
                .map(move |a| Triple::new(head, a.relation, a.target))
        })
    }

    /// Types observed as heads and as tails of base relation `r`.
    pub fn relation_signature(&self, r: RelationId) -> (BTreeSet<TypeId>, BTreeSet<TypeId>) {
        let mut domain = BTreeSet::new();
        let mut range = BTreeSet::new();
        for t in self.base_triples().filter(|t| t.relation == r) {
            domain.insert(self.type_of(t.head));
            range.insert(self.type_of(t.tail));
        }
        (domain, range)
    }

    pub fn summary(&self) -> GraphSummary {
        let entities = self.num_entities();
        GraphSummary {
            entities,
            relations: self.relations.num_base(),
            triples: self.num_base_triples,
            average_degree: if entities == 0 {
                0.0
            } else {
                2.0 * self.num_base_triples as f64 / entities as f64
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphSummary {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub average_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeStats {
    pub type_name: String,
    pub entities: usize,
    pub average_degree: f64,
}

/// Entity count and mean undirected degree (over base edges) per type.
pub fn type_statistics(graph: &Graph) -> Vec<TypeStats> {
    let mut degree = vec![0usize; graph.num_entities()];
    for t in graph.base_triples() {
        degree[t.head.index()] += 1;
        degree[t.tail.index()] += 1;
    }
    let mut per_type = vec![(0usize, 0usize); graph.types().len()];
    for (e, deg) in degree.iter().enumerate() {
        let slot = &mut per_type[graph.type_of(EntityId(e as u32)).index()];
        slot.0 += 1;
        slot.1 += deg;
    }
    per_type
        .into_iter()
        .enumerate()
        .filter(|(_, (count, _))| *count > 0)
        .map(|(t, (count, total))| TypeStats {
            type_name: graph.type_name(TypeId(t as u32)).to_owned(),
            entities: count,
            average_degree: total as f64 / count as f64,
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub query_relation: String,
    pub graph: GraphOptions,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            query_relation: "treats".to_owned(),
            graph: GraphOptions::with_inverses(),
        }
    }
}

/// Rollout graph plus query splits for one target relation.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub query_relation: RelationId,
    known: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

/// Raw triple lists of one dataset, in file order.
#[derive(Clone, Debug, Default)]
pub struct RawSplits {
    pub background: Vec<Triple>,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl Dataset {
    /// Loads `graph.txt`, `train.txt`, `valid.txt`, `test.txt` and the optional
    /// `types.tsv` from `dir`. Only `train.txt` is required.
    pub fn load(dir: &Path, options: &DatasetOptions) -> Result<Self, KgError> {
        let mut dicts = Dictionaries::default();
        let mut read = |name: &str, required: bool| -> Result<Vec<Triple>, KgError> {
            let path = dir.join(name);
            if !required && !path.exists() {
                return Ok(Vec::new());
            }
            load_triples(&path, &mut dicts)
        };
        let raw = RawSplits {
            background: read("graph.txt", false)?,
            train: read("train.txt", true)?,
            valid: read("valid.txt", false)?,
            test: read("test.txt", false)?,
        };
        let types_path = dir.join("types.tsv");
        let type_map = if types_path.exists() {
            load_type_map(&types_path)?
        } else {
            HashMap::new()
        };
        Self::assemble(dicts, raw, &type_map, options)
    }

    /// Builds a dataset from name triples held in memory.
    pub fn from_named(
        background: &[[&str; 3]],
        train: &[[&str; 3]],
        valid: &[[&str; 3]],
        test: &[[&str; 3]],
        type_map: &HashMap<String, String>,
        options: &DatasetOptions,
    ) -> Result<Self, KgError> {
        let mut dicts = Dictionaries::default();
        let mut resolve = |list: &[[&str; 3]]| -> Vec<Triple> {
            list.iter()
                .map(|[h, r, t]| Triple {
                    head: EntityId(dicts.entities.get_or_insert(h)),
                    relation: RelationId(dicts.relations.get_or_insert(r)),
                    tail: EntityId(dicts.entities.get_or_insert(t)),
                })
                .collect()
        };
        let raw = RawSplits {
            background: resolve(background),
            train: resolve(train),
            valid: resolve(valid),
            test: resolve(test),
        };
        Self::assemble(dicts, raw, type_map, options)
    }

    pub fn assemble(
        dicts: Dictionaries,
        raw: RawSplits,
        type_map: &HashMap<String, String>,
        options: &DatasetOptions,
    ) -> Result<Self, KgError> {
        let query = dicts
            .relations
            .get(&options.query_relation)
            .map(RelationId)
            .ok_or_else(|| KgError::UnknownRelation(options.query_relation.clone()))?;

        let restrict = |list: &[Triple], split: &str| -> Vec<Triple> {
            let mut seen = HashSet::new();
            let mut out = Vec::new();
            for t in list {
                if t.relation != query {
                    if split != "train" {
                        log::warn!(
                            "ignoring {split} triple with relation `{}`",
                            dicts.relations.name(t.relation.0)
                        );
                    }
                    continue;
                }
                if seen.insert(*t) {
                    out.push(*t);
                }
            }
            out
        };
        let train = restrict(&raw.train, "train");
        let valid = restrict(&raw.valid, "valid");
        let test = restrict(&raw.test, "test");

        let splits: [(&'static str, &[Triple]); 3] =
            [("train", &train), ("valid", &valid), ("test", &test)];
        for i in 0..splits.len() {
            let first: HashSet<&Triple> = splits[i].1.iter().collect();
            for (second_name, second) in &splits[i + 1..] {
                if let Some(t) = second.iter().find(|t| first.contains(t)) {
                    return Err(KgError::OverlappingSplits {
                        head: dicts.entities.name(t.head.0).to_owned(),
                        relation: dicts.relations.name(t.relation.0).to_owned(),
                        tail: dicts.entities.name(t.tail.0).to_owned(),
                        first: splits[i].0,
                        second: second_name,
                    });
                }
            }
        }

        let held_out: HashSet<Triple> = valid.iter().chain(&test).copied().collect();
        let mut graph_triples = Vec::with_capacity(raw.background.len() + raw.train.len());
        let mut dropped = 0usize;
        for t in raw.background.iter().chain(&raw.train) {
            if held_out.contains(t) {
                dropped += 1;
            } else {
                graph_triples.push(*t);
            }
        }
        if dropped > 0 {
            log::warn!("removed {dropped} held-out query triples from the rollout graph");
        }

        let graph = build_graph(&dicts, &graph_triples, &options.graph, type_map)?;

        let mut known: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
        for t in train.iter().chain(&valid).chain(&test) {
            known.entry(t.head).or_default().insert(t.tail);
        }

        Ok(Self {
            graph,
            train,
            valid,
            test,
            query_relation: query,
            known,
        })
    }

    /// Every known true tail of `(head, query_relation, ·)` across all splits.
    pub fn known_tails(&self, head: EntityId) -> Option<&BTreeSet<EntityId>> {
        self.known.get(&head)
    }

    pub fn all_known(&self) -> &BTreeMap<EntityId, BTreeSet<EntityId>> {
        &self.known
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_from(lines: &str, options: &GraphOptions) -> Graph {
        let mut dicts = Dictionaries::default();
        let triples = parse_triples(lines.as_bytes(), "inline", &mut dicts).unwrap();
        build_graph(&dicts, &triples, options, &HashMap::new()).unwrap()
    }

    #[test]
    fn parses_single_line() {
        let mut dicts = Dictionaries::default();
        let triples = parse_triples("A::a\tr\tB::b\n".as_bytes(), "x", &mut dicts).unwrap();
        assert_eq!(
            triples,
            vec![Triple::new(EntityId(0), RelationId(0), EntityId(1))]
        );
        assert_eq!(dicts.entities.name(1), "B::b");
    }

    #[test]
    fn reports_line_of_malformed_triple() {
        let mut dicts = Dictionaries::default();
        let err = parse_triples("A\tr\n".as_bytes(), "x", &mut dicts).unwrap_err();
        match err {
            KgError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_triples("A\tr\tB\nC\tr\tD\tE\n".as_bytes(), "x", &mut dicts).unwrap_err();
        assert!(
            matches!(
                err,
                KgError::Parse {
                    line: 2,
                    column: 6,
                    ..
                }
            ),
            "{err}"
        );
        let err = parse_triples("A\t\tB\n".as_bytes(), "x", &mut dicts).unwrap_err();
        assert!(
            matches!(
                err,
                KgError::Parse {
                    line: 1,
                    column: 3,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut dicts = Dictionaries::default();
        let err = load_triples(Path::new("/nonexistent/triples.txt"), &mut dicts).unwrap_err();
        assert!(matches!(err, KgError::Io { .. }));
    }

    #[test]
    fn types_from_prefix_and_map() {
        let empty = HashMap::new();
        assert_eq!(entity_type("Gene::AURKC", &empty).unwrap(), "Gene");
        assert_eq!(
            entity_type("Compound::DB00398", &empty).unwrap(),
            "Compound"
        );
        assert!(matches!(
            entity_type("orphan", &empty),
            Err(KgError::Typing { .. })
        ));
        let map: HashMap<String, String> = [("orphan".to_owned(), "Thing".to_owned())].into();
        assert_eq!(entity_type("orphan", &map).unwrap(), "Thing");
        let clash: HashMap<String, String> = [("Gene::X".to_owned(), "Disease".to_owned())].into();
        assert!(entity_type("Gene::X", &clash).is_err());
    }

    #[test]
    fn untyped_entity_fails_graph_build() {
        let mut dicts = Dictionaries::default();
        let triples = parse_triples("A::a\tr\tb\n".as_bytes(), "x", &mut dicts).unwrap();
        let err = build_graph(
            &dicts,
            &triples,
            &GraphOptions::with_inverses(),
            &HashMap::new(),
        );
        assert!(matches!(err, Err(KgError::Typing { .. })));
    }

    #[test]
    fn inverse_edges_and_self_loop() {
        let g = graph_from("T::A\tr\tT::B\n", &GraphOptions::with_inverses());
        let a = g.entity_id("T::A").unwrap();
        let b = g.entity_id("T::B").unwrap();
        let r_inv = g.relation_id("r_inv").unwrap();
        assert_eq!(g.relations().inverse(r_inv), g.relation_id("r").unwrap());
        assert_eq!(
            g.actions(b),
            vec![
                Action {
                    relation: r_inv,
                    target: a
                },
                Action {
                    relation: g.relations().no_op(),
                    target: b
                }
            ]
        );
        let no_op = g.relations().no_op();
        assert_eq!(g.relations().inverse(no_op), no_op);
        assert_eq!(g.relation_name(no_op), NO_OP);

        let plain = graph_from("T::A\tr\tT::B\n", &GraphOptions::default());
        let b = plain.entity_id("T::B").unwrap();
        assert_eq!(plain.actions(b).len(), 1);
    }

    #[test]
    fn no_inverse_list_is_respected() {
        let options = GraphOptions {
            add_inverses: true,
            no_inverse_relations: ["r".to_owned()].into(),
        };
        let g = graph_from("T::A\tr\tT::B\nT::A\ts\tT::B\n", &options);
        let b = g.entity_id("T::B").unwrap();
        let acts = g.actions(b);
        assert_eq!(acts.len(), 2);
        assert_eq!(g.relation_name(acts[0].relation), "s_inv");
    }

    #[test]
    fn isolated_node_has_only_self_loop() {
        let mut dicts = Dictionaries::default();
        dicts.entities.get_or_insert("T::x");
        dicts.relations.get_or_insert("r");
        let g = build_graph(&dicts, &[], &GraphOptions::with_inverses(), &HashMap::new()).unwrap();
        let x = EntityId(0);
        assert_eq!(
            g.actions(x),
            vec![Action {
                relation: g.relations().no_op(),
                target: x
            }]
        );
    }

    #[test]
    fn relation_name_collision_detected() {
        let mut dicts = Dictionaries::default();
        let triples = parse_triples(
            "T::A\tr\tT::B\nT::A\tr_inv\tT::B\n".as_bytes(),
            "x",
            &mut dicts,
        )
        .unwrap();
        let err = build_graph(
            &dicts,
            &triples,
            &GraphOptions::with_inverses(),
            &HashMap::new(),
        );
        assert!(matches!(err, Err(KgError::RelationNameCollision(_))));
    }

    #[test]
    fn adjacency_sorted_and_deduplicated() {
        let g = graph_from(
            "T::A\ts\tT::C\nT::A\tr\tT::B\nT::A\ts\tT::C\nT::A\tr\tT::C\n",
            &GraphOptions::with_inverses(),
        );
        let a = g.entity_id("T::A").unwrap();
        let n = g.neighbors(a);
        assert_eq!(n.len(), 3);
        assert!(n.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.num_base_triples(), 3);
    }

    #[test]
    fn type_statistics_single_triple() {
        let g = graph_from("T1::A\tr\tT2::B\n", &GraphOptions::with_inverses());
        let stats = type_statistics(&g);
        assert_eq!(
            stats,
            vec![
                TypeStats {
                    type_name: "T1".into(),
                    entities: 1,
                    average_degree: 1.0
                },
                TypeStats {
                    type_name: "T2".into(),
                    entities: 1,
                    average_degree: 1.0
                },
            ]
        );
        let empty = build_graph(
            &Dictionaries::default(),
            &[],
            &GraphOptions::with_inverses(),
            &HashMap::new(),
        )
        .unwrap();
        assert!(type_statistics(&empty).is_empty());
    }

    #[test]
    fn dataset_keeps_held_out_queries_off_the_graph() {
        let bg = [["C::a", "binds", "G::g"], ["C::a", "treats", "D::y"]];
        let train = [["C::a", "treats", "D::x"]];
        let valid = [["C::b", "treats", "D::x"]];
        let test = [["C::a", "treats", "D::y"]];
        let ds = Dataset::from_named(
            &bg,
            &train,
            &valid,
            &test,
            &HashMap::new(),
            &Default::default(),
        )
        .unwrap();
        let g = &ds.graph;
        let (a, x, y) = (
            g.entity_id("C::a").unwrap(),
            g.entity_id("D::x").unwrap(),
            g.entity_id("D::y").unwrap(),
        );
        let treats = ds.query_relation;
        assert!(g.has_edge(a, treats, x));
        assert!(!g.has_edge(a, treats, y));
        assert!(!g.has_edge(y, g.relations().inverse(treats), a));
        assert_eq!(ds.known_tails(a).unwrap().len(), 2);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let t = [["C::a", "treats", "D::x"]];
        let err = Dataset::from_named(&[], &t, &[], &t, &HashMap::new(), &Default::default());
        assert!(matches!(err, Err(KgError::OverlappingSplits { .. })));
    }
}
