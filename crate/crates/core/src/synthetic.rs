//! Planted-rule knowledge graphs: a compound treats exactly the diseases
//! reached by `Compound -binds-> Gene -associates_inv-> Disease`, surrounded
//! by distractor entities and relations.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::KgError;
use crate::kg::{Dataset, DatasetOptions};
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub compounds: usize,
    pub genes: usize,
    pub diseases: usize,
    pub side_effects: usize,
    pub anatomies: usize,
    pub binds_per_compound: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            compounds: 50,
            genes: 50,
            diseases: 50,
            side_effects: 20,
            anatomies: 10,
            binds_per_compound: 2,
            valid_fraction: 0.2,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

/// Body of the planted rule, as it appears in the rules file.
pub const PLANTED_BODY: &str = "Compound\tbinds\tGene\tassociates_inv\tDisease";

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedKg {
    pub background: Vec<[String; 3]>,
    pub train: Vec<[String; 3]>,
    pub valid: Vec<[String; 3]>,
    pub test: Vec<[String; 3]>,
    /// Rules file contents: the planted rule (score 1) and lower-scored decoys.
    pub rules: String,
}

fn name(kind: &str, i: usize) -> String {
    format!("{kind}::{}{i:03}", &kind[..1])
}

fn triple(h: String, r: &str, t: String) -> [String; 3] {
    [h, r.to_string(), t]
}

fn random_pairs<R: Rng>(
    rng: &mut R,
    count: usize,
    from: (&str, usize),
    to: (&str, usize),
    relation: &str,
    out: &mut Vec<[String; 3]>,
) {
    let mut seen = BTreeSet::new();
    let mut attempts = 0;
    while seen.len() < count && attempts < 100 * count {
        attempts += 1;
        let (a, b) = (rng.gen_range(0..from.1), rng.gen_range(0..to.1));
        if from.0 == to.0 && a == b {
            continue;
        }
        if seen.insert((a, b)) {
            out.push(triple(name(from.0, a), relation, name(to.0, b)));
        }
    }
}

pub fn planted_kg(config: &PlantedConfig) -> PlantedKg {
    let mut rng = substream(config.seed, "synthetic", &[]);
    let mut background = Vec::new();

    // Gene g is associated with disease g mod #diseases.
    for g in 0..config.genes {
        background.push(triple(
            name("Disease", g % config.diseases),
            "associates",
            name("Gene", g),
        ));
    }
    let mut treats = BTreeSet::new();
    let genes: Vec<usize> = (0..config.genes).collect();
    for c in 0..config.compounds {
        for &g in genes.choose_multiple(&mut rng, config.binds_per_compound) {
            background.push(triple(name("Compound", c), "binds", name("Gene", g)));
            treats.insert((c, g % config.diseases));
        }
    }

    random_pairs(
        &mut rng,
        config.compounds,
        ("Compound", config.compounds),
        ("Compound", config.compounds),
        "resembles",
        &mut background,
    );
    random_pairs(
        &mut rng,
        config.diseases / 2,
        ("Disease", config.diseases),
        ("Disease", config.diseases),
        "resembles",
        &mut background,
    );
    random_pairs(
        &mut rng,
        2 * config.compounds,
        ("Compound", config.compounds),
        ("SideEffect", config.side_effects),
        "causes",
        &mut background,
    );
    random_pairs(
        &mut rng,
        config.genes,
        ("Gene", config.genes),
        ("Gene", config.genes),
        "interacts",
        &mut background,
    );
    random_pairs(
        &mut rng,
        config.diseases,
        ("Disease", config.diseases),
        ("Anatomy", config.anatomies),
        "localizes",
        &mut background,
    );
    random_pairs(
        &mut rng,
        config.genes,
        ("Anatomy", config.anatomies),
        ("Gene", config.genes),
        "expresses",
        &mut background,
    );
    let mut palliates = BTreeSet::new();
    while palliates.len() < config.compounds / 2 {
        let pair = (
            rng.gen_range(0..config.compounds),
            rng.gen_range(0..config.diseases),
        );
        if !treats.contains(&pair) && palliates.insert(pair) {
            background.push(triple(
                name("Compound", pair.0),
                "palliates",
                name("Disease", pair.1),
            ));
        }
    }

    let mut pairs: Vec<(usize, usize)> = treats.into_iter().collect();
    pairs.shuffle(&mut rng);
    let n = pairs.len();
    let n_valid = (n as f64 * config.valid_fraction).round() as usize;
    let n_test = (n as f64 * config.test_fraction).round() as usize;
    let to_triples = |ps: &[(usize, usize)]| {
        ps.iter()
            .map(|&(c, d)| triple(name("Compound", c), "treats", name("Disease", d)))
            .collect::<Vec<_>>()
    };
    let valid = to_triples(&pairs[..n_valid]);
    let test = to_triples(&pairs[n_valid..n_valid + n_test]);
    let train = to_triples(&pairs[n_valid + n_test..]);

    let rules = format!(
        "1.0\ttreats\t{PLANTED_BODY}\n\
         0.2\ttreats\tCompound\tresembles\tCompound\ttreats\tDisease\n\
         0.1\ttreats\tCompound\tcauses\tSideEffect\tcauses_inv\tCompound\ttreats\tDisease\n\
         0.15\ttreats\tCompound\tbinds\tGene\tinteracts\tGene\tassociates_inv\tDisease\n"
    );
    PlantedKg {
        background,
        train,
        valid,
        test,
        rules,
    }
}

fn tsv(triples: &[[String; 3]]) -> String {
    triples
        .iter()
        .map(|t| format!("{}\n", t.join("\t")))
        .collect()
}

impl PlantedKg {
    /// Writes `graph.txt`, `train.txt`, `valid.txt`, `test.txt` and `rules.tsv`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("graph.txt"), tsv(&self.background))?;
        fs::write(dir.join("train.txt"), tsv(&self.train))?;
        fs::write(dir.join("valid.txt"), tsv(&self.valid))?;
        fs::write(dir.join("test.txt"), tsv(&self.test))?;
        fs::write(dir.join("rules.tsv"), &self.rules)
    }

    pub fn dataset(&self, options: &DatasetOptions) -> Result<Dataset, KgError> {
        fn view(ts: &[[String; 3]]) -> Vec<[&str; 3]> {
            ts.iter()
                .map(|[h, r, t]| [h.as_str(), r.as_str(), t.as_str()])
                .collect()
        }
        Dataset::from_named(
            &view(&self.background),
            &view(&self.train),
            &view(&self.valid),
            &view(&self.test),
            &HashMap::new(),
            options,
        )
    }
}
