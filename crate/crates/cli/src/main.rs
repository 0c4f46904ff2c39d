use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use polo::config::Settings;
use polo::eval::{
    annotate_rules, beam_search, evaluate, explanations, query_json, rank_targets, EvalReport,
};
use polo::kg::type_statistics;
use polo::rng::substream;
use polo::rules::{estimate_confidence, load_rules, RuleSet};
use polo::training::{train, write_diagnostics_csv};
use polo::{
    ConfigError, Dataset, KgError, PolicyConfig, PolicyError, PolicyParams, RuleError, TrainError,
};

#[derive(Parser)]
#[command(
    name = "polo",
    version,
    about = "Rule-guided multi-hop reasoning on typed knowledge graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write the best checkpoint, diagnostics and resolved config.
    Train(Common),
    /// Evaluate a checkpoint on the test split (standard and rule-pruned rankings).
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate [default: <out>/checkpoint.bin].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank candidate tails for one head entity, with explanation paths.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Head entity name, e.g. `Compound::DB00398`.
        #[arg(long)]
        compound: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Keep tails already known for this head.
        #[arg(long)]
        include_known: bool,
    },
    /// Estimate the confidence of every rule by sampling body instances.
    Confidence(Common),
    /// Graph summary and per-type entity counts and degrees.
    Stats(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Dataset directory (train.txt, and optionally graph.txt, valid.txt, test.txt, types.tsv).
    #[arg(long)]
    data: PathBuf,
    /// Rules file.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long)]
    threads: Option<usize>,
    /// Config override `key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        match e {
            RuleError::Parse { .. } | RuleError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::EmptyTrainingSet => CliError::Data(e.to_string()),
            TrainError::Policy(p) => p.into(),
            TrainError::Diverged { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_error(path))
}

struct Context {
    settings: Settings,
    dataset: Dataset,
    out: PathBuf,
}

impl Common {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut settings = Settings::default();
        if let Some(path) = &self.config {
            settings.apply_file(path)?;
        }
        if let Some(seed) = self.seed {
            settings.train.seed = seed;
        }
        for o in &self.overrides {
            settings.apply_override(o)?;
        }
        Ok(settings)
    }

    fn prepare(&self) -> Result<Context, CliError> {
        let settings = self.settings()?;
        if let Some(threads) = self.threads {
            if threads == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        if !self.data.is_dir() {
            return Err(CliError::Data(format!(
                "data directory {} does not exist",
                self.data.display()
            )));
        }
        let dataset = Dataset::load(&self.data, &settings.dataset_options())?;
        fs::create_dir_all(&self.out).map_err(io_error(&self.out))?;
        Ok(Context {
            settings,
            dataset,
            out: self.out.clone(),
        })
    }

    fn rules(&self, dataset: &Dataset) -> Result<RuleSet, CliError> {
        let path = self
            .rules
            .as_ref()
            .ok_or_else(|| CliError::Usage("--rules is required for this command".into()))?;
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "rules file {} does not exist",
                path.display()
            )));
        }
        Ok(load_rules(path, &dataset.graph)?)
    }
}

fn load_checkpoint(
    ctx: &Context,
    checkpoint: Option<PathBuf>,
) -> Result<(PolicyConfig, PolicyParams), CliError> {
    let path = checkpoint.unwrap_or_else(|| ctx.out.join("checkpoint.bin"));
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let g = &ctx.dataset.graph;
    let (stored, params) = PolicyParams::load(&path, g.num_entities(), g.num_relations())?;
    let wanted = &ctx.settings.policy;
    let arch = |c: &PolicyConfig| (c.embedding_dim, c.hidden_dim, c.lstm_layers);
    if arch(&stored) != arch(wanted) {
        return Err(CliError::Data(format!(
            "checkpoint {} has (embedding_dim, hidden_dim, lstm_layers) = {:?} but the configuration asks for {:?}",
            path.display(),
            arch(&stored),
            arch(wanted)
        )));
    }
    Ok((wanted.clone(), params))
}

fn cmd_train(common: Common) -> Result<(), CliError> {
    let ctx = common.prepare()?;
    let rules = common.rules(&ctx.dataset)?;
    write_file(&ctx.out.join("config.resolved"), ctx.settings.snapshot())?;
    let s = &ctx.settings;
    info!(
        "training on {} queries ({} valid) with {} rules",
        ctx.dataset.train.len(),
        ctx.dataset.valid.len(),
        rules.len()
    );
    let outcome = train(&ctx.dataset, &rules, &s.policy, &s.reward, &s.train)?;
    let diag_path = ctx.out.join("diagnostics.csv");
    let mut diag = Vec::new();
    write_diagnostics_csv(&mut diag, &outcome.diagnostics).map_err(io_error(&diag_path))?;
    write_file(&diag_path, diag)?;
    let ckpt = ctx.out.join("checkpoint.bin");
    outcome.best_params.save(&s.policy, &ckpt)?;
    match outcome.best_epoch {
        Some(e) => info!(
            "best validation epoch {e}; checkpoint written to {}",
            ckpt.display()
        ),
        None => info!("checkpoint written to {}", ckpt.display()),
    }
    Ok(())
}

fn report_row(split: &str, scheme: &str, r: &EvalReport) -> String {
    format!(
        "{split},{scheme},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
        r.queries,
        r.hits_at_1,
        r.hits_at_3,
        r.hits_at_10,
        r.mrr,
        r.rule_match_rate,
        r.rule_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default()
    )
}

fn cmd_eval(common: Common, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let ctx = common.prepare()?;
    let rules = common.rules(&ctx.dataset)?;
    let (policy, params) = load_checkpoint(&ctx, checkpoint)?;
    let ds = &ctx.dataset;
    if ds.test.is_empty() {
        warn!("test split is empty; the report has zero queries");
    }
    let e = evaluate(
        &ds.graph,
        &params,
        &policy,
        &rules,
        &ds.test,
        ds.all_known(),
        policy.test_rollouts,
    );
    let mut csv = String::from(
        "split,scheme,queries,hits_at_1,hits_at_3,hits_at_10,mrr,rule_match_rate,rule_accuracy\n",
    );
    csv += &report_row("test", "standard", &e.standard);
    csv += &report_row("test", "pruned", &e.pruned);
    write_file(&ctx.out.join("eval_report.csv"), &csv)?;

    let path = ctx.out.join("predictions.jsonl");
    let file = fs::File::create(&path).map_err(io_error(&path))?;
    let mut w = BufWriter::new(file);
    for ((res, std_q), pruned_q) in e
        .results
        .iter()
        .zip(&e.standard.rankings)
        .zip(&e.pruned.rankings)
    {
        let line = query_json(&ds.graph, &rules, res, std_q, pruned_q, 10);
        writeln!(w, "{line}").map_err(io_error(&path))?;
    }
    w.flush().map_err(io_error(&path))?;
    print!("{csv}");
    Ok(())
}

fn cmd_predict(
    common: Common,
    checkpoint: Option<PathBuf>,
    compound: &str,
    top_k: usize,
    include_known: bool,
) -> Result<(), CliError> {
    let ctx = common.prepare()?;
    let rules = match common.rules {
        Some(_) => common.rules(&ctx.dataset)?,
        None => RuleSet::default(),
    };
    let (policy, params) = load_checkpoint(&ctx, checkpoint)?;
    let ds = &ctx.dataset;
    let g = &ds.graph;
    let head = g
        .entity_id(compound)
        .ok_or_else(|| CliError::Data(format!("unknown entity `{compound}`")))?;
    let (_, range) = g.relation_signature(ds.query_relation);
    let known = ds.known_tails(head);

    let mut paths = beam_search(g, &params, &policy, head, policy.test_rollouts);
    annotate_rules(g, &mut paths, &rules);
    let ranking: Vec<_> = rank_targets(&paths, false)
        .into_iter()
        .filter(|(e, _)| range.is_empty() || range.contains(&g.type_of(*e)))
        .filter(|(e, _)| include_known || !known.is_some_and(|k| k.contains(e)))
        .collect();
    let no_op = g.relations().no_op();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (rank, (e, score, p)) in explanations(&paths, &ranking, false)
        .into_iter()
        .take(top_k)
        .enumerate()
    {
        let rule = p
            .rule
            .map(|i| rules.rules()[i].body.render(g))
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{}\t{}\t{score:.6}\t{rule}\t{}",
            rank + 1,
            g.entity_name(e),
            p.path.collapse_no_op(no_op).render(g)
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn cmd_confidence(common: Common) -> Result<(), CliError> {
    let ctx = common.prepare()?;
    let rules = common.rules(&ctx.dataset)?;
    let g = &ctx.dataset.graph;
    let mut tsv =
        String::from("rule\tbody\tscore\testimate\trule_support\tbody_support\tbody_instances\n");
    for (i, rule) in rules.rules().iter().enumerate() {
        let mut rng = substream(ctx.settings.train.seed, "confidence", &[i as u64]);
        let est = estimate_confidence(g, rule, ctx.settings.confidence_samples, &mut rng).map_err(
            |e| CliError::Runtime(format!("rule {} ({}): {e}", i + 1, rule.body.render(g))),
        )?;
        tsv += &format!(
            "{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\n",
            i + 1,
            rule.body.render(g),
            rule.score,
            est.score,
            est.rule_support,
            est.body_support,
            est.body_instances
        );
    }
    write_file(&ctx.out.join("confidence.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_stats(common: Common) -> Result<(), CliError> {
    let ctx = common.prepare()?;
    let g = &ctx.dataset.graph;
    let s = g.summary();
    println!(
        "entities\t{}\nrelations\t{}\ntriples\t{}\naverage_degree\t{:.4}",
        s.entities, s.relations, s.triples, s.average_degree
    );
    let mut tsv = String::from("type\tentities\taverage_degree\n");
    for t in type_statistics(g) {
        tsv += &format!("{}\t{}\t{:.4}\n", t.type_name, t.entities, t.average_degree);
    }
    write_file(&ctx.out.join("type_stats.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, checkpoint } => cmd_eval(common, checkpoint),
        Command::Predict {
            common,
            checkpoint,
            compound,
            top_k,
            include_known,
        } => cmd_predict(common, checkpoint, &compound, top_k, include_known),
        Command::Confidence(c) => cmd_confidence(c),
        Command::Stats(c) => cmd_stats(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
