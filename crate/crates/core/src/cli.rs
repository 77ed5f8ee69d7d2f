//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation error, 3 numeric
//! failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::disambiguator::{link_by_prior, LinkRecord, Linker, ReguConfig};
use crate::dsrm::{load_checkpoint, save_checkpoint, train, DsrmEmbeddings, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluate::{disambiguation_report, load_benchmark, relatedness_report};
use crate::kg::{
    build_dictionary_filtered, load_corpus, load_dictionary, load_kg, prune_entities, save_dictionary, save_kg,
    AnchorDocument, EntityId, KnowledgeGraph, MentionDictionary,
};
use crate::miner::{load_pairs, mine_kg_pairs, mine_pairs, save_pairs, MinerConfig};
use crate::relatedness::{build_tfidf, Ngd, Relatedness};
use crate::synth::{generate, write_fixture, SynthConfig};
use crate::vectorizer::{dump_features, encode_entity, TrigramIndexer};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dsrm", version, about = "Entity relatedness and collective entity disambiguation")]
pub struct Cli {
    /// Seed for every random choice of the invocation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file supplying flag values; flags given on the command line win.
    /// Top-level keys apply to every subcommand that has the flag, keys under
    /// `[<subcommand>]` only to that subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Ngd,
    Vsp,
    Dsrm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count surface -> entity anchors into a prior dictionary.
    BuildDict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only entities present in this graph.
        #[arg(long)]
        kg: Option<PathBuf>,
    },
    /// Drop entities with too few incoming links, to a fixed point.
    Prune {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_incoming: usize,
    },
    /// Mine softmax training groups from anchor co-occurrence and KG facts.
    MinePairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dictionary for negative sampling (default: built from the corpus).
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Maximum character distance between co-occurring anchors.
        #[arg(long, default_value_t = 150)]
        delta: usize,
        /// Negatives per positive pair.
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        /// Skip the groups derived from KG facts.
        #[arg(long)]
        no_kg_pairs: bool,
    },
    /// Train the relatedness network.
    Train {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Checkpoint path; the training report goes to `<out>.report.json`.
        #[arg(long)]
        out: PathBuf,
        /// First hidden layer (300 at full scale).
        #[arg(long, default_value_t = 64)]
        hidden1: usize,
        /// Second hidden layer (300 at full scale).
        #[arg(long, default_value_t = 64)]
        hidden2: usize,
        /// Output layer (300 at full scale).
        #[arg(long, default_value_t = 64)]
        output_dim: usize,
        /// Softmax smoothing factor.
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.02)]
        lr: f64,
        #[arg(long, default_value_t = 1024)]
        minibatch: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 3)]
        patience: usize,
    },
    /// Score `e_i \t e_j` lines; writes `e_i \t e_j \t score`.
    Score {
        #[arg(long, value_enum)]
        measure: Measure,
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Checkpoint, required for `--measure dsrm`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collectively link every anchor of a corpus.
    Link {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        /// Prior dictionary for candidate generation.
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, value_enum, default_value = "dsrm")]
        measure: Measure,
        /// Checkpoint, required for `--measure dsrm`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Fidelity weight of the regularizer.
        #[arg(long, default_value_t = 0.8)]
        mu: f64,
        /// Nearest neighbors kept per node.
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Prior share of the initial score.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Candidates per mention.
        #[arg(long, default_value_t = 30)]
        top_n: usize,
        /// Relatedness floor for coherence edges.
        #[arg(long, default_value_t = 0.0)]
        sr_min: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Ignore coherence and take the highest-prior candidate.
        #[arg(long)]
        prior_only: bool,
    },
    /// Score links against gold anchors and/or a relatedness benchmark.
    Evaluate {
        #[arg(long, requires = "gold")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        gold: Option<PathBuf>,
        /// `query \t candidate \t gain` rows.
        #[arg(long, requires_all = ["kg", "measure"])]
        benchmark: Option<PathBuf>,
        #[arg(long, value_enum)]
        measure: Option<Measure>,
        #[arg(long)]
        kg: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write per-channel feature vectors as JSON lines.
    DumpFeatures {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these entity ids.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
    },
    /// Generate the two-topic synthetic fixture.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        train_docs: usize,
        #[arg(long, default_value_t = 20)]
        heldout_docs: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(failure) => return report(failure),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_logging(cli.verbose);

    let outcome = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Usage(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(failure) => report(failure),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    code: i32,
    kind: &'a str,
    message: String,
}

fn report(failure: Failure) -> i32 {
    let (code, kind, message) = match failure {
        Failure::Usage(m) => (EXIT_USAGE, "usage", m),
        Failure::Lib(e) if e.is_numeric() => (EXIT_NUMERIC, "numeric", e.to_string()),
        Failure::Lib(e) => (EXIT_DATA, "data", e.to_string()),
    };
    let line = ErrorLine { code, kind, message };
    eprintln!("{}", serde_json::to_string(&line).expect("error line serializes"));
    code
}

fn flag_value(argv: &[OsString], name: &str) -> Option<OsString> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == long {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix(&prefix) {
            return Some(v.into());
        }
    }
    None
}

fn has_flag(argv: &[OsString], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&prefix)
    })
}

/// Appends `--key value` for every config entry whose flag is absent from
/// `argv` and accepted by the chosen subcommand.
fn merge_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, Failure> {
    let Some(path) = flag_value(&argv, "config") else {
        return Ok(argv);
    };
    let path = PathBuf::from(path);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Lib(Error::io(&path, e)))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;

    let command = Cli::command();
    let sub = argv
        .iter()
        .skip(1)
        .find_map(|a| command.find_subcommand(a.to_string_lossy().as_ref()).cloned());
    let Some(sub) = sub else {
        return Ok(argv);
    };
    let accepted: Vec<(String, bool)> = sub
        .get_arguments()
        .chain(command.get_arguments())
        .filter_map(|a| {
            let is_switch = matches!(a.get_action(), ArgAction::SetTrue | ArgAction::Count);
            a.get_long().map(|l| (l.to_string(), is_switch))
        })
        .collect();
    let lookup = |key: &str| accepted.iter().find(|(l, _)| l == key).map(|(_, s)| *s);

    let mut entries: Vec<(String, toml::Value, bool)> = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) if key == sub.get_name() => {
                entries.extend(section.iter().map(|(k, v)| (k.clone(), v.clone(), true)));
            }
            toml::Value::Table(_) => {}
            other => entries.push((key.clone(), other.clone(), false)),
        }
    }

    let mut merged = argv;
    for (key, value, strict) in entries {
        let flag = key.replace('_', "-");
        if flag == "config" {
            continue;
        }
        let Some(is_switch) = lookup(&flag) else {
            if strict {
                return Err(Failure::Usage(format!(
                    "{}: `{}` has no flag `--{flag}`",
                    path.display(),
                    sub.get_name()
                )));
            }
            continue;
        };
        if has_flag(&merged, &flag) {
            continue;
        }
        let values = match &value {
            toml::Value::Array(items) => items.clone(),
            v => vec![v.clone()],
        };
        for v in values {
            match v {
                toml::Value::Boolean(b) if is_switch => {
                    if b {
                        merged.push(format!("--{flag}").into());
                    }
                }
                toml::Value::String(s) => {
                    merged.push(format!("--{flag}").into());
                    merged.push(s.into());
                }
                toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_) => {
                    merged.push(format!("--{flag}").into());
                    merged.push(v.to_string().into());
                }
                other => {
                    return Err(Failure::Usage(format!(
                        "{}: unsupported value for `{key}`: {other}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(merged)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = create(path)?;
    let write = |out: &mut BufWriter<File>| -> io::Result<()> {
        for item in items {
            serde_json::to_writer(&mut *out, item)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with keys in sorted order.
fn sorted_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Loads the corpus and drops gold entities that the graph does not know.
fn load_resolved_corpus(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<AnchorDocument>> {
    let mut corpus = load_corpus(path)?;
    let demoted: usize = corpus.iter_mut().map(|d| d.resolve_against(kg)).sum();
    if demoted > 0 {
        info!("{demoted} anchors point outside the graph and were treated as NIL");
    }
    Ok(corpus)
}

/// Owns whichever relatedness backend a measure needs.
enum Backend<'a> {
    Ngd(Ngd<'a>),
    Vsp(crate::relatedness::TfIdfModel),
    Dsrm(DsrmEmbeddings),
}

impl Backend<'_> {
    fn as_dyn(&self) -> &dyn Relatedness {
        match self {
            Backend::Ngd(m) => m,
            Backend::Vsp(m) => m,
            Backend::Dsrm(m) => m,
        }
    }
}

fn backend<'a>(measure: Measure, kg: &'a KnowledgeGraph, model: Option<&Path>) -> std::result::Result<Backend<'a>, Failure> {
    Ok(match measure {
        Measure::Ngd => Backend::Ngd(Ngd(kg)),
        Measure::Vsp => Backend::Vsp(build_tfidf(kg)?),
        Measure::Dsrm => {
            let path = model.ok_or_else(|| Failure::Usage("--measure dsrm requires --model".into()))?;
            let checkpoint = load_checkpoint(path)?;
            Backend::Dsrm(DsrmEmbeddings::compute(kg, &checkpoint.params)?)
        }
    })
}

fn read_score_pairs(path: &Path) -> Result<Vec<(EntityId, EntityId)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, got {}", fields.len())));
        }
        let a = EntityId::new(fields[0]).map_err(|e| parse_err(e.to_string()))?;
        let b = EntityId::new(fields[1]).map_err(|e| parse_err(e.to_string()))?;
        pairs.push((a, b));
    }
    Ok(pairs)
}

fn read_links(path: &Path) -> Result<Vec<LinkRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut links = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        links.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(links)
}

#[derive(Serialize)]
struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    disambiguation: Option<crate::evaluate::DisambiguationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relatedness: Option<crate::evaluate::RelatednessReport>,
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::BuildDict { corpus, out, kg } => {
            let corpus = load_corpus(corpus)?;
            let dict = match kg {
                Some(kg) => {
                    let kg = load_kg(kg)?;
                    build_dictionary_filtered(&corpus, |e| kg.contains(e))
                }
                None => build_dictionary_filtered(&corpus, |_| true),
            };
            info!("{} surfaces", dict.len());
            save_dictionary(&dict, out)?;
        }
        Command::Prune {
            kg,
            out,
            min_incoming,
        } => {
            let kg = load_kg(kg)?;
            let pruned = prune_entities(&kg, *min_incoming);
            info!("kept {} of {} entities", pruned.len(), kg.len());
            save_kg(&pruned, out)?;
        }
        Command::MinePairs {
            corpus,
            kg,
            out,
            dict,
            delta,
            negatives,
            no_kg_pairs,
        } => {
            let kg = load_kg(kg)?;
            let corpus = load_resolved_corpus(corpus, &kg)?;
            let dictionary: MentionDictionary = match dict {
                Some(p) => load_dictionary(p)?,
                None => build_dictionary_filtered(&corpus, |e| kg.contains(e)),
            };
            let config = MinerConfig {
                delta: *delta,
                n_negatives: *negatives,
                seed: cli.seed,
            };
            let mut pairs = mine_pairs(&corpus, &dictionary, &config);
            if !no_kg_pairs {
                pairs.extend(mine_kg_pairs(&kg, *negatives, cli.seed));
            }
            info!("mined {} groups", pairs.len());
            save_pairs(&pairs, out)?;
        }
        Command::Train {
            kg,
            pairs,
            out,
            hidden1,
            hidden2,
            output_dim,
            gamma,
            lr,
            minibatch,
            epochs,
            validation_fraction,
            patience,
        } => {
            let kg = load_kg(kg)?;
            let pairs = load_pairs(pairs)?;
            let config = TrainConfig {
                hidden1: *hidden1,
                hidden2: *hidden2,
                output_dim: *output_dim,
                gamma: *gamma,
                learning_rate: *lr,
                minibatch_size: *minibatch,
                max_epochs: *epochs,
                validation_fraction: *validation_fraction,
                patience: *patience,
                seed: cli.seed,
            };
            let (params, report) = train(&kg, &pairs, &config)?;
            info!(
                "best epoch {} validation loss {:.6}",
                report.best_epoch, report.best_validation_loss
            );
            save_checkpoint(out, &params, config.gamma, Some(&report))?;
        }
        Command::Score {
            measure,
            kg,
            pairs,
            model,
            out,
        } => {
            let kg = load_kg(kg)?;
            let pairs = read_score_pairs(pairs)?;
            let backend = backend(*measure, &kg, model.as_deref())?;
            let sr = backend.as_dyn();
            let mut text = String::new();
            for (a, b) in &pairs {
                let score = sr.relatedness(a, b)?;
                text.push_str(&format!("{a}\t{b}\t{score:.6}\n"));
            }
            write_text(out.as_deref(), &text)?;
        }
        Command::Link {
            kg,
            docs,
            dict,
            measure,
            model,
            out,
            mu,
            k,
            lambda,
            top_n,
            sr_min,
            tol,
            max_iter,
            prior_only,
        } => {
            let kg = load_kg(kg)?;
            let docs = load_corpus(docs)?;
            let dictionary = load_dictionary(dict)?;
            let config = ReguConfig {
                mu: *mu,
                k: *k,
                lambda_prior: *lambda,
                tol: *tol,
                max_iter: *max_iter,
                sr_min: *sr_min,
                top_n: *top_n,
            };
            config.validate()?;
            let links = if *prior_only {
                link_by_prior(&dictionary, &docs, config.top_n)
            } else {
                let backend = backend(*measure, &kg, model.as_deref())?;
                let content = build_tfidf(&kg)?;
                let linker = Linker {
                    dictionary: &dictionary,
                    content: &content,
                    relatedness: backend.as_dyn(),
                    config,
                };
                linker.link_corpus(&docs)?
            };
            write_json_lines(out, &links)?;
        }
        Command::Evaluate {
            pred,
            gold,
            benchmark,
            measure,
            kg,
            model,
            report,
        } => {
            if pred.is_none() && benchmark.is_none() {
                return Err(Failure::Usage("evaluate needs --pred/--gold or --benchmark".into()));
            }
            let disambiguation = match (pred, gold) {
                (Some(pred), Some(gold)) => {
                    let links = read_links(pred)?;
                    let corpus = load_corpus(gold)?;
                    Some(disambiguation_report(&links, &corpus)?)
                }
                _ => None,
            };
            let relatedness = match (benchmark, measure, kg) {
                (Some(bench), Some(measure), Some(kg)) => {
                    let kg = load_kg(kg)?;
                    let bench = load_benchmark(bench)?;
                    let backend = backend(*measure, &kg, model.as_deref())?;
                    Some(relatedness_report(&bench, backend.as_dyn())?)
                }
                _ => None,
            };
            let text = sorted_json(&EvaluationReport {
                disambiguation,
                relatedness,
            });
            write_text(report.as_deref(), &text)?;
        }
        Command::DumpFeatures { kg, out, ids } => {
            let kg = load_kg(kg)?;
            let ids: Vec<EntityId> = if ids.is_empty() {
                kg.ids().cloned().collect()
            } else {
                ids.iter().map(EntityId::new).collect::<Result<_>>()?
            };
            let indexer = TrigramIndexer;
            let mut writer = create(out)?;
            for id in &ids {
                let features = encode_entity(&kg, &indexer, id)?;
                dump_features(&mut writer, id, &features).map_err(|e| Error::io(out, e))?;
            }
            writer.flush().map_err(|e| Error::io(out, e))?;
        }
        Command::Synth {
            out_dir,
            train_docs,
            heldout_docs,
        } => {
            let fixture = generate(&SynthConfig {
                seed: cli.seed,
                train_docs: *train_docs,
                heldout_docs: *heldout_docs,
            })?;
            write_fixture(&fixture, out_dir)?;
        }
    }
    Ok(())
}
