//! `kgel`: ingest, synthesize, train-scorer, link, evaluate, stats.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kgel_core::decode::LengthNorm;
use kgel_core::eval::{check_alignment, read_predictions};
use kgel_core::linking::{DEFAULT_BEAM_WIDTH, DEFAULT_TOP_K};
use kgel_core::ngram::DEFAULT_ORDER;
use kgel_core::synthesis::{write_jsonl, DEFAULT_SYNONYM_CAP, DEFAULT_TRIPLES_PER_CONCEPT};
use kgel_core::{
    dataset_stats, finetune_targets, kg_stats, parse_dataset, parse_kg_dir, report,
    synthesize_corpus, write_kg_dir, KnowledgeGraph, LinkConfig, Linker, Mode, NGramModel,
    SynthesisConfig, UniformScorer,
};
use serde::Serialize;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nreads:  kg-tsv v1, dataset-jsonl v1, corpus-jsonl v1, ngram-model v1, predictions-jsonl v1",
    "\nwrites: kg-tsv v1, corpus-jsonl v1, ngram-model v1, predictions-jsonl v1, trie-dump v1, run-config v1"
);

#[derive(Parser)]
#[command(name = "kgel", version = VERSION, about = "Knowledge-graph corpus synthesis and constrained generative entity linking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a KG directory (and datasets) and print their statistics
    Ingest(IngestArgs),
    /// Print KG and dataset statistics as JSON
    Stats(StatsArgs),
    /// Write a pre-training corpus as JSON lines
    Synthesize(SynthesizeArgs),
    /// Train the n-gram scorer on fine-tuning lines (and optional corpus targets)
    TrainScorer(TrainArgs),
    /// Link every dataset mention and write ranked predictions
    Link(LinkArgs),
    /// Compute Recall@k from a predictions file
    Evaluate(EvaluateArgs),
    /// Dump the surface-form trie
    ExportTrie(ExportTrieArgs),
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Re-write the validated KG in canonical TSV layout to this directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, required_unless_present = "dataset")]
    kg: Option<PathBuf>,
    #[arg(long)]
    dataset: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    kg: PathBuf,
    /// synonym, triple_line, triple_all, combined (synonym + triple_line) or combined_all (synonym + triple_all)
    #[arg(long, default_value = "combined")]
    mode: Mode,
    /// Synonym pairs per concept
    #[arg(long, default_value_t = DEFAULT_SYNONYM_CAP, value_parser = at_least_one)]
    cap: usize,
    /// Triples per concept
    #[arg(long, default_value_t = DEFAULT_TRIPLES_PER_CONCEPT, value_parser = at_least_one)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = at_least_one)]
    threads: usize,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    kg: PathBuf,
    /// Annotated datasets turned into `[BOS] {mention} is {synonym} [EOS]` lines
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Synthesized corpus files whose targets are added to the training lines
    #[arg(long)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ORDER, value_parser = at_least_one)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fine-tuning lines, one per line
    #[arg(long)]
    finetune_out: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long)]
    kg: PathBuf,
    /// n-gram model file; without it every legal continuation is scored uniformly
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH, value_parser = at_least_one)]
    beam_width: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K, value_parser = at_least_one)]
    top_k: usize,
    /// Maximum surface length in tokens; defaults to the trie depth
    #[arg(long, value_parser = at_least_one)]
    max_len: Option<usize>,
    /// Ranking of completed surfaces: mean or none
    #[arg(long, default_value = "mean")]
    length_norm: LengthNorm,
    #[arg(long, default_value_t = 1, value_parser = at_least_one)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    preds: PathBuf,
    /// Dataset the predictions were made for; predictions must align with its mentions
    #[arg(long)]
    gold: PathBuf,
    /// KG used to count unresolved gold ids and ambiguous top-1 surfaces
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10", value_parser = at_least_one)]
    ks: Vec<usize>,
    /// Print one CSV row `k,recall,...` instead of JSON
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ExportTrieArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Provenance written next to every artifact as `<artifact>.run.json`.
#[derive(Serialize, Default)]
struct RunConfig<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beam_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_norm: Option<String>,
    inputs: Vec<String>,
}

impl<'a> RunConfig<'a> {
    fn new(command: &'a str, inputs: &[&Path]) -> Self {
        Self {
            tool: "kgel",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            ..Default::default()
        }
    }

    fn write_beside(&self, artifact: &Path) -> Result<()> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".run.json");
        let path = PathBuf::from(name);
        let mut f = create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    parse_kg_dir(path).with_context(|| format!("reading KG directory {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let stats = kg_stats(&kg);
    eprintln!(
        "{}: {} concepts, {} relations, {} triples",
        args.kg.display(),
        stats.concepts,
        kg.relations().len(),
        stats.triples
    );
    let mut datasets = serde_json::Map::new();
    for path in &args.dataset {
        let docs = parse_dataset(path)?;
        let missing = docs
            .iter()
            .flat_map(|d| &d.mentions)
            .filter(|m| !kg.contains_entity(&m.gold))
            .count();
        let s = dataset_stats(&docs);
        eprintln!(
            "{}: {} documents, {} mentions, {} gold entities ({} mentions with gold ids missing from the KG)",
            path.display(),
            s.documents,
            s.mentions,
            s.entities,
            missing
        );
        datasets.insert(path.display().to_string(), serde_json::to_value(s)?);
    }
    if let Some(out) = &args.out {
        write_kg_dir(&kg, out).with_context(|| format!("writing {}", out.display()))?;
    }
    print_json(&serde_json::json!({ "kg": stats, "datasets": datasets }))
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut value = serde_json::Map::new();
    if let Some(path) = &args.kg {
        value.insert(
            "kg".into(),
            serde_json::to_value(kg_stats(&load_kg(path)?))?,
        );
    }
    let mut datasets = serde_json::Map::new();
    for path in &args.dataset {
        datasets.insert(
            path.display().to_string(),
            serde_json::to_value(dataset_stats(&parse_dataset(path)?))?,
        );
    }
    value.insert("datasets".into(), datasets.into());
    print_json(&value)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Synonym => "synonym",
        Mode::TripleLine => "triple_line",
        Mode::TripleAll => "triple_all",
        Mode::Combined => "combined",
        Mode::CombinedAll => "combined_all",
    }
}

fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let cfg = SynthesisConfig {
        mode: args.mode,
        cap: args.cap,
        k: args.k,
        seed: args.seed,
        threads: args.threads,
    };
    let mut out = output(args.out.as_deref())?;
    let n = synthesize_corpus(&kg, &cfg, |s| write_jsonl(&mut out, s))?;
    out.flush()?;
    eprintln!("wrote {n} samples");
    if let Some(path) = &args.out {
        RunConfig {
            seed: Some(args.seed),
            mode: Some(mode_name(args.mode).into()),
            cap: Some(args.cap),
            k: Some(args.k),
            ..RunConfig::new("synthesize", &[&args.kg])
        }
        .write_beside(path)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct CorpusRecord {
    target: String,
}

fn train_scorer(args: TrainArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let mut lines = Vec::new();
    for path in &args.dataset {
        let (ft, skipped) = finetune_targets(&kg, &parse_dataset(path)?);
        if skipped > 0 {
            eprintln!(
                "{}: skipped {skipped} mentions whose gold id is not in the KG",
                path.display()
            );
        }
        lines.extend(ft);
    }
    if let Some(path) = &args.finetune_out {
        let mut w = create(path)?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        w.flush()?;
    }
    for path in &args.corpus {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let rec: CorpusRecord = serde_json::from_str(line)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
            lines.push(rec.target);
        }
    }
    let model = NGramModel::train(&lines, args.order)?;
    let mut w = create(&args.out)?;
    model.save(&mut w)?;
    w.flush()?;
    eprintln!(
        "trained order-{} model on {} lines, V = {}",
        model.order(),
        lines.len(),
        model.vocab_size()
    );
    let mut inputs: Vec<&Path> = vec![&args.kg];
    inputs.extend(args.dataset.iter().map(PathBuf::as_path));
    inputs.extend(args.corpus.iter().map(PathBuf::as_path));
    RunConfig {
        order: Some(args.order),
        ..RunConfig::new("train-scorer", &inputs)
    }
    .write_beside(&args.out)
}

fn link(args: LinkArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let docs = parse_dataset(&args.dataset)?;
    let linker = Linker::new(&kg)?;
    let mut cfg = LinkConfig::new(linker.trie(), args.beam_width, args.top_k);
    if let Some(m) = args.max_len {
        cfg.search.max_len = m;
    }
    cfg.search.length_norm = args.length_norm;
    let preds = match &args.model {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let model = NGramModel::load(BufReader::new(file))
                .with_context(|| format!("loading {}", path.display()))?;
            linker.link_dataset::<f64, _>(&docs, &model, &cfg, args.threads)
        }
        None => linker.link_dataset::<f64, _>(&docs, &UniformScorer, &cfg, args.threads),
    };
    let failed = preds.iter().filter(|p| p.candidates.is_empty()).count();
    if failed > 0 {
        eprintln!("{failed} mentions produced no candidates");
    }
    let mut out = output(args.out.as_deref())?;
    for p in &preds {
        write_jsonl(&mut out, p)?;
    }
    out.flush()?;
    if let Some(path) = &args.out {
        let mut inputs: Vec<&Path> = vec![&args.kg, &args.dataset];
        inputs.extend(args.model.as_deref());
        RunConfig {
            beam_width: Some(args.beam_width),
            top_k: Some(args.top_k),
            max_len: Some(cfg.search.max_len),
            length_norm: Some(format!("{:?}", args.length_norm).to_lowercase()),
            ..RunConfig::new("link", &inputs)
        }
        .write_beside(path)?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let preds = read_predictions(&args.preds)?;
    let docs = parse_dataset(&args.gold)?;
    check_alignment(&preds, &docs)?;
    let kg = args.kg.as_deref().map(load_kg).transpose()?;
    let r = report(&preds, &args.ks, kg.as_ref())?;
    if r.empty {
        eprintln!("warning: no mentions to evaluate; recall reported as 0");
    }
    if args.csv {
        let row: Vec<String> = r
            .recall_at
            .iter()
            .flat_map(|(k, v)| [k.to_string(), v.to_string()])
            .collect();
        println!("{}", row.join(","));
        Ok(())
    } else {
        print_json(&r)
    }
}

fn export_trie(args: ExportTrieArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let trie = kgel_core::build_trie(&kg)?;
    let mut out = output(args.out.as_deref())?;
    trie.export(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Synthesize(a) => synthesize(a),
        Command::TrainScorer(a) => train_scorer(a),
        Command::Link(a) => link(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExportTrie(a) => export_trie(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
