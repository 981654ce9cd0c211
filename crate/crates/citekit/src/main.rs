//! Single driver binary: each subcommand runs one pipeline stage against the
//! artifacts in the output directory, with all knobs coming from one config
//! file plus flag overrides. Exit codes: 0 success, 1 validation failure,
//! 2 runtime failure (partial artifacts are left in place).

use citekit::artifact::{open_artifact, read_artifact, read_plain_jsonl, ArtifactHeader, ArtifactWriter};
use citekit::backward::{BackwardOptions, BackwardPair, Bm25Provider, PairStatus};
use citekit::bm25::{build_index, InvertedIndex};
use citekit::cite::parse_citations;
use citekit::config::{ClientKind, CorpusInput, PipelineConfig};
use citekit::corpus::{
    assign_unique_titles, chunk_corpus, read_registry, Chunk, Corpus, Document, Source,
    TitleAssignOptions, TitleRegistry,
};
use citekit::error::{Error, Result};
use citekit::eval::{
    claims_from_parse, decompose_claims, em_recall, memorization_probe, shortform_citation_metrics,
    title_distinctiveness, DistinctItem, EntailOptions, LongFormItem, ProbeItem, ProbeMode,
    ShortFormItem,
};
use citekit::forward::{run_forward, to_record, ForwardQa};
use citekit::hybrid::{
    conflict_slices, mix_retrieval, oracle_select, route, score_correctness, EvalItem,
    ProviderLabel, RankedList, RoutedResult, Strategy,
};
use citekit::model::http::HttpGenerator;
use citekit::model::mock::{
    MockBackwardGenerator, MockDecomposer, MockEmbedder, MockEntailment, MockEntityGenerator,
    MockForwardQa, MockNamer, MockRouter, MockScorer,
};
use citekit::model::{fnv1a64, EmbedderClient, EntailmentClient, GeneratorClient, ScorerClient};
use citekit::prompt::PromptSet;
use citekit::records::{validate_record, PretrainRecord, Variant};
use citekit::trie::build_title_trie;
use citekit::token::Tokenizer;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};
use std::io::{BufReader, Cursor, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

const CORPUS_RAW: &str = "corpus.raw.jsonl";
const CORPUS: &str = "corpus.jsonl";
const REGISTRY: &str = "registry.jsonl";
const CHUNKS: &str = "chunks.jsonl";
const INDEX: &str = "index.bin";
const POSTINGS: &str = "postings.txt";
const FORWARD: &str = "forward.jsonl";
const BACKWARD: &str = "backward.jsonl";
const TRAINSET: &str = "trainset.jsonl";
const TRIE: &str = "trie.bin";

#[derive(Parser)]
#[command(name = "citekit", version, about = "Corpus indexing and citation evaluation toolkit")]
struct Cli {
    /// Pipeline config file (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Model client backend.
    #[arg(long, global = true, value_parser = ["mock", "http"])]
    client: Option<String>,

    /// Worker pool size (0 = logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw record streams into the corpus artifact.
    Ingest(IngestArgs),
    /// Title registry operations.
    Titles(TitlesArgs),
    /// Split documents into W-word chunks.
    Chunk(ChunkArgs),
    /// Build the BM25 index over chunks.
    Index(IndexArgs),
    /// Emit passive pretraining records.
    EmitPassive(EmitPassiveArgs),
    /// Generate forward (identifier → fact) QA data.
    AugmentForward,
    /// Generate backward (fact → identifier) instruction data.
    AugmentBackward(AugmentBackwardArgs),
    /// Assemble the combined trainset with token bookkeeping.
    EmitTrainset,
    /// Score short- or long-form items.
    Evaluate(EvaluateArgs),
    /// Doc-ID memorization probes (hit@k by summed log-probability).
    Probe(ProbeArgs),
    /// Title distinctiveness ranks and bins.
    Distinctiveness(DistinctArgs),
    /// Retrieval-quality interpolation and routing strategies.
    Hybrid(HybridArgs),
    /// Verify artifact headers and contents in the output directory.
    Report,
}

#[derive(Args)]
struct IngestArgs {
    /// Input record files (repeatable, paired with --source).
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Source label per input (repeatable).
    #[arg(long = "source")]
    sources: Vec<Source>,
}

#[derive(Args)]
struct TitlesArgs {
    #[command(subcommand)]
    action: TitlesAction,
}

#[derive(Subcommand)]
enum TitlesAction {
    /// Assign globally unique canonical titles.
    Assign,
    /// Verify an answer file's citations are registry titles.
    Check { file: PathBuf },
    /// Export the title trie for constrained decoding.
    Trie,
}

#[derive(Args)]
struct ChunkArgs {
    /// Words per chunk (W).
    #[arg(short = 'w', long)]
    words: Option<usize>,
}

#[derive(Args)]
struct IndexArgs {
    /// Also write a human-readable postings dump.
    #[arg(long)]
    dump_postings: bool,
}

#[derive(Args)]
struct EmitPassiveArgs {
    /// Record variant to emit.
    #[arg(long, default_value = "passive", value_parser = ["passive", "repeat", "repeat+"])]
    variant: String,
    /// Window size in tokens (passive variant).
    #[arg(long)]
    window: Option<usize>,
    /// Drop the terminal marker in the repeat variant.
    #[arg(long)]
    no_terminal: bool,
}

#[derive(Args)]
struct AugmentBackwardArgs {
    /// Seed chunks sampled per document.
    #[arg(long)]
    per_doc_seeds: Option<usize>,
    /// Accept citations that resolve anywhere in the registry.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Line-delimited items file.
    #[arg(long)]
    items: PathBuf,
    #[arg(long, value_parser = ["short", "long"])]
    mode: String,
    /// Short-form only: also audit non-gold citations with the entailment
    /// client.
    #[arg(long)]
    audit_entailment: bool,
}

#[derive(Args)]
struct ProbeArgs {
    /// Items file; FullDoc/PartialDoc default to one item per document.
    #[arg(long)]
    items: Option<PathBuf>,
    #[arg(long, default_value = "fulldoc")]
    mode: ProbeMode,
    /// Candidate pool size (0 = all registry titles).
    #[arg(long, default_value_t = 0)]
    candidates: usize,
    /// Extra hit@k cutoff to report besides 1 and 10.
    #[arg(short = 'k', long)]
    k: Option<usize>,
}

#[derive(Args)]
struct DistinctArgs {
    #[arg(long)]
    items: PathBuf,
    /// Rank bin upper bounds "easy,medium,hard".
    #[arg(long)]
    bins: Option<String>,
}

#[derive(Args)]
struct HybridArgs {
    #[arg(long)]
    items: PathBuf,
    /// Retrieval quality q in [0,1]: 0 = sparse only, 1 = dense only.
    #[arg(long, default_value_t = 0.5)]
    quality: f64,
    /// Strategy to run, or "all".
    #[arg(long, default_value = "all")]
    strategy: String,
    /// Ranked-list file for the sparse side (default: BM25 over the index).
    #[arg(long)]
    sparse_runs: Option<PathBuf>,
    /// Ranked-list file for the dense side, or "oracle" to synthesize lists
    /// that put the gold document first.
    #[arg(long, default_value = "oracle")]
    dense_runs: String,
    /// Independent mixing/routing trials per item.
    #[arg(long, default_value_t = 1)]
    trials: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap usage problems are validation failures
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 1 } else { 2 });
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(kind) = &cli.client {
        config.client.kind = if kind == "http" { ClientKind::Http } else { ClientKind::Mock };
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }

    // flag overrides fold into the effective config so artifact headers and
    // hashes reflect what actually ran
    match &cli.command {
        Command::Chunk(args) => {
            if let Some(w) = args.words {
                config.chunk_words = w;
            }
        }
        Command::EmitPassive(args) => {
            if let Some(w) = args.window {
                config.passive_window = w;
            }
        }
        Command::AugmentBackward(args) => {
            if let Some(n) = args.per_doc_seeds {
                config.seed_chunks_per_doc = n;
            }
            if args.lenient {
                config.lenient_citations = true;
            }
        }
        Command::Distinctiveness(args) => {
            if let Some(bins) = &args.bins {
                let parts: Vec<usize> = bins
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad --bins value `{bins}`")))
                    })
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(Error::Config("--bins needs three ascending cutoffs".to_owned()));
                }
                config.distinct_bins = (parts[0], parts[1], parts[2]);
            }
        }
        _ => {}
    }
    config.validate()?;

    rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build_global()
        .ok();

    let ctx = Context::new(config)?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, &args),
        Command::Titles(args) => match args.action {
            TitlesAction::Assign => cmd_titles_assign(&ctx),
            TitlesAction::Check { file } => cmd_titles_check(&ctx, &file),
            TitlesAction::Trie => cmd_titles_trie(&ctx),
        },
        Command::Chunk(_) => cmd_chunk(&ctx),
        Command::Index(args) => cmd_index(&ctx, args.dump_postings),
        Command::EmitPassive(args) => cmd_emit_passive(&ctx, &args),
        Command::AugmentForward => cmd_augment_forward(&ctx).map(|_| ()),
        Command::AugmentBackward(_) => cmd_augment_backward(&ctx).map(|_| ()),
        Command::EmitTrainset => cmd_emit_trainset(&ctx),
        Command::Evaluate(args) => cmd_evaluate(&ctx, &args),
        Command::Probe(args) => cmd_probe(&ctx, &args),
        Command::Distinctiveness(args) => cmd_distinctiveness(&ctx, &args),
        Command::Hybrid(args) => cmd_hybrid(&ctx, &args),
        Command::Report => cmd_report(&ctx),
    }
}

struct Context {
    config: PipelineConfig,
    prompts: PromptSet,
    tokenizer: Arc<dyn Tokenizer>,
}

impl Context {
    fn new(config: PipelineConfig) -> Result<Self> {
        let prompts = PromptSet::load(config.prompts_dir.as_deref())?;
        let tokenizer = config.tokenizer.build();
        Ok(Context {
            config,
            prompts,
            tokenizer,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn header(&self, artifact: &str) -> ArtifactHeader {
        ArtifactHeader::new(artifact, &self.config)
    }

    fn marker(&self) -> citekit::text::MarkerFormat {
        self.config.marker()
    }

    fn generator(&self, role: &str) -> Result<Box<dyn GeneratorClient>> {
        let seed = self.config.seed;
        match self.config.client.kind {
            ClientKind::Mock => Ok(match role {
                "namer" => Box::new(MockNamer { seed }),
                "entities" => Box::new(MockEntityGenerator { seed }),
                "forward" => Box::new(MockForwardQa { seed }),
                "backward" => Box::new(MockBackwardGenerator {
                    seed,
                    noise_rate: self.config.client.mock_noise_rate,
                }),
                "decompose" => Box::new(MockDecomposer {
                    marker: self.marker(),
                }),
                _ => return Err(Error::Config(format!("unknown generator role `{role}`"))),
            }),
            ClientKind::Http => Ok(Box::new(HttpGenerator::from_env()?)),
        }
    }

    fn router(&self, registry: &TitleRegistry) -> Result<Box<dyn GeneratorClient>> {
        match self.config.client.kind {
            ClientKind::Mock => Ok(Box::new(MockRouter {
                seed: self.config.seed,
                titles: registry.titles().map(str::to_owned).collect(),
                marker: self.marker(),
                abstain_rate: self.config.client.mock_abstain_rate,
            })),
            ClientKind::Http => Ok(Box::new(HttpGenerator::from_env()?)),
        }
    }

    fn scorer(&self) -> Result<Box<dyn ScorerClient>> {
        match self.config.client.kind {
            ClientKind::Mock => Ok(Box::new(MockScorer {
                seed: self.config.seed,
                tokenizer: self.tokenizer.clone(),
            })),
            ClientKind::Http => Ok(Box::new(citekit::model::http::HttpScorer::from_env()?)),
        }
    }

    fn embedder(&self) -> Result<Box<dyn EmbedderClient>> {
        match self.config.client.kind {
            ClientKind::Mock => Ok(Box::new(MockEmbedder::new(self.config.seed))),
            ClientKind::Http => Ok(Box::new(citekit::model::http::HttpEmbedder::from_env()?)),
        }
    }

    fn entailment(&self) -> Result<Box<dyn EntailmentClient>> {
        match self.config.client.kind {
            ClientKind::Mock => Ok(Box::new(MockEntailment)),
            ClientKind::Http => Ok(Box::new(citekit::model::http::PromptedEntailment {
                generator: HttpGenerator::from_env()?,
                template: self.prompts.entailment.clone(),
            })),
        }
    }

    fn entail_options(&self) -> EntailOptions {
        EntailOptions {
            tau: self.config.entail_threshold,
            chunk_tokens: self.config.entail_chunk_tokens,
            max_chunks: self.config.entail_max_chunks,
            bm25: self.config.bm25,
        }
    }

    fn load_corpus(&self) -> Result<Corpus> {
        let path = if self.path(CORPUS).exists() {
            self.path(CORPUS)
        } else {
            self.path(CORPUS_RAW)
        };
        let (_, docs): (_, Vec<Document>) = read_artifact(&path)?;
        Corpus::from_documents(docs)
    }

    fn load_registry(&self) -> Result<TitleRegistry> {
        let text = std::fs::read_to_string(self.path(REGISTRY))?;
        let body = text.split_once('\n').map(|(_, rest)| rest).unwrap_or("");
        read_registry(Cursor::new(body))
    }

    fn load_chunks(&self) -> Result<Vec<Chunk>> {
        let (_, chunks) = read_artifact(&self.path(CHUNKS))?;
        Ok(chunks)
    }

    /// Installs a pool bounding concurrent model calls and runs `f` in it.
    fn with_inflight_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let threads = self.config.max_in_flight.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(pool.install(f))
    }
}

fn print_stats<T: Serialize>(label: &str, stats: &T) -> Result<()> {
    println!("== {label} ==");
    let value = serde_json::to_value(stats)?;
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            println!("  {k}: {v}");
        }
    }
    Ok(())
}

fn write_stats_artifact<T: Serialize>(ctx: &Context, name: &str, kind: &str, stats: &T) -> Result<()> {
    let mut w = ArtifactWriter::create(&ctx.path(name), &ctx.header(kind))?;
    w.write(stats)?;
    w.finish()?;
    Ok(())
}

fn cmd_ingest(ctx: &Context, args: &IngestArgs) -> Result<()> {
    if args.inputs.len() != args.sources.len() {
        return Err(Error::Config(
            "--input and --source must be given the same number of times".to_owned(),
        ));
    }
    let mut inputs: Vec<CorpusInput> = ctx.config.inputs.clone();
    inputs.extend(args.inputs.iter().zip(&args.sources).map(|(path, &source)| CorpusInput {
        path: path.clone(),
        source,
    }));
    if inputs.is_empty() {
        return Err(Error::Config(
            "no inputs: give --input/--source or set [[inputs]] in the config".to_owned(),
        ));
    }

    let mut documents = Vec::new();
    let mut stats = citekit::corpus::IngestStats::default();
    let mut seen = HashSet::new();
    for input in &inputs {
        let file = std::fs::File::open(&input.path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", input.path.display())))?;
        let stem = input
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".to_owned());
        let scope = format!("{}:{}:", input.source, stem);
        citekit::corpus::ingest_into(
            BufReader::new(file),
            input.source,
            ctx.tokenizer.as_ref(),
            &scope,
            &mut documents,
            &mut stats,
            &mut seen,
            |d| eprintln!("[ingest] {}: {d}", input.path.display()),
        )?;
    }
    let mut corpus = Corpus::from_documents(documents)?;
    corpus.stats = stats.clone();

    let mut w = ArtifactWriter::create(&ctx.path(CORPUS_RAW), &ctx.header("corpus-raw"))?;
    for doc in &corpus.documents {
        w.write(doc)?;
    }
    w.finish()?;

    #[derive(Serialize)]
    struct IngestSummary {
        documents: usize,
        tokens: usize,
        words: usize,
        skipped_empty: usize,
        malformed: usize,
    }
    let summary = IngestSummary {
        documents: corpus.len(),
        tokens: corpus.total_tokens(),
        words: corpus.documents.iter().map(|d| d.word_count).sum(),
        skipped_empty: stats.skipped_empty,
        malformed: stats.malformed,
    };
    print_stats("ingest", &summary)?;
    write_stats_artifact(ctx, "ingest.stats.jsonl", "ingest-stats", &summary)
}

fn cmd_titles_assign(ctx: &Context) -> Result<()> {
    let (_, docs): (_, Vec<Document>) = read_artifact(&ctx.path(CORPUS_RAW))?;
    let mut corpus = Corpus::from_documents(docs)?;
    let namer = ctx.generator("namer")?;
    let registry = assign_unique_titles(
        &mut corpus,
        namer.as_ref(),
        &ctx.prompts,
        &TitleAssignOptions {
            max_rename_attempts: ctx.config.max_rename_attempts,
        },
    )?;

    let mut w = ArtifactWriter::create(&ctx.path(CORPUS), &ctx.header("corpus"))?;
    for doc in &corpus.documents {
        w.write(doc)?;
    }
    w.finish()?;

    let mut body = Vec::new();
    citekit::corpus::write_registry(&registry, &mut body)?;
    let mut w = ArtifactWriter::create(&ctx.path(REGISTRY), &ctx.header("registry"))?;
    for line in String::from_utf8_lossy(&body).lines() {
        w.write_raw_line(line)?;
    }
    w.finish()?;

    #[derive(Serialize)]
    struct TitleSummary {
        titles: usize,
        renames: usize,
    }
    let summary = TitleSummary {
        titles: registry.len(),
        renames: registry.rename_log.len(),
    };
    print_stats("titles assign", &summary)?;
    write_stats_artifact(ctx, "titles.stats.jsonl", "titles-stats", &summary)
}

fn cmd_titles_check(ctx: &Context, file: &Path) -> Result<()> {
    let registry = ctx.load_registry()?;
    let marker = ctx.marker();
    let rows: Vec<serde_json::Value> = read_plain_jsonl(file)?;
    let mut bad = 0usize;
    let mut checked = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let answer = ["model_answer", "answer", "text"]
            .iter()
            .find_map(|f| row.get(f).and_then(|v| v.as_str()));
        let Some(answer) = answer else {
            eprintln!("line {}: no answer field", i + 1);
            bad += 1;
            continue;
        };
        checked += 1;
        match parse_citations(answer, &marker) {
            Ok(parsed) => {
                for title in parsed.all_citations() {
                    if !registry.contains_title(title) {
                        println!("line {}: unknown title {title:?}", i + 1);
                        bad += 1;
                    }
                }
            }
            Err(e) => {
                println!("line {}: {e}", i + 1);
                bad += 1;
            }
        }
    }
    println!("checked {checked} answers, {bad} problem(s)");
    if bad > 0 {
        return Err(Error::Contract(format!("{bad} invalid citation(s)")));
    }
    Ok(())
}

fn cmd_titles_trie(ctx: &Context) -> Result<()> {
    let registry = ctx.load_registry()?;
    let trie = build_title_trie(&registry, ctx.tokenizer.as_ref())?;
    trie.save(&ctx.path(TRIE), ctx.config.seed, ctx.config.config_hash())?;
    println!(
        "trie: {} titles, {} prefix collision(s)",
        trie.title_count(),
        trie.prefix_collisions()
    );
    Ok(())
}

fn cmd_chunk(ctx: &Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let chunks = chunk_corpus(&corpus, ctx.config.chunk_words)?;
    let mut w = ArtifactWriter::create(&ctx.path(CHUNKS), &ctx.header("chunks"))?;
    for chunk in &chunks {
        w.write(chunk)?;
    }
    let n = w.finish()?;
    println!("chunks: {n} ({} words each)", ctx.config.chunk_words);
    Ok(())
}

fn cmd_index(ctx: &Context, dump: bool) -> Result<()> {
    let chunks = ctx.load_chunks()?;
    let index = build_index(&chunks, ctx.config.bm25)?;
    index.save(&ctx.path(INDEX), ctx.config.seed, ctx.config.config_hash())?;
    println!(
        "index: {} chunks, avg length {:.2}",
        index.n_chunks(),
        index.avg_doc_length()
    );
    if dump {
        let mut out = std::io::BufWriter::new(std::fs::File::create(ctx.path(POSTINGS))?);
        index.dump_postings(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_emit_passive(ctx: &Context, args: &EmitPassiveArgs) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let marker = ctx.marker();
    let (name, kind, records, audit) = match args.variant.as_str() {
        "passive" => {
            let (records, audit) = citekit::passive::emit_passive(
                &corpus,
                &registry,
                ctx.config.passive_window,
                ctx.tokenizer.as_ref(),
                &marker,
            )?;
            ("passive.jsonl", "pretrain-passive", records, Some(audit))
        }
        "repeat" => {
            let records = citekit::passive::emit_repeat(
                &corpus,
                &registry,
                ctx.tokenizer.as_ref(),
                &marker,
                !args.no_terminal,
            )?;
            ("repeat.jsonl", "pretrain-repeat", records, None)
        }
        "repeat+" => {
            let records = citekit::passive::emit_repeat_plus(
                &corpus,
                &registry,
                ctx.config.seed,
                ctx.tokenizer.as_ref(),
                &marker,
            )?;
            ("repeat_plus.jsonl", "pretrain-repeat-plus", records, None)
        }
        other => return Err(Error::Config(format!("unknown variant `{other}`"))),
    };

    for record in &records {
        validate_record(record, &registry, &marker)?;
    }
    let mut w = ArtifactWriter::create(&ctx.path(name), &ctx.header(kind))?;
    for record in &records {
        w.write(record)?;
    }
    let n = w.finish()?;
    let tokens: usize = records.iter().map(|r| r.token_count).sum();
    println!("{}: {n} records, {tokens} tokens", args.variant);
    if let Some(audit) = audit {
        if audit.total_tokens != audit.base_tokens + audit.suffix_tokens {
            return Err(Error::Contract(
                "passive token accounting identity violated".to_owned(),
            ));
        }
        print_stats("passive audit", &audit)?;
    }
    Ok(())
}

fn cmd_augment_forward(ctx: &Context) -> Result<(Vec<ForwardQa>, citekit::forward::ForwardStats)> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let marker = ctx.marker();
    let entity_gen = ctx.generator("entities")?;
    let qa_gen = ctx.generator("forward")?;
    let (qas, stats) = ctx.with_inflight_pool(|| {
        run_forward(
            &corpus,
            &registry,
            entity_gen.as_ref(),
            qa_gen.as_ref(),
            &ctx.prompts,
            ctx.config.entities_per_doc,
            &marker,
            ctx.tokenizer.as_ref(),
            |d| eprintln!("[forward] {d}"),
        )
    })??;

    let mut w = ArtifactWriter::create(&ctx.path(FORWARD), &ctx.header("forward-qa"))?;
    for qa in &qas {
        w.write(qa)?;
    }
    w.finish()?;
    print_stats("augment-forward", &stats)?;
    write_stats_artifact(ctx, "forward.stats.jsonl", "forward-stats", &stats)?;
    Ok((qas, stats))
}

fn cmd_augment_backward(
    ctx: &Context,
) -> Result<(Vec<BackwardPair>, citekit::backward::BackwardStats)> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let chunks = ctx.load_chunks()?;
    let index = InvertedIndex::load(&ctx.path(INDEX))?;
    let provider = Bm25Provider::new(&index, &chunks);
    let gen = ctx.generator("backward")?;
    let marker = ctx.marker();
    let opts = BackwardOptions {
        per_doc_seeds: ctx.config.seed_chunks_per_doc,
        seed: ctx.config.seed,
        retrieval_depth: ctx.config.retrieval_depth,
        cluster_pool: ctx.config.cluster_pool,
        lenient: ctx.config.lenient_citations,
    };
    let (pairs, _records, stats) = ctx.with_inflight_pool(|| {
        citekit::backward::run_backward(
            &corpus,
            &registry,
            &chunks,
            &provider,
            gen.as_ref(),
            &ctx.prompts,
            &opts,
            &marker,
            ctx.tokenizer.as_ref(),
            |d| eprintln!("[backward] {d}"),
        )
    })??;

    let mut w = ArtifactWriter::create(&ctx.path(BACKWARD), &ctx.header("backward-pairs"))?;
    for pair in &pairs {
        w.write(pair)?;
    }
    w.finish()?;
    print_stats("augment-backward", &stats)?;
    write_stats_artifact(ctx, "backward.stats.jsonl", "backward-stats", &stats)?;
    Ok((pairs, stats))
}

#[derive(Serialize)]
struct TrainsetStats {
    base_tokens: usize,
    passive_records: usize,
    passive_tokens: usize,
    forward_records: usize,
    forward_tokens: usize,
    backward_records: usize,
    backward_tokens: usize,
    combined_augmented_tokens: usize,
    forward_ratio: f64,
    backward_ratio: f64,
    combined_ratio: f64,
    backward_kept: usize,
    backward_filtered: usize,
}

impl TrainsetStats {
    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("base corpus: {} tokens\n", self.base_tokens));
        out.push_str(&format!(
            "passive: {} records, {} tokens\n",
            self.passive_records, self.passive_tokens
        ));
        out.push_str(&format!(
            "forward: {} augmented tokens ({:.2}x the original corpus)\n",
            self.forward_tokens, self.forward_ratio
        ));
        out.push_str(&format!(
            "backward: {} augmented tokens ({:.2}x the original corpus)\n",
            self.backward_tokens, self.backward_ratio
        ));
        out.push_str(&format!(
            "combined: {} augmented tokens ({:.2}x the original corpus)\n",
            self.combined_augmented_tokens, self.combined_ratio
        ));
        out.push_str(&format!(
            "backward pairs kept/filtered: {}/{}\n",
            self.backward_kept, self.backward_filtered
        ));
        out
    }
}

fn cmd_emit_trainset(ctx: &Context) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let marker = ctx.marker();

    let (passive_records, audit) = citekit::passive::emit_passive(
        &corpus,
        &registry,
        ctx.config.passive_window,
        ctx.tokenizer.as_ref(),
        &marker,
    )?;

    let qas: Vec<ForwardQa> = if ctx.path(FORWARD).exists() {
        read_artifact(&ctx.path(FORWARD))?.1
    } else {
        cmd_augment_forward(ctx)?.0
    };
    let forward_records: Vec<PretrainRecord> =
        qas.iter().map(|qa| to_record(qa, ctx.tokenizer.as_ref())).collect();

    let pairs: Vec<BackwardPair> = if ctx.path(BACKWARD).exists() {
        read_artifact(&ctx.path(BACKWARD))?.1
    } else {
        cmd_augment_backward(ctx)?.0
    };
    let mut backward_records = Vec::new();
    let mut kept = 0usize;
    let mut filtered = 0usize;
    for pair in pairs {
        match pair.status {
            PairStatus::Kept => {
                kept += 1;
                let (_, record) =
                    citekit::backward::finalize_markers(pair, &marker, ctx.tokenizer.as_ref());
                if let Some(record) = record {
                    backward_records.push(record);
                }
            }
            PairStatus::Filtered => filtered += 1,
        }
    }

    let mut w = ArtifactWriter::create(&ctx.path(TRAINSET), &ctx.header("trainset"))?;
    let mut tokens_by_variant: BTreeMap<Variant, (usize, usize)> = BTreeMap::new();
    for record in passive_records.iter().chain(&forward_records).chain(&backward_records) {
        validate_record(record, &registry, &marker)?;
        let slot = tokens_by_variant.entry(record.variant).or_insert((0, 0));
        slot.0 += 1;
        slot.1 += record.token_count;
        w.write(record)?;
    }
    w.finish()?;

    let base_tokens = corpus.total_tokens();
    let get = |v: Variant| tokens_by_variant.get(&v).copied().unwrap_or((0, 0));
    let (pr, pt) = get(Variant::Passive);
    let (fr, ft) = get(Variant::Forward);
    let (br, bt) = get(Variant::Backward);
    let ratio = |t: usize| if base_tokens > 0 { t as f64 / base_tokens as f64 } else { 0.0 };
    let stats = TrainsetStats {
        base_tokens,
        passive_records: pr,
        passive_tokens: pt,
        forward_records: fr,
        forward_tokens: ft,
        backward_records: br,
        backward_tokens: bt,
        combined_augmented_tokens: ft + bt,
        forward_ratio: ratio(ft),
        backward_ratio: ratio(bt),
        combined_ratio: ratio(ft + bt),
        backward_kept: kept,
        backward_filtered: filtered,
    };
    debug_assert_eq!(audit.total_tokens, pt);
    print!("{}", stats.render());
    write_stats_artifact(ctx, "trainset.stats.jsonl", "trainset-stats", &stats)?;
    Ok(())
}

#[derive(Serialize)]
struct ShortFormRow {
    id: String,
    correctness: f64,
    precision: f64,
    recall: f64,
    citations: usize,
    parse_error: bool,
}

#[derive(Serialize)]
struct LongFormRow {
    id: String,
    correctness: f64,
    precision: f64,
    recall: f64,
    claims: usize,
    citations: usize,
    invalid_citations: usize,
}

#[derive(Serialize, Default)]
struct EvalSummary {
    items: usize,
    correctness: f64,
    citation_precision: f64,
    citation_recall: f64,
    no_citation_rate: f64,
    parse_errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    entailment_audit_rate: Option<f64>,
}

fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let marker = ctx.marker();
    match args.mode.as_str() {
        "short" => {
            let items: Vec<ShortFormItem> = read_plain_jsonl(&args.items)?;
            let registry = ctx.load_registry()?;
            for item in &items {
                if !registry.contains_title(&item.gold_title) {
                    return Err(Error::Contract(format!(
                        "item `{}`: gold title {:?} not in registry",
                        item.id, item.gold_title
                    )));
                }
            }
            let entailment = if args.audit_entailment {
                Some(ctx.entailment()?)
            } else {
                None
            };
            let corpus = if args.audit_entailment {
                Some(ctx.load_corpus()?)
            } else {
                None
            };
            let mut rows = Vec::new();
            let mut audited = 0usize;
            let mut audit_hits = 0usize;
            for item in &items {
                let (row, non_gold) = match parse_citations(&item.model_answer, &marker) {
                    Ok(parsed) => {
                        let (precision, recall) = shortform_citation_metrics(&parsed, &item.gold_title);
                        let non_gold: Vec<String> = parsed
                            .all_citations()
                            .iter()
                            .filter(|c| **c != item.gold_title)
                            .map(|c| (*c).to_owned())
                            .collect();
                        (
                            ShortFormRow {
                                id: item.id.clone(),
                                correctness: em_recall(&item.model_answer, std::slice::from_ref(&item.gold_answer)),
                                precision,
                                recall,
                                citations: parsed.citation_count(),
                                parse_error: false,
                            },
                            non_gold,
                        )
                    }
                    Err(_) => (
                        ShortFormRow {
                            id: item.id.clone(),
                            correctness: em_recall(&item.model_answer, std::slice::from_ref(&item.gold_answer)),
                            precision: 0.0,
                            recall: 0.0,
                            citations: 0,
                            parse_error: true,
                        },
                        Vec::new(),
                    ),
                };
                // optional audit: does a non-gold citation entail the answer
                // anyway?
                if let (Some(entailment), Some(corpus)) = (&entailment, &corpus) {
                    if !non_gold.is_empty() {
                        audited += 1;
                        let opts = ctx.entail_options();
                        for title in &non_gold {
                            if let Some(doc) = registry.doc_key_of(title).and_then(|k| corpus.get(k)) {
                                let (_, yes) =
                                    entailment.entails(&doc.content, &item.model_answer, opts.tau)?;
                                if yes {
                                    audit_hits += 1;
                                    break;
                                }
                            }
                        }
                    }
                }
                rows.push(row);
            }
            let n = rows.len().max(1) as f64;
            let summary = EvalSummary {
                items: rows.len(),
                correctness: rows.iter().map(|r| r.correctness).sum::<f64>() / n,
                citation_precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
                citation_recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
                no_citation_rate: rows.iter().filter(|r| r.citations == 0).count() as f64 / n,
                parse_errors: rows.iter().filter(|r| r.parse_error).count(),
                entailment_audit_rate: if audited > 0 {
                    Some(audit_hits as f64 / audited as f64)
                } else {
                    None
                },
            };
            let mut w = ArtifactWriter::create(&ctx.path("metrics.jsonl"), &ctx.header("metrics-short"))?;
            for row in &rows {
                w.write(row)?;
            }
            w.finish()?;
            print_stats("evaluate short", &summary)?;
            write_stats_artifact(ctx, "metrics.summary.jsonl", "metrics-summary", &summary)
        }
        "long" => {
            let items: Vec<LongFormItem> = read_plain_jsonl(&args.items)?;
            let corpus = ctx.load_corpus()?;
            let registry = ctx.load_registry()?;
            let entailment = ctx.entailment()?;
            let decomposer = ctx.generator("decompose")?;
            let opts = ctx.entail_options();
            let mut rows = Vec::new();
            for item in &items {
                let claims = match &item.claims {
                    Some(c) => c.clone(),
                    None => match decompose_claims(
                        &item.model_answer,
                        decomposer.as_ref(),
                        &ctx.prompts.claim_decompose,
                    ) {
                        Ok(c) if !c.is_empty() => c,
                        _ => parse_citations(&item.model_answer, &marker)
                            .map(|p| claims_from_parse(&p))
                            .unwrap_or_default(),
                    },
                };
                let score = citekit::eval::longform_citation_metrics(
                    &claims,
                    &corpus,
                    &registry,
                    entailment.as_ref(),
                    ctx.tokenizer.as_ref(),
                    &opts,
                )?;
                rows.push(LongFormRow {
                    id: item.id.clone(),
                    correctness: em_recall(&item.model_answer, &item.gold_answers),
                    precision: score.precision,
                    recall: score.recall,
                    claims: score.total_claims,
                    citations: score.total_citations,
                    invalid_citations: score.invalid_citations,
                });
            }
            let n = rows.len().max(1) as f64;
            let summary = EvalSummary {
                items: rows.len(),
                correctness: rows.iter().map(|r| r.correctness).sum::<f64>() / n,
                citation_precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
                citation_recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
                no_citation_rate: rows.iter().filter(|r| r.citations == 0).count() as f64 / n,
                parse_errors: 0,
                entailment_audit_rate: None,
            };
            let mut w = ArtifactWriter::create(&ctx.path("metrics.jsonl"), &ctx.header("metrics-long"))?;
            for row in &rows {
                w.write(row)?;
            }
            w.finish()?;
            print_stats("evaluate long", &summary)?;
            write_stats_artifact(ctx, "metrics.summary.jsonl", "metrics-summary", &summary)
        }
        other => Err(Error::Config(format!("unknown mode `{other}`"))),
    }
}

fn cmd_probe(ctx: &Context, args: &ProbeArgs) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let scorer = ctx.scorer()?;

    let items: Vec<ProbeItem> = match &args.items {
        Some(path) => read_plain_jsonl(path)?,
        None => match args.mode {
            ProbeMode::FullDoc | ProbeMode::PartialDoc => corpus
                .documents
                .iter()
                .map(|d| ProbeItem {
                    id: d.doc_key.clone(),
                    doc_key: d.doc_key.clone(),
                    question: None,
                    gold_answer: None,
                    model_answer: None,
                })
                .collect(),
            _ => {
                return Err(Error::Config(
                    "qa probe modes need --items with question/answer fields".to_owned(),
                ))
            }
        },
    };

    let candidates: Vec<String> = if args.candidates == 0 {
        registry.titles().map(str::to_owned).collect()
    } else {
        // seeded sample, forced to cover every item's true title
        let all: Vec<String> = registry.titles().map(str::to_owned).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(ctx.config.seed, &["probe-pool"]));
        let take = args.candidates.min(all.len());
        let mut pool: Vec<String> = rand::seq::index::sample(&mut rng, all.len(), take)
            .into_iter()
            .map(|i| all[i].clone())
            .collect();
        for item in &items {
            if let Some(t) = registry.title_of(&item.doc_key) {
                if !pool.iter().any(|p| p == t) {
                    pool.push(t.to_owned());
                }
            }
        }
        pool.sort();
        pool
    };

    let mut ks = vec![1usize, 10];
    if let Some(k) = args.k {
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    let report = ctx.with_inflight_pool(|| {
        memorization_probe(
            &items,
            &corpus,
            &registry,
            scorer.as_ref(),
            args.mode,
            &candidates,
            &ks,
        )
    })??;

    let mut w = ArtifactWriter::create(&ctx.path("probe.jsonl"), &ctx.header("probe"))?;
    w.write(&report)?;
    w.finish()?;
    print_stats("probe", &report)?;
    Ok(())
}

fn cmd_distinctiveness(ctx: &Context, args: &DistinctArgs) -> Result<()> {
    let registry = ctx.load_registry()?;
    let embedder = ctx.embedder()?;
    let items: Vec<DistinctItem> = read_plain_jsonl(&args.items)?;
    let report = title_distinctiveness(&items, &registry, embedder.as_ref(), ctx.config.distinct_bins)?;
    let mut w = ArtifactWriter::create(&ctx.path("distinct.jsonl"), &ctx.header("distinctiveness"))?;
    for row in &report.rows {
        w.write(row)?;
    }
    w.finish()?;

    #[derive(Serialize)]
    struct DistinctSummary<'a> {
        items: usize,
        overall_mean_rank: f64,
        bins: &'a BTreeMap<citekit::eval::DistinctBin, citekit::eval::BinStat>,
    }
    let summary = DistinctSummary {
        items: report.rows.len(),
        overall_mean_rank: report.overall_mean_rank,
        bins: &report.bins,
    };
    print_stats("distinctiveness", &summary)?;
    write_stats_artifact(ctx, "distinct.summary.jsonl", "distinct-summary", &summary)
}

#[derive(Serialize)]
struct RunRow<'a> {
    q: f64,
    trial: usize,
    #[serde(flatten)]
    result: &'a RoutedResult,
}

fn load_runs(path: &Path, label: ProviderLabel) -> Result<BTreeMap<String, RankedList>> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: String,
        entries: Vec<Entry>,
    }
    #[derive(serde::Deserialize)]
    struct Entry {
        doc_key: String,
        score: f64,
    }
    let rows: Vec<Row> = read_plain_jsonl(path)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r.id,
                RankedList::new(label, r.entries.into_iter().map(|e| (e.doc_key, e.score)).collect()),
            )
        })
        .collect())
}

fn cmd_hybrid(ctx: &Context, args: &HybridArgs) -> Result<()> {
    let corpus = ctx.load_corpus()?;
    let registry = ctx.load_registry()?;
    let marker = ctx.marker();
    let items: Vec<EvalItem> = read_plain_jsonl(&args.items)?;
    let router = ctx.router(&registry)?;

    // sparse side: run file, or BM25 over the chunk index
    let sparse_runs: BTreeMap<String, RankedList> = match &args.sparse_runs {
        Some(path) => load_runs(path, ProviderLabel::Sparse)?,
        None => {
            let index = InvertedIndex::load(&ctx.path(INDEX))?;
            items
                .iter()
                .map(|item| {
                    let hits = index.retrieve(&item.question, 50).unwrap_or_default();
                    let mut seen: Vec<String> = Vec::new();
                    let mut entries: Vec<(String, f64)> = Vec::new();
                    for (chunk_ref, score) in hits {
                        let (doc_key, _) = index.key(chunk_ref);
                        if seen.iter().any(|s| s == doc_key) {
                            continue;
                        }
                        seen.push(doc_key.to_owned());
                        entries.push((doc_key.to_owned(), score));
                    }
                    // pad with registry docs so mixing always has 5 slots
                    for title in registry.titles() {
                        if entries.len() >= citekit::hybrid::MIX_SLOTS {
                            break;
                        }
                        let key = registry.doc_key_of(title).unwrap().to_owned();
                        if !entries.iter().any(|(k, _)| k == &key) {
                            entries.push((key, 0.0));
                        }
                    }
                    (item.id.clone(), RankedList::new(ProviderLabel::Sparse, entries))
                })
                .collect()
        }
    };

    // dense side: run file, or synthesized oracle lists (gold doc first)
    let dense_runs: BTreeMap<String, RankedList> = if args.dense_runs == "oracle" {
        items
            .iter()
            .map(|item| {
                let mut entries: Vec<(String, f64)> = Vec::new();
                if let Some(title) = &item.gold_title {
                    if let Some(key) = registry.doc_key_of(title) {
                        entries.push((key.to_owned(), 1.0));
                    }
                }
                let mut filler: Vec<&str> = registry.titles().collect();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(fnv1a64(ctx.config.seed, &["dense-oracle", &item.id]));
                use rand::seq::SliceRandom;
                filler.shuffle(&mut rng);
                for title in filler {
                    if entries.len() >= 2 * citekit::hybrid::MIX_SLOTS {
                        break;
                    }
                    let key = registry.doc_key_of(title).unwrap();
                    if !entries.iter().any(|(k, _)| k == key) {
                        entries.push((key.to_owned(), 1.0 / (entries.len() + 1) as f64));
                    }
                }
                (item.id.clone(), RankedList::new(ProviderLabel::Dense, entries))
            })
            .collect()
    } else {
        load_runs(Path::new(&args.dense_runs), ProviderLabel::Dense)?
    };

    let strategies: Vec<Strategy> = if args.strategy == "all" {
        vec![Strategy::Internal, Strategy::External, Strategy::Joint, Strategy::Fallback]
    } else {
        vec![args.strategy.parse().map_err(Error::Config)?]
    };
    let run_oracle = args.strategy == "all" || args.strategy == "oracle";

    let mut w = ArtifactWriter::create(&ctx.path("runs.jsonl"), &ctx.header("hybrid-runs"))?;
    let mut per_item_scores: Vec<BTreeMap<Strategy, f64>> = Vec::new();
    for item in &items {
        let sparse = sparse_runs
            .get(&item.id)
            .ok_or_else(|| Error::Config(format!("no sparse ranked list for item `{}`", item.id)))?;
        let dense = dense_runs
            .get(&item.id)
            .ok_or_else(|| Error::Config(format!("no dense ranked list for item `{}`", item.id)))?;
        let mut scores: BTreeMap<Strategy, f64> = BTreeMap::new();
        for trial in 0..args.trials.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(
                ctx.config.seed,
                &["mix", &item.id, &trial.to_string()],
            ));
            let mixed = mix_retrieval(sparse, dense, args.quality, &mut rng)?;
            let mut internal_result: Option<RoutedResult> = None;
            let mut external_result: Option<RoutedResult> = None;
            for &strategy in &strategies {
                let retrieved = if strategy == Strategy::Internal { None } else { Some(&mixed) };
                let mut result = route(
                    strategy,
                    item,
                    router.as_ref(),
                    &corpus,
                    retrieved,
                    &ctx.prompts,
                    &marker,
                )?;
                score_correctness(&mut result, item);
                if trial == 0 {
                    scores.insert(strategy, result.correctness);
                }
                if strategy == Strategy::Internal {
                    internal_result = Some(result.clone());
                }
                if strategy == Strategy::External {
                    external_result = Some(result.clone());
                }
                w.write(&RunRow { q: args.quality, trial, result: &result })?;
            }
            if run_oracle {
                if let (Some(i), Some(e)) = (&internal_result, &external_result) {
                    let oracle = oracle_select(i, e);
                    if trial == 0 {
                        scores.insert(Strategy::Oracle, oracle.correctness);
                    }
                    w.write(&RunRow { q: args.quality, trial, result: &oracle })?;
                }
            }
        }
        per_item_scores.push(scores);
    }
    w.finish()?;

    if !per_item_scores.is_empty()
        && per_item_scores
            .iter()
            .all(|m| m.contains_key(&Strategy::Internal) && m.contains_key(&Strategy::External))
    {
        let report = conflict_slices(&per_item_scores)?;
        let table = report.render_table();
        std::fs::write(ctx.path("conflicts.txt"), &table)?;
        print!("{table}");
        write_stats_artifact(ctx, "hybrid.summary.jsonl", "hybrid-summary", &report)?;
    }
    Ok(())
}

fn cmd_report(ctx: &Context) -> Result<()> {
    let dir = &ctx.config.output_dir;
    let mut failures = 0usize;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();

    let mut headers: BTreeMap<String, ArtifactHeader> = BTreeMap::new();
    for path in &entries {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "jsonl" => match open_artifact(path) {
                Ok((header, lines)) => match header.verify() {
                    Ok(()) => {
                        let mut records = 0usize;
                        let mut bad = None;
                        for (i, line) in lines.enumerate() {
                            match line {
                                Ok(l) if l.trim().is_empty() => {}
                                Ok(l) => {
                                    if serde_json::from_str::<serde_json::Value>(&l).is_err() {
                                        bad = Some(i + 2);
                                        break;
                                    }
                                    records += 1;
                                }
                                Err(_) => {
                                    bad = Some(i + 2);
                                    break;
                                }
                            }
                        }
                        match bad {
                            None => {
                                println!(
                                    "OK   {name} (artifact={}, seed={}, records={records})",
                                    header.artifact, header.seed
                                );
                                headers.insert(name.clone(), header);
                            }
                            Some(line) => {
                                println!("FAIL {name}: unparseable record at line {line}");
                                failures += 1;
                            }
                        }
                    }
                    Err(e) => {
                        println!("FAIL {name}: {e}");
                        failures += 1;
                    }
                },
                Err(e) => {
                    println!("FAIL {name}: {e}");
                    failures += 1;
                }
            },
            "bin" => {
                let file = std::fs::File::open(path)?;
                match citekit::container::read_container(BufReader::new(file)) {
                    Ok((header, payload)) => {
                        println!(
                            "OK   {name} (section={:?}, seed={}, payload={} bytes)",
                            header.kind,
                            header.seed,
                            payload.len()
                        );
                    }
                    Err(e) => {
                        println!("FAIL {name}: {e}");
                        failures += 1;
                    }
                }
            }
            _ => {}
        }
    }

    // cross-artifact checks when the pieces are present
    if headers.contains_key(REGISTRY) && headers.contains_key(CORPUS_RAW) {
        let registry = ctx.load_registry()?;
        let (_, raw_docs): (_, Vec<Document>) = read_artifact(&ctx.path(CORPUS_RAW))?;
        let raw_titles: Vec<(String, String)> = raw_docs
            .iter()
            .map(|d| (d.doc_key.clone(), d.title.clone()))
            .collect();
        match citekit::corpus::replay_rename_log(&raw_titles, &registry.rename_log) {
            Ok(entries) if entries == registry.entries => {
                println!("OK   registry rename log replays to the registry");
            }
            Ok(_) => {
                println!("FAIL registry rename log replay does not match entries");
                failures += 1;
            }
            Err(e) => {
                println!("FAIL registry rename log replay: {e}");
                failures += 1;
            }
        }
    }
    if headers.contains_key(TRAINSET) && headers.contains_key(REGISTRY) {
        let registry = ctx.load_registry()?;
        let marker = ctx.marker();
        let (_, records): (_, Vec<PretrainRecord>) = read_artifact(&ctx.path(TRAINSET))?;
        let mut bad = 0usize;
        for record in &records {
            if validate_record(record, &registry, &marker).is_err() {
                bad += 1;
            }
        }
        if bad == 0 {
            println!(
                "OK   trainset markers well-formed and registry-valid ({} records)",
                records.len()
            );
        } else {
            println!("FAIL trainset: {bad} record(s) with invalid markers or titles");
            failures += 1;
        }
    }

    if failures > 0 {
        return Err(Error::Config(format!("{failures} artifact check(s) failed")));
    }
    println!("all artifact checks passed");
    Ok(())
}
