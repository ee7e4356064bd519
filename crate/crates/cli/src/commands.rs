//! Subcommand implementations. Stages communicate through JSONL artifact
//! files (see `meta.rs`), so each stage can be run, inspected, and tested
//! on its own.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use erex_core::artifact::content_key;
use erex_core::clustering::{
    kmeans, sentence_features, ClusterSet, ClusteringConfig, ExternalEmbeddings, IdfStats,
};
use erex_core::corpus::synth::{generate, SynthConfig};
use erex_core::corpus::{Document, Split};
use erex_core::evaluator::{
    evaluate_all, evaluate_variant, render_table, EvalConfig, EvalReport,
};
use erex_core::llm::{
    render_llm_table, rescore_transcript, run_llm_eval, ChatBackend, HttpBackend,
    HttpConfig, LlmRunConfig, MockBackend, PromptVariant, TranscriptEntry,
};
use erex_core::pipeline::{
    doc_rng, predict_document, PipelineConfig, StrategyVariant,
};
use erex_core::summarizer::{
    serialize_summary, summarize_cluster_set, DecodeMode, SummarizerBackend,
};
use erex_core::trainer::{train, Checkpoint, TrainConfig};

use crate::meta::{
    data, io_err, read_corpus, read_jsonl, run_err, usage, verify_input, write_corpus,
    write_jsonl, write_report, CliError, Meta,
};

/// Optional TOML file supplying per-subcommand configuration; flags
/// override its values.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: Option<SynthConfig>,
    pub clustering: Option<ClusteringConfig>,
    pub pipeline: Option<PipelineConfig>,
    pub train: Option<TrainConfig>,
    pub eval: Option<EvalConfig>,
    pub llm: Option<LlmRunConfig>,
    pub http: Option<HttpConfig>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
    }
}

fn parse_split(name: &str) -> Result<Split, CliError> {
    match name {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        other => Err(usage(format!(
            "unknown split `{other}` (expected train, dev, or test)"
        ))),
    }
}

fn load_embeddings(
    path: Option<&PathBuf>,
) -> Result<Option<ExternalEmbeddings>, CliError> {
    path.map(|p| ExternalEmbeddings::load(p).map_err(data)).transpose()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- synth --

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured document count.
    #[arg(long)]
    pub num_docs: Option<usize>,
    /// Override the configured generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_synth(args: &SynthArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.synth.clone().unwrap_or_default();
    if let Some(n) = args.num_docs {
        config.num_docs = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let corpus = generate(&config).map_err(run_err)?;
    let meta = Meta::new("corpus", &config)?;
    write_corpus(&args.out, &corpus, &meta)?;
    let count = |s: Split| corpus.docs_in_split(s).len();
    println!(
        "wrote {} documents to {} (train {}, dev {}, test {})",
        corpus.len(),
        args.out.display(),
        count(Split::Train),
        count(Split::Dev),
        count(Split::Test),
    );
    Ok(())
}

// ------------------------------------------------------------- validate --

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Corpus file to check.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Optional JSON report of the violations found.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let (_, corpus) = read_corpus(&args.corpus)?;
    let violations = corpus.validate();
    if let Some(path) = &args.report {
        let meta = Meta::new("report", &serde_json::json!({"command": "validate"}))?
            .with_input("corpus", &args.corpus)?;
        write_report(path, &meta, "violations", &violations)?;
    }
    for violation in &violations {
        println!("{violation}");
    }
    if violations.is_empty() {
        println!("ok: {} documents, 0 violations", corpus.len());
        Ok(())
    } else {
        Err(CliError::Findings(format!(
            "{} violation(s) in {} documents",
            violations.len(),
            corpus.len()
        )))
    }
}

// -------------------------------------------------------------- cluster --

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub doc: String,
    pub clusters: ClusterSet,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Corpus file to cluster.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output cluster-set file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured cluster count.
    #[arg(long)]
    pub k: Option<usize>,
    /// Override the configured clustering seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sentence embedding file blended into the features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

pub fn cmd_cluster(args: &ClusterArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.clustering.clone().unwrap_or_default();
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (_, corpus) = read_corpus(&args.corpus)?;
    let external = load_embeddings(args.embeddings.as_ref())?;
    let idf = IdfStats::from_documents(corpus.documents.iter());
    let mut records = Vec::with_capacity(corpus.len());
    let mut intra_total = 0usize;
    let mut inter_total = 0usize;
    for doc in &corpus.documents {
        let features =
            sentence_features(doc, &idf, &config.weights, external.as_ref()).map_err(run_err)?;
        let clusters =
            ClusterSet::from_assignment(&kmeans(&features, &config).map_err(run_err)?);
        intra_total += clusters.intra.len();
        inter_total += clusters.inter.len();
        records.push(ClusterRecord { doc: doc.id.clone(), clusters });
    }
    let meta = Meta::new("clusters", &config)?.with_input("corpus", &args.corpus)?;
    write_jsonl(&args.out, &meta, records)?;
    println!(
        "clustered {} documents into {} intra / {} inter clusters -> {}",
        corpus.len(),
        intra_total,
        inter_total,
        args.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------ summarize --

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc: String,
    /// Cluster reference, e.g. `intra:1` or `inter:0+2`.
    pub cluster: String,
    pub kind: String,
    /// Event-chain-prefixed summary text.
    pub text: String,
    pub chain: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Corpus file the clusters were built from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Cluster-set file produced by `cluster`.
    #[arg(long)]
    pub clusters: PathBuf,
    /// Output summary file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// identity (keep clusters verbatim), extractive (trained scorer;
    /// needs --checkpoint), or chat-mock (offline chat stand-in).
    #[arg(long, default_value = "identity")]
    pub backend: String,
    /// Checkpoint supplying the trained sentence scorer.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Summary length as a fraction of cluster length.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Sampling seed (extractive backend only).
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_summarize(args: &SummarizeArgs, file: &FileConfig) -> Result<(), CliError> {
    let (_, corpus) = read_corpus(&args.corpus)?;
    let (cluster_meta, records): (_, Vec<ClusterRecord>) = read_jsonl(&args.clusters)?;
    if let Some(meta) = &cluster_meta {
        verify_input(meta, "corpus", &args.corpus)?;
    }
    let pipeline = file.pipeline.clone().unwrap_or_default();
    let budget = args.budget.unwrap_or(pipeline.budget);
    let seed = args.seed.unwrap_or(pipeline.seed);
    let checkpoint = args.checkpoint.as_ref().map(|p| load_checkpoint(p)).transpose()?;
    let mock = MockBackend;
    let chat = erex_core::llm::ChatSummarizer { backend: &mock };
    let backend = match args.backend.as_str() {
        "identity" => SummarizerBackend::Identity,
        "extractive" => {
            let checkpoint = checkpoint.as_ref().ok_or_else(|| {
                usage("--backend extractive needs --checkpoint for the scorer")
            })?;
            SummarizerBackend::Extractive {
                policy: &checkpoint.models.policy,
                mode: DecodeMode::Greedy,
            }
        }
        "chat-mock" => SummarizerBackend::External(&chat),
        other => {
            return Err(usage(format!(
                "unknown backend `{other}` (expected identity, extractive, or chat-mock)"
            )))
        }
    };
    // Feature vectors must match the scorer's training vocabulary, so use
    // the checkpoint's idf whenever one is supplied.
    let idf = match &checkpoint {
        Some(c) => c.models.idf.clone(),
        None => IdfStats::from_documents(corpus.documents.iter()),
    };
    let weights = match &checkpoint {
        Some(c) => c.config.pipeline.clustering.weights.clone(),
        None => file.clustering.clone().unwrap_or_default().weights,
    };
    let mut out = Vec::new();
    for record in &records {
        let doc = corpus.document(&record.doc).ok_or_else(|| {
            data(format!("cluster file names unknown document `{}`", record.doc))
        })?;
        let features = sentence_features(doc, &idf, &weights, None).map_err(run_err)?;
        let mut rng = doc_rng(seed, &doc.id);
        let summaries = summarize_cluster_set(
            &backend,
            doc,
            &record.clusters,
            &features,
            budget,
            &mut rng,
        )
        .map_err(run_err)?;
        for (kind, list) in [("intra", &summaries.intra), ("inter", &summaries.inter)] {
            for summary in list {
                out.push(SummaryRecord {
                    doc: doc.id.clone(),
                    cluster: summary.source.to_string(),
                    kind: kind.to_string(),
                    text: serialize_summary(summary),
                    chain: summary.event_chain.clone(),
                });
            }
        }
    }
    let config_echo = serde_json::json!({
        "backend": args.backend,
        "budget": budget,
        "seed": seed,
    });
    let meta = Meta::new("summaries", &config_echo)?
        .with_input("corpus", &args.corpus)?
        .with_input("clusters", &args.clusters)?;
    let total = out.len();
    write_jsonl(&args.out, &meta, out)?;
    println!(
        "summarized {} clusters across {} documents -> {}",
        total,
        records.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train --

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus file with train/dev splits.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Optional epoch log (JSON lines, reproducible).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Context strategy to train under.
    #[arg(long)]
    pub variant: Option<String>,
    /// Sentence embedding file blended into clustering features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.train.clone().unwrap_or_default();
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = batch;
    }
    if let Some(name) = &args.variant {
        config.pipeline.variant = name.parse::<StrategyVariant>().map_err(usage)?;
    }
    let (_, corpus) = read_corpus(&args.corpus)?;
    let external = load_embeddings(args.embeddings.as_ref())?;
    let outcome = train(&corpus, &config, external.as_ref()).map_err(run_err)?;
    let checkpoint = Checkpoint::from_outcome(&outcome, &config);
    checkpoint.save(&args.checkpoint).map_err(io_err)?;
    if let Some(path) = &args.log {
        let meta = Meta::new("train-log", &config)?.with_input("corpus", &args.corpus)?;
        write_jsonl(path, &meta, outcome.log.iter())?;
    }
    println!(
        "{:<6} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "epoch", "loss", "reward", "dev_p", "dev_r", "dev_f1"
    );
    for row in &outcome.log {
        println!(
            "{:<6} {:>10.5} {:>10} {:>8.4} {:>8.4} {:>8.4}",
            row.epoch,
            row.relation_loss,
            row.policy_reward
                .map_or_else(|| "-".to_string(), |r| format!("{r:.4}")),
            row.dev_precision,
            row.dev_recall,
            row.dev_f1,
        );
    }
    println!(
        "best epoch {} (dev f1 {:.4}) -> {}",
        outcome.best_epoch,
        outcome.best_f1,
        args.checkpoint.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- eval --

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus file to score on.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to score (train, dev, or test).
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Context strategy; defaults to the one the checkpoint trained under.
    #[arg(long)]
    pub variant: Option<String>,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sentence embedding file blended into clustering features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let (_, corpus) = read_corpus(&args.corpus)?;
    let external = load_embeddings(args.embeddings.as_ref())?;
    let docs = corpus.docs_in_split(split);
    if docs.is_empty() {
        return Err(data(format!("no documents in the {} split", args.split)));
    }
    let mut pipeline = checkpoint.config.pipeline.clone();
    if let Some(name) = &args.variant {
        pipeline.variant = name.parse::<StrategyVariant>().map_err(usage)?;
    }
    let eval_config = file.eval.clone().unwrap_or_else(|| checkpoint.config.eval.clone());
    let variant_report = evaluate_variant(
        &checkpoint.models,
        &docs,
        &pipeline,
        pipeline.variant,
        &eval_config,
        external.as_ref(),
    )
    .map_err(run_err)?;
    let report = EvalReport {
        unit: eval_config.unit,
        bucket_edges: eval_config.bucket_edges.clone(),
        threshold: eval_config.threshold,
        documents: docs.len(),
        variants: vec![variant_report],
    };
    print!("{}", render_table(&report));
    if let Some(path) = &args.out {
        let meta = Meta::new(
            "report",
            &serde_json::json!({"pipeline": pipeline, "eval": eval_config, "split": args.split}),
        )?
        .with_input("corpus", &args.corpus)?
        .with_input("checkpoint", &args.checkpoint)?;
        write_report(path, &meta, "report", &report)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

// --------------------------------------------------------------- ablate --

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Corpus file to score on.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to score (train, dev, or test).
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sentence embedding file blended into clustering features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

pub fn cmd_ablate(args: &AblateArgs, file: &FileConfig) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let (_, corpus) = read_corpus(&args.corpus)?;
    let external = load_embeddings(args.embeddings.as_ref())?;
    let docs = corpus.docs_in_split(split);
    if docs.is_empty() {
        return Err(data(format!("no documents in the {} split", args.split)));
    }
    let eval_config = file.eval.clone().unwrap_or_else(|| checkpoint.config.eval.clone());
    let report = evaluate_all(
        &checkpoint.models,
        &docs,
        &checkpoint.config.pipeline,
        &eval_config,
        external.as_ref(),
    )
    .map_err(run_err)?;
    print!("{}", render_table(&report));
    println!("{} strategy variants scored", report.variants.len());
    if let Some(path) = &args.out {
        let meta = Meta::new(
            "report",
            &serde_json::json!({
                "pipeline": checkpoint.config.pipeline,
                "eval": eval_config,
                "split": args.split,
            }),
        )?
        .with_input("corpus", &args.corpus)?
        .with_input("checkpoint", &args.checkpoint)?;
        write_report(path, &meta, "report", &report)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

// -------------------------------------------------------------- llm-run --

#[derive(Debug, Args)]
pub struct LlmRunArgs {
    /// Corpus file to label.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split to label (train, dev, or test).
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Label only this many documents, chosen by seeded sampling.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Prompt variant: document, sentence_pair, doc_clustering, or cluster_summary.
    #[arg(long)]
    pub variant: Option<String>,
    /// mock (offline, deterministic) or http (JSON chat API).
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Transcript output (JSON lines).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint whose scorer produces the summaries for `cluster_summary`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_shot: Option<usize>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Re-score a stored transcript instead of calling any backend.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

pub fn cmd_llm_run(args: &LlmRunArgs, file: &FileConfig) -> Result<(), CliError> {
    let (_, corpus) = read_corpus(&args.corpus)?;
    let mut config = file.llm.clone().unwrap_or_default();
    if let Some(name) = &args.variant {
        config.variant = name.parse::<PromptVariant>().map_err(usage)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(k) = args.k_shot {
        config.k_shot = k;
    }
    if let Some(n) = args.concurrency {
        config.concurrency = n;
    }
    if let Some(dir) = &args.cache_dir {
        config.cache_dir = Some(dir.clone());
    }

    if let Some(transcript_path) = &args.replay {
        let (_, entries): (_, Vec<TranscriptEntry>) = read_jsonl(transcript_path)?;
        // Score the documents the transcript names, in first-seen order.
        let mut seen = BTreeSet::new();
        let mut docs = Vec::new();
        for entry in &entries {
            if seen.insert(entry.doc.as_str()) {
                let doc = corpus.document(&entry.doc).ok_or_else(|| {
                    data(format!("transcript names unknown document `{}`", entry.doc))
                })?;
                docs.push(doc);
            }
        }
        let taxonomy = erex_core::corpus::Taxonomy::default();
        let report =
            rescore_transcript(&entries, &docs, &taxonomy, &config.eval).map_err(run_err)?;
        print!("{}", render_llm_table(&[&report]));
        if let Some(path) = &args.out {
            let meta = Meta::new("report", &config)?
                .with_input("corpus", &args.corpus)?
                .with_input("transcript", transcript_path)?;
            write_report(path, &meta, "report", &report)?;
            println!("report -> {}", path.display());
        }
        return Ok(());
    }

    let split = parse_split(&args.split)?;
    let mut docs = corpus.docs_in_split(split);
    if docs.is_empty() {
        return Err(data(format!("no documents in the {} split", args.split)));
    }
    if let Some(n) = args.sample {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(content_key(config.seed, b"llm-sample"));
        order.shuffle(&mut rng);
        let mut keep: Vec<usize> = order.into_iter().take(n.min(docs.len())).collect();
        keep.sort_unstable();
        docs = keep.into_iter().map(|i| docs[i]).collect();
    }
    let exemplar_docs = corpus.docs_in_split(Split::Train);
    let taxonomy = erex_core::corpus::Taxonomy::default();
    let checkpoint = args.checkpoint.as_ref().map(|p| load_checkpoint(p)).transpose()?;
    let idf = match &checkpoint {
        Some(c) => c.models.idf.clone(),
        None => IdfStats::from_documents(corpus.documents.iter()),
    };
    let summarizer = match &checkpoint {
        Some(c) => SummarizerBackend::Extractive {
            policy: &c.models.policy,
            mode: DecodeMode::Greedy,
        },
        None => SummarizerBackend::Identity,
    };
    let mock = MockBackend;
    let http;
    let backend: &dyn ChatBackend = match args.backend.as_str() {
        "mock" => &mock,
        "http" => {
            http = HttpBackend::new(file.http.clone().unwrap_or_default())
                .map_err(usage)?;
            &http
        }
        other => {
            return Err(usage(format!(
                "unknown backend `{other}` (expected mock or http)"
            )))
        }
    };
    let outcome = run_llm_eval(
        &docs,
        &exemplar_docs,
        &taxonomy,
        &idf,
        backend,
        &summarizer,
        &config,
    )
    .map_err(run_err)?;
    print!("{}", render_llm_table(&[&outcome.report]));
    println!(
        "calls {} cache hits {} prompt tokens {} answer tokens {}",
        outcome.stats.calls,
        outcome.stats.cache_hits,
        outcome.stats.prompt_tokens,
        outcome.stats.answer_tokens,
    );
    if let Some(path) = &args.transcript {
        let meta = Meta::new("transcript", &config)?.with_input("corpus", &args.corpus)?;
        write_jsonl(path, &meta, outcome.transcript.iter())?;
        println!("transcript -> {}", path.display());
    }
    if let Some(path) = &args.out {
        let meta = Meta::new("report", &config)?.with_input("corpus", &args.corpus)?;
        write_report(path, &meta, "report", &outcome.report)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

// -------------------------------------------------------------- inspect --

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Document id to dump; defaults to the first document.
    #[arg(long)]
    pub doc: Option<String>,
    /// Cluster-set file to show (hash-checked against the corpus).
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Summary file to show (hash-checked against corpus and clusters).
    #[arg(long)]
    pub summaries: Option<PathBuf>,
    /// Checkpoint; when given, predictions for the document are shown.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<(), CliError> {
    let (_, corpus) = read_corpus(&args.corpus)?;
    let doc: &Document = match &args.doc {
        Some(id) => corpus
            .document(id)
            .ok_or_else(|| data(format!("no document `{id}` in the corpus")))?,
        None => &corpus.documents[0],
    };
    println!("document {} ({:?} split)", doc.id, corpus.split_of(&doc.id).unwrap());
    for sentence in &doc.sentences {
        println!("  S{}: {}", sentence.index, sentence.tokens.join(" "));
    }
    println!("events:");
    for event in &doc.events {
        for mention in &event.mentions {
            println!(
                "  {} `{}` (S{} tokens {}..{})",
                event.id,
                doc.mention_surface(mention),
                mention.sentence,
                mention.start,
                mention.end
            );
        }
    }
    println!("gold relations:");
    for relation in &doc.relations {
        println!("  {} -> {} [{}]", relation.head, relation.tail, relation.rtype);
    }

    if let Some(path) = &args.clusters {
        let (meta, records): (_, Vec<ClusterRecord>) = read_jsonl(path)?;
        if let Some(meta) = &meta {
            let status = verify_input(meta, "corpus", &args.corpus)?;
            println!("hash chain clusters -> corpus: {status}");
        }
        if let Some(record) = records.iter().find(|r| r.doc == doc.id) {
            for cluster in &record.clusters.intra {
                println!("  intra:{} sentences {:?}", cluster.id, cluster.sentences);
            }
            for cluster in &record.clusters.inter {
                println!(
                    "  inter:{}+{} sentences {:?}",
                    cluster.source.0, cluster.source.1, cluster.sentences
                );
            }
        } else {
            println!("  (no cluster record for {})", doc.id);
        }
    }

    if let Some(path) = &args.summaries {
        let (meta, records): (_, Vec<SummaryRecord>) = read_jsonl(path)?;
        if let Some(meta) = &meta {
            let corpus_status = verify_input(meta, "corpus", &args.corpus)?;
            println!("hash chain summaries -> corpus: {corpus_status}");
            if let Some(clusters_path) = &args.clusters {
                let status = verify_input(meta, "clusters", clusters_path)?;
                println!("hash chain summaries -> clusters: {status}");
            }
        }
        for record in records.iter().filter(|r| r.doc == doc.id) {
            println!("  {} [{}] {}", record.cluster, record.kind, record.text);
        }
    }

    if let Some(path) = &args.checkpoint {
        let checkpoint = load_checkpoint(path)?;
        let (prepared, predictions) =
            predict_document(&checkpoint.models, doc, &checkpoint.config.pipeline, None)
                .map_err(run_err)?;
        println!(
            "predictions (strategy {}, threshold {}):",
            checkpoint.config.pipeline.variant, checkpoint.config.pipeline.threshold
        );
        let threshold = checkpoint.config.pipeline.threshold;
        let names = checkpoint.models.taxonomy.names();
        for prediction in &predictions {
            let labels: Vec<String> = prediction
                .probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > threshold)
                .map(|(t, &p)| format!("{} {:.3}", names[t], p))
                .collect();
            if !labels.is_empty() {
                println!(
                    "  {} -> {} [{}] via {:?}",
                    prediction.head,
                    prediction.tail,
                    labels.join(", "),
                    prediction.source
                );
            }
        }
        println!("context summaries used:");
        for summary in prepared.summaries.inter.iter().chain(prepared.summaries.intra.iter()) {
            println!("  {} chain: {}", summary.source, summary.event_chain.join(" | "));
        }
    }
    Ok(())
}
