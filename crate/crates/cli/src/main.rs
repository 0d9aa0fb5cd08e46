//! `bioann`: operator commands for the annotation pipeline.
//!
//! JSON and PubTator output goes to stdout, logs to stderr. Exit codes: 0 on
//! success, 1 when some documents failed, 2 on usage, config or input errors.

use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use bioann_core::bench::BenchReport;
use bioann_core::evalkit::{
    format_nen_table, format_ner_table, nen_accuracy_by_type, nen_items, ner_f1, spans_of,
};
use bioann_core::ingest::{FetchMode, FetcherConfig, MapFetcher};
use bioann_core::model::{AnnotationResult, Document, EntityType};
use bioann_core::normalizer::{build_index, Lexicon, MockEncoder, MOCK_DIM};
use bioann_core::pipeline::{Pipeline, PipelineConfig};
use bioann_core::store::AnnotationStore;
use bioann_core::textproc::{parse_pubtator, serialize_pubtator, GoldDocument, GoldMention};
use bioann_service::{ApiResult, AppState, ServiceConfig};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bioann", version, about = "Biomedical named entity annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "BIOANN_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Pipeline config (JSON).
        #[arg(long, env = "BIOANN_CONFIG")]
        config: Option<PathBuf>,
        /// Annotation cache log.
        #[arg(long, default_value = "bioann-cache.log")]
        store: PathBuf,
        /// Abstract source; BIOANN_FETCH_URL overrides it.
        #[arg(long)]
        fetch_url: Option<String>,
        #[arg(long, value_enum, default_value_t = FetchModeArg::EfetchXml)]
        fetch_mode: FetchModeArg,
        /// NCBI API key for efetch.
        #[arg(long)]
        api_key: Option<String>,
    },
    /// Annotate documents from a PubTator file (or stdin).
    Annotate {
        /// Input file; `-` or absent reads stdin.
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Pubtator)]
        format: OutputFormat,
        /// Treat each non-blank input line as a plain-text document.
        #[arg(long)]
        text: bool,
        #[arg(long, env = "BIOANN_CONFIG")]
        config: Option<PathBuf>,
        /// Worker threads; output order follows input order.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Build an embedding index file from lexicon files of one type.
    Index {
        #[arg(long = "lexicon", required = true, num_args = 1..)]
        lexicons: Vec<PathBuf>,
        /// Entity type of the lexicon entries.
        #[arg(long = "type", default_value = "drug")]
        etype: EntityType,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = MOCK_DIM)]
        dim: usize,
    },
    /// Score predictions against gold annotations.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = Task::Ner)]
        task: Task,
    },
    /// Time annotation over a PubTator corpus.
    Bench {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_enum, default_value_t = BenchMode::Plain)]
        mode: BenchMode,
        #[arg(long, env = "BIOANN_CONFIG")]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Pubtator,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Ner,
    Nen,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Plain,
    Pmid,
}

#[derive(Clone, Copy, ValueEnum)]
enum FetchModeArg {
    EfetchXml,
    StubJson,
}

/// A failure carrying its exit code.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self(2, msg.into())
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let cfg = match path {
        None => PipelineConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            PipelineConfig::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn build_pipeline(path: Option<&Path>) -> Result<Pipeline, Failure> {
    Pipeline::from_config(load_config(path)?).map_err(|e| Failure::usage(e.to_string()))
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        None => read_stdin(),
        Some(p) if p == Path::new("-") => read_stdin(),
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display()))),
    }
}

fn read_stdin() -> Result<String, Failure> {
    let mut s = String::new();
    io::stdin()
        .read_to_string(&mut s)
        .map_err(|e| Failure::usage(format!("cannot read stdin: {e}")))?;
    Ok(s)
}

fn read_pubtator(path: &Path) -> Result<Vec<GoldDocument>, Failure> {
    let text = read_input(Some(path))?;
    parse_pubtator(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_serve(
    addr: &str,
    config: Option<&Path>,
    store: PathBuf,
    fetch_url: Option<String>,
    fetch_mode: FetchModeArg,
    api_key: Option<String>,
) -> CmdResult {
    let sock: SocketAddr = addr
        .parse()
        .map_err(|e| Failure::usage(format!("invalid listen address {addr:?}: {e}")))?;
    let mut fetcher = FetcherConfig {
        mode: match fetch_mode {
            FetchModeArg::EfetchXml => FetchMode::EfetchXml,
            FetchModeArg::StubJson => FetchMode::StubJson,
        },
        api_key,
        ..FetcherConfig::default()
    };
    if let Some(url) = fetch_url {
        fetcher.base_url = url;
    }
    let cfg = ServiceConfig {
        pipeline: load_config(config)?,
        store_path: store,
        fetcher: fetcher.with_env_override(),
    };
    let state = AppState::from_config(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure(1, format!("cannot start runtime: {e}")))?;
    rt.block_on(bioann_service::run(&sock.to_string(), state)).map_err(|e| match e {
        bioann_service::ServiceError::Bind { .. } => Failure::usage(e.to_string()),
        other => Failure(1, other.to_string()),
    })
}

fn to_pubtator(r: &AnnotationResult, title: &str, abstract_text: &str) -> GoldDocument {
    GoldDocument {
        doc_id: r.doc.doc_id.clone().unwrap_or_default(),
        title: title.to_string(),
        abstract_text: abstract_text.to_string(),
        gold: r
            .annotations
            .iter()
            .map(|a| GoldMention {
                begin: a.mention.begin,
                end: a.mention.end,
                surface: a.mention.surface.clone(),
                etype: a.mention.etype,
                cuis: a.norm.ids.clone(),
            })
            .collect(),
    }
}

fn cmd_annotate(input: Option<&Path>, format: OutputFormat, text_mode: bool, config: Option<&Path>, jobs: u16) -> CmdResult {
    let pipeline = build_pipeline(config)?;
    let raw = read_input(input)?;
    // (id, title, abstract)
    let docs: Vec<(String, String, String)> = if text_mode {
        raw.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| ((i + 1).to_string(), l.to_string(), String::new()))
            .collect()
    } else {
        let label = input.map_or("stdin".to_string(), |p| p.display().to_string());
        parse_pubtator(&raw)
            .map_err(|e| Failure::usage(format!("{label}: {e}")))?
            .into_iter()
            .map(|d| (d.doc_id, d.title, d.abstract_text))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs as usize)
        .build()
        .map_err(|e| Failure(1, format!("cannot start workers: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        docs.par_iter()
            .map(|(id, title, abs)| {
                let text = if text_mode { title.clone() } else { format!("{title} {abs}") };
                let doc = Document::new(Some(id.clone()), text).map_err(|e| e.to_string())?;
                pipeline.annotate_text(&doc).map_err(|e| e.to_string())
            })
            .collect()
    });

    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut failed = 0;
    for ((id, title, abs), r) in docs.iter().zip(results) {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                log::error!("document {id}: {e}");
                failed += 1;
                continue;
            }
        };
        let written = match format {
            OutputFormat::Json => serde_json::to_string(&ApiResult::from(&r))
                .map_err(io::Error::other)
                .and_then(|s| writeln!(out, "{s}")),
            OutputFormat::Pubtator => out.write_all(serialize_pubtator(&[to_pubtator(&r, title, abs)]).as_bytes()),
        };
        written.map_err(|e| Failure(1, format!("write failed: {e}")))?;
    }
    out.flush().map_err(|e| Failure(1, format!("write failed: {e}")))?;
    if failed > 0 {
        return Err(Failure(1, format!("{failed} of {} documents failed", docs.len())));
    }
    Ok(())
}

fn cmd_index(paths: &[PathBuf], etype: EntityType, out: &Path, dim: usize) -> CmdResult {
    if !etype.has_neural_normalizer() {
        return Err(Failure::usage(format!("{} has no dense normalizer", etype.as_str())));
    }
    let mut merged = Lexicon::new(etype);
    for p in paths {
        let lex = Lexicon::load(etype, p).map_err(|e| Failure::usage(e.to_string()))?;
        for (name, cui) in lex.pairs() {
            let canonical = lex.canonical_name(cui) == Some(name);
            merged
                .insert(cui, name, canonical)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
        }
    }
    if dim == 0 {
        return Err(Failure::usage("--dim must be positive"));
    }
    let idx = build_index::<f32>(&merged, &MockEncoder::new(dim)).map_err(|e| Failure::usage(e.to_string()))?;
    std::fs::write(out, idx.to_bytes()).map_err(|e| Failure(1, format!("cannot write {}: {e}", out.display())))?;
    eprintln!("wrote {} rows of dimension {dim} to {}", idx.len(), out.display());
    Ok(())
}

fn cmd_eval(gold: &Path, pred: &Path, task: Task) -> CmdResult {
    let g = read_pubtator(gold)?;
    let p = read_pubtator(pred)?;
    match task {
        Task::Ner => print!("{}", format_ner_table(&ner_f1::<f64>(&spans_of(&g), &spans_of(&p)))),
        Task::Nen => {
            let items = nen_items(&g, &p);
            let (per_type, overall) =
                nen_accuracy_by_type::<f64>(&items).map_err(|e| Failure::usage(format!("{}: {e}", gold.display())))?;
            print!("{}", format_nen_table(&per_type, overall, items.len()));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PmidBench {
    cold: BenchReport,
    warm: BenchReport,
    /// Cold mean over warm mean.
    speedup: f64,
}

fn print_json<T: Serialize>(v: &T) -> CmdResult {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure(1, e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn cmd_bench(docs_path: &Path, n: usize, mode: BenchMode, config: Option<&Path>) -> CmdResult {
    let docs = read_pubtator(docs_path)?;
    if docs.is_empty() {
        return Err(Failure::usage(format!("{} holds no documents", docs_path.display())));
    }
    let pipeline = build_pipeline(config)?;
    match mode {
        BenchMode::Plain => {
            let mut samples = Vec::with_capacity(n);
            for d in docs.iter().cycle().take(n) {
                let doc = Document::new(Some(d.doc_id.clone()), d.text()).map_err(|e| Failure(1, e.to_string()))?;
                let t = Instant::now();
                pipeline.annotate_text(&doc).map_err(|e| Failure(1, format!("{}: {e}", d.doc_id)))?;
                samples.push(t.elapsed().as_secs_f64());
            }
            print_json(&BenchReport::from_samples(&samples).expect("n >= 1"))
        }
        BenchMode::Pmid => {
            let mut fetcher = MapFetcher::new();
            for d in &docs {
                fetcher.insert(&d.doc_id, &d.title, &d.abstract_text);
            }
            let mut seen = std::collections::HashSet::new();
            let mut ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).filter(|id| seen.insert(*id)).collect();
            if n > ids.len() {
                log::warn!("corpus has {} distinct documents; benchmarking those", ids.len());
            }
            ids.truncate(n);
            let dir = tempfile::tempdir().map_err(|e| Failure(1, e.to_string()))?;
            let store = AnnotationStore::open(dir.path().join("bench.log")).map_err(|e| Failure(1, e.to_string()))?;
            let fetcher = Arc::new(fetcher);
            let run = |expect_hit: bool| -> Result<Vec<f64>, Failure> {
                let mut samples = Vec::with_capacity(ids.len());
                for id in &ids {
                    let t = Instant::now();
                    let o = pipeline
                        .annotate_pmid_traced(id, &store, fetcher.as_ref())
                        .map_err(|e| Failure(1, format!("{id}: {e}")))?;
                    samples.push(t.elapsed().as_secs_f64());
                    if o.cache_hit != expect_hit {
                        log::warn!("pmid {id}: unexpected cache_hit={}", o.cache_hit);
                    }
                }
                Ok(samples)
            };
            let cold = BenchReport::from_samples(&run(false)?).expect("n >= 1");
            let warm = BenchReport::from_samples(&run(true)?).expect("n >= 1");
            let speedup = if warm.mean_s > 0.0 { cold.mean_s / warm.mean_s } else { f64::INFINITY };
            print_json(&PmidBench { cold, warm, speedup })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Serve {
            addr,
            config,
            store,
            fetch_url,
            fetch_mode,
            api_key,
        } => cmd_serve(&addr, config.as_deref(), store, fetch_url, fetch_mode, api_key),
        Command::Annotate {
            input,
            format,
            text,
            config,
            jobs,
        } => cmd_annotate(input.as_deref(), format, text, config.as_deref(), jobs),
        Command::Index {
            lexicons,
            etype,
            out,
            dim,
        } => cmd_index(&lexicons, etype, &out, dim),
        Command::Eval { gold, pred, task } => cmd_eval(&gold, &pred, task),
        Command::Bench { docs, n, mode, config } => cmd_bench(&docs, n as usize, mode, config.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
