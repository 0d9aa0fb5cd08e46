//! End-to-end annotation: text → tokens → multi-head tags → mentions →
//! normalizations, plus the cached PMID path.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AbstractFetcher, IngestError};
use crate::model::{is_valid_pmid, Annotation, AnnotationResult, CharMap, Document, EntityType, Normalization};
use crate::normalizer::{
    EmbeddingIndex, Encoder, HybridNormalizer, IndexFormatError, Lexicon, LexiconError, MockEncoder, NormalizeError,
    RemoteEncoder, DEFAULT_THRESHOLD, MOCK_DIM,
};
use crate::scalar::Scalar;
use crate::store::{AnnotationStore, CacheRecord, StoreError};
use crate::tagger::{
    chunk_tokens, decode_bio, recognize_mutations, resolve_overlaps, GazetteerTagger, OverlapPolicy, RemoteTagger,
    TaggerBackend, TaggerError, MIN_WINDOW,
};
use crate::textproc::{tokenize, Segmenter};

pub const DEFAULT_PIPELINE_VERSION: &str = concat!("bioann-", env!("CARGO_PKG_VERSION"), "+seed");
pub const DEFAULT_MAX_LEN: usize = 256;
pub const DEFAULT_MAX_CHARS: usize = 100_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("input has {chars} characters, above the limit of {max}")]
    InputTooLarge { chars: usize, max: usize },
    #[error("invalid pmid {0:?}")]
    InvalidPmid(String),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("index {path}: {source}")]
    Index { path: String, source: IndexFormatError },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Gazetteer,
    Remote,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Gazetteer => "gazetteer",
            BackendKind::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub url: Option<String>,
    pub dim: usize,
    pub timeout_ms: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Mock,
            url: None,
            dim: MOCK_DIM,
            timeout_ms: 5_000,
        }
    }
}

/// Pipeline settings; the JSON config file mirrors this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline_version: String,
    pub enabled_types: Vec<EntityType>,
    pub overlap_policy: OverlapPolicy,
    pub default_threshold: f64,
    /// Per-type overrides of `default_threshold`.
    pub thresholds: BTreeMap<EntityType, f64>,
    /// Tokens per tagging window.
    pub max_len: usize,
    /// Longest accepted input in characters.
    pub max_chars: usize,
    pub backend: BackendKind,
    pub tagger_url: Option<String>,
    pub tagger_timeout_ms: u64,
    pub encoder: EncoderConfig,
    /// Lexicon files by type; types without one use the bundled seed lexicon
    /// when `seed_resources` is set.
    pub lexicons: BTreeMap<EntityType, PathBuf>,
    /// Extra gazetteer phrase files (one phrase per line) by type.
    pub gazetteers: BTreeMap<EntityType, Vec<PathBuf>>,
    /// Prebuilt embedding index files by type.
    pub indexes: BTreeMap<EntityType, PathBuf>,
    pub seed_resources: bool,
    /// Dense retrieval fallback; off means rule-only normalization.
    pub neural_normalization: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pipeline_version: DEFAULT_PIPELINE_VERSION.to_string(),
            enabled_types: EntityType::ALL.to_vec(),
            overlap_policy: OverlapPolicy::KeepAll,
            default_threshold: DEFAULT_THRESHOLD,
            thresholds: BTreeMap::new(),
            max_len: DEFAULT_MAX_LEN,
            max_chars: DEFAULT_MAX_CHARS,
            backend: BackendKind::Gazetteer,
            tagger_url: None,
            tagger_timeout_ms: 10_000,
            encoder: EncoderConfig::default(),
            lexicons: BTreeMap::new(),
            gazetteers: BTreeMap::new(),
            indexes: BTreeMap::new(),
            seed_resources: true,
            neural_normalization: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.enabled_types.is_empty() {
            return bad("enabled_types is empty".into());
        }
        if self.pipeline_version.trim().is_empty() {
            return bad("pipeline_version is empty".into());
        }
        if self.max_len < MIN_WINDOW {
            return bad(format!("max_len {} is below {MIN_WINDOW}", self.max_len));
        }
        if self.max_chars == 0 {
            return bad("max_chars must be positive".into());
        }
        for (t, v) in std::iter::once((None, &self.default_threshold)).chain(self.thresholds.iter().map(|(t, v)| (Some(t), v))) {
            if !v.is_finite() {
                return bad(format!("threshold for {t:?} is not finite"));
            }
        }
        if self.backend == BackendKind::Remote && self.tagger_url.as_deref().is_none_or(str::is_empty) {
            return bad("backend \"remote\" needs tagger_url".into());
        }
        if self.encoder.kind == EncoderKind::Remote && self.encoder.url.as_deref().is_none_or(str::is_empty) {
            return bad("encoder kind \"remote\" needs encoder.url".into());
        }
        if self.encoder.dim == 0 {
            return bad("encoder.dim must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn tagged_types(&self) -> Vec<EntityType> {
        let mut v: Vec<EntityType> = self
            .enabled_types
            .iter()
            .copied()
            .filter(|t| *t != EntityType::Mutation)
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Dictionaries and phrase lists bundled with the crate.
pub mod seed {
    use super::*;

    const LEXICONS: [(EntityType, &str, &str); 6] = [
        (EntityType::Gene, "gene.tsv", include_str!("../resources/lexicons/gene.tsv")),
        (EntityType::Disease, "disease.tsv", include_str!("../resources/lexicons/disease.tsv")),
        (EntityType::Drug, "drug.tsv", include_str!("../resources/lexicons/drug.tsv")),
        (EntityType::Species, "species.tsv", include_str!("../resources/lexicons/species.tsv")),
        (EntityType::CellLine, "cell_line.tsv", include_str!("../resources/lexicons/cell_line.tsv")),
        (EntityType::CellType, "cell_type.tsv", include_str!("../resources/lexicons/cell_type.tsv")),
    ];

    const GAZETTEERS: [(EntityType, &str); 4] = [
        (EntityType::Disease, include_str!("../resources/gazetteer/disease.txt")),
        (EntityType::Drug, include_str!("../resources/gazetteer/drug.txt")),
        (EntityType::Dna, include_str!("../resources/gazetteer/dna.txt")),
        (EntityType::Rna, include_str!("../resources/gazetteer/rna.txt")),
    ];

    pub fn lexicon(etype: EntityType) -> Option<Lexicon> {
        LEXICONS.iter().find(|(t, _, _)| *t == etype).map(|(t, file, text)| {
            Lexicon::parse(*t, text, file).expect("bundled lexicons are well formed")
        })
    }

    pub fn lexicons() -> Vec<Lexicon> {
        LEXICONS.iter().filter_map(|(t, _, _)| lexicon(*t)).collect()
    }

    /// Non-comment lines of a phrase list.
    pub fn phrases(text: &str) -> impl Iterator<Item = &str> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
    }

    pub fn extra_phrases(etype: EntityType) -> Vec<&'static str> {
        GAZETTEERS
            .iter()
            .filter(|(t, _)| *t == etype)
            .flat_map(|(_, text)| phrases(text))
            .collect()
    }

    /// Gazetteer over every lexicon name plus the bundled phrase lists.
    pub fn gazetteer(lexicons: &[Lexicon]) -> GazetteerTagger {
        let mut g = GazetteerTagger::new();
        for lex in lexicons {
            g.add_lexicon(lex);
        }
        for (t, text) in GAZETTEERS {
            for p in phrases(text) {
                g.add_phrase(t, p);
            }
        }
        g
    }
}

/// Result of [`Pipeline::annotate_pmid_traced`].
#[derive(Debug, Clone)]
pub struct PmidOutcome {
    pub result: AnnotationResult,
    pub cache_hit: bool,
}

/// Loaded models and settings. Shared immutably across threads.
pub struct Pipeline<S: Scalar = f32> {
    cfg: PipelineConfig,
    tagger: Arc<dyn TaggerBackend<S>>,
    normalizer: HybridNormalizer<S>,
    segmenter: Segmenter,
    tagged_types: Vec<EntityType>,
}

impl<S: Scalar> std::fmt::Debug for Pipeline<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("version", &self.cfg.pipeline_version)
            .field("backend", &self.tagger.kind())
            .field("types", &self.cfg.enabled_types)
            .finish()
    }
}

fn load_lexicons(cfg: &PipelineConfig) -> Result<Vec<Lexicon>, PipelineError> {
    let mut out = Vec::new();
    for t in &cfg.enabled_types {
        if let Some(path) = cfg.lexicons.get(t) {
            out.push(Lexicon::load(*t, path)?);
        } else if cfg.seed_resources {
            if let Some(lex) = seed::lexicon(*t) {
                out.push(lex);
            }
        }
    }
    Ok(out)
}

fn load_gazetteer(cfg: &PipelineConfig, lexicons: &[Lexicon]) -> Result<GazetteerTagger, PipelineError> {
    let mut g = if cfg.seed_resources {
        seed::gazetteer(lexicons)
    } else {
        let mut g = GazetteerTagger::new();
        for lex in lexicons {
            g.add_lexicon(lex);
        }
        g
    };
    for (t, paths) in &cfg.gazetteers {
        for path in paths {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Config(format!("gazetteer {}: {e}", path.display())))?;
            for p in seed::phrases(&text) {
                g.add_phrase(*t, p);
            }
        }
    }
    Ok(g)
}

impl<S: Scalar> Pipeline<S> {
    /// Loads lexicons, gazetteers, indexes and backends named by `cfg`.
    pub fn from_config(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let lexicons = load_lexicons(&cfg)?;

        let tagger: Arc<dyn TaggerBackend<S>> = match cfg.backend {
            BackendKind::Gazetteer => Arc::new(load_gazetteer(&cfg, &lexicons)?),
            BackendKind::Remote => Arc::new(RemoteTagger::new(
                cfg.tagger_url.clone().unwrap_or_default(),
                Duration::from_millis(cfg.tagger_timeout_ms),
            )),
        };
        let encoder: Arc<dyn Encoder<S>> = match cfg.encoder.kind {
            EncoderKind::Mock => Arc::new(MockEncoder::new(cfg.encoder.dim)),
            EncoderKind::Remote => Arc::new(RemoteEncoder::new(
                cfg.encoder.url.clone().unwrap_or_default(),
                cfg.encoder.dim,
                Duration::from_millis(cfg.encoder.timeout_ms),
            )),
        };

        let mut prebuilt = BTreeMap::new();
        for (t, path) in &cfg.indexes {
            let index_err = |source| PipelineError::Index {
                path: path.display().to_string(),
                source,
            };
            let file = std::fs::File::open(path).map_err(|e| index_err(e.into()))?;
            let idx = EmbeddingIndex::read_from(std::io::BufReader::new(file)).map_err(index_err)?;
            if idx.dim() != encoder.dim() {
                return Err(PipelineError::Config(format!(
                    "index {} has dimension {}, encoder has {}",
                    path.display(),
                    idx.dim(),
                    encoder.dim()
                )));
            }
            prebuilt.insert(*t, idx);
        }
        let normalizer = if prebuilt.is_empty() {
            HybridNormalizer::new(lexicons, encoder)?
        } else {
            let mut indexes = BTreeMap::new();
            for lex in &lexicons {
                if let Some(idx) = prebuilt.remove(&lex.etype()) {
                    indexes.insert(lex.etype(), idx);
                } else if lex.etype().has_neural_normalizer() && !lex.is_empty() {
                    indexes.insert(lex.etype(), crate::normalizer::build_index(lex, encoder.as_ref())?);
                }
            }
            HybridNormalizer::with_indexes(lexicons, indexes, encoder)
        };
        Ok(Self::with_components(cfg, tagger, normalizer))
    }

    /// Assembles a pipeline from prebuilt parts. Threshold and neural settings
    /// of `cfg` are applied to `normalizer`.
    pub fn with_components(
        cfg: PipelineConfig,
        tagger: Arc<dyn TaggerBackend<S>>,
        mut normalizer: HybridNormalizer<S>,
    ) -> Self {
        normalizer.set_default_threshold(cfg.default_threshold);
        for (t, v) in &cfg.thresholds {
            normalizer.set_threshold(*t, *v);
        }
        normalizer.set_neural(cfg.neural_normalization);
        Self {
            tagged_types: cfg.tagged_types(),
            cfg,
            tagger,
            normalizer,
            segmenter: Segmenter::default(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn version(&self) -> &str {
        &self.cfg.pipeline_version
    }

    pub fn backend_kind(&self) -> &'static str {
        self.tagger.kind()
    }

    pub fn backend_ok(&self) -> bool {
        self.tagger.is_available()
    }

    pub fn normalizer(&self) -> &HybridNormalizer<S> {
        &self.normalizer
    }

    /// Annotates one document. Deterministic apart from `elapsed_ms`.
    pub fn annotate_text(&self, doc: &Document) -> Result<AnnotationResult, PipelineError> {
        let start = Instant::now();
        let chars = doc.char_len();
        if chars > self.cfg.max_chars {
            return Err(PipelineError::InputTooLarge {
                chars,
                max: self.cfg.max_chars,
            });
        }
        let text = CharMap::new(&doc.text);
        let tokens = tokenize(&doc.text);
        let sentences = self.segmenter.segment(&doc.text);
        let windows = chunk_tokens(&tokens, &sentences, self.cfg.max_len)?;

        let mut mentions = Vec::new();
        if !self.tagged_types.is_empty() {
            for w in windows {
                let window = &tokens[w];
                let heads = self.tagger.tag(window, &self.tagged_types)?;
                for t in &self.tagged_types {
                    let seq = heads.get(t).ok_or_else(|| {
                        TaggerError::ProtocolViolation(format!("backend returned no {} head", t.as_str()))
                    })?;
                    mentions.extend(decode_bio(seq, window, &text)?);
                }
            }
        }
        if self.cfg.enabled_types.contains(&EntityType::Mutation) {
            mentions.extend(recognize_mutations(&doc.text));
        }
        let mentions = resolve_overlaps(mentions, self.cfg.overlap_policy);

        let mut annotations = Vec::with_capacity(mentions.len());
        for m in mentions {
            let norm = if m.etype == EntityType::Mutation {
                Normalization::unmapped()
            } else {
                self.normalizer.normalize(&m.surface, m.etype)?
            };
            annotations.push(Annotation { mention: m, norm });
        }
        let mut result = AnnotationResult {
            doc: doc.clone(),
            annotations,
            elapsed_ms: 0.0,
            pipeline_version: self.cfg.pipeline_version.clone(),
        };
        result.sort_annotations();
        result.elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        Ok(result)
    }

    pub fn annotate_pmid(
        &self,
        pmid: &str,
        store: &AnnotationStore,
        fetcher: &dyn AbstractFetcher,
    ) -> Result<AnnotationResult, PipelineError> {
        self.annotate_pmid_traced(pmid, store, fetcher).map(|o| o.result)
    }

    /// Cache lookup, else fetch, annotate and persist before returning.
    ///
    /// Records written by a different pipeline version count as misses and
    /// are overwritten.
    pub fn annotate_pmid_traced(
        &self,
        pmid: &str,
        store: &AnnotationStore,
        fetcher: &dyn AbstractFetcher,
    ) -> Result<PmidOutcome, PipelineError> {
        let start = Instant::now();
        if !is_valid_pmid(pmid) {
            return Err(PipelineError::InvalidPmid(pmid.to_string()));
        }
        if let Some(rec) = store.get(pmid)? {
            if rec.pipeline_version == self.cfg.pipeline_version {
                match rec.decode_payload() {
                    Ok(payload) => {
                        return Ok(PmidOutcome {
                            result: payload.into_result(start.elapsed().as_secs_f64() * 1000.0),
                            cache_hit: true,
                        });
                    }
                    Err(e) => log::warn!("ignoring cached record for pmid {pmid}: {e}"),
                }
            }
        }
        let doc = fetcher.fetch_abstract(pmid)?;
        let mut result = self.annotate_text(&doc)?;
        store.put(&CacheRecord::new(pmid, &result.payload()))?;
        result.elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        Ok(PmidOutcome {
            result,
            cache_hit: false,
        })
    }
}
