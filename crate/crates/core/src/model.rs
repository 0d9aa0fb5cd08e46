//! Domain types shared by every stage of the annotation pipeline.
//!
//! All character offsets in this crate count Unicode scalar values from the
//! start of the document text, never bytes or UTF-16 units.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid document id {0:?}: expected a nonempty decimal digit string")]
    InvalidDocId(String),
    #[error("unknown entity type {0:?}")]
    UnknownEntityType(String),
    #[error("invalid CUI {0:?}: expected <namespace>:<identifier>")]
    InvalidCui(String),
}

/// The nine supported biomedical entity types.
///
/// Declaration order doubles as the type priority used when cross-type
/// overlaps are resolved (Gene highest, Rna lowest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "gene")]
    Gene,
    #[serde(rename = "disease")]
    Disease,
    #[serde(rename = "drug")]
    Drug,
    #[serde(rename = "species")]
    Species,
    #[serde(rename = "mutation")]
    Mutation,
    #[serde(rename = "cell_line")]
    CellLine,
    #[serde(rename = "cell_type")]
    CellType,
    #[serde(rename = "DNA")]
    Dna,
    #[serde(rename = "RNA")]
    Rna,
}

impl EntityType {
    pub const ALL: [EntityType; 9] = [
        EntityType::Gene,
        EntityType::Disease,
        EntityType::Drug,
        EntityType::Species,
        EntityType::Mutation,
        EntityType::CellLine,
        EntityType::CellType,
        EntityType::Dna,
        EntityType::Rna,
    ];

    /// Types produced by the tagging heads (everything except Mutation).
    pub const TAGGED: [EntityType; 8] = [
        EntityType::Gene,
        EntityType::Disease,
        EntityType::Drug,
        EntityType::Species,
        EntityType::CellLine,
        EntityType::CellType,
        EntityType::Dna,
        EntityType::Rna,
    ];

    /// Stable serialized name.
    pub const fn as_str(&self) -> &'static str {
        match self {
            EntityType::Gene => "gene",
            EntityType::Disease => "disease",
            EntityType::Drug => "drug",
            EntityType::Species => "species",
            EntityType::Mutation => "mutation",
            EntityType::CellLine => "cell_line",
            EntityType::CellType => "cell_type",
            EntityType::Dna => "DNA",
            EntityType::Rna => "RNA",
        }
    }

    /// Rank in the overlap tie-break order; lower wins.
    pub fn priority(&self) -> usize {
        *self as usize
    }

    /// Types that have a dense-retrieval fallback after the rule cascade.
    pub const fn has_neural_normalizer(&self) -> bool {
        matches!(self, EntityType::Gene | EntityType::Disease | EntityType::Drug)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = ModelError;

    /// Accepts the stable names plus the type labels common in PubTator corpora
    /// ("Chemical", "CellLine", "ProteinMutation", ...), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = match s.to_ascii_lowercase().as_str() {
            "gene" | "geneorgeneproduct" | "gene/protein" | "protein" => EntityType::Gene,
            "disease" | "diseaseorphenotypicfeature" => EntityType::Disease,
            "drug" | "chemical" | "chemicalentity" | "drug/chemical" => EntityType::Drug,
            "species" | "organismtaxon" => EntityType::Species,
            "mutation" | "dnamutation" | "proteinmutation" | "snp" | "sequencevariant" => {
                EntityType::Mutation
            }
            "cell_line" | "cellline" => EntityType::CellLine,
            "cell_type" | "celltype" => EntityType::CellType,
            "dna" => EntityType::Dna,
            "rna" => EntityType::Rna,
            _ => return Err(ModelError::UnknownEntityType(s.to_string())),
        };
        Ok(t)
    }
}

/// Checks the `<namespace>:<identifier>` shape with nonempty parts.
pub fn is_valid_cui(cui: &str) -> bool {
    match cui.split_once(':') {
        Some((ns, id)) => {
            !ns.is_empty()
                && !id.is_empty()
                && !cui.chars().any(|c| c.is_whitespace() || c == ',' || c == '\t')
        }
        None => false,
    }
}

/// Maps Unicode-scalar offsets to byte offsets for one text.
#[derive(Debug, Clone)]
pub struct CharMap<'a> {
    text: &'a str,
    // byte offset of every char, plus text.len() as the final sentinel
    bytes: Vec<usize>,
}

impl<'a> CharMap<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        bytes.push(text.len());
        Self { text, bytes }
    }

    pub fn text(&self) -> &'a str {
        self.text
    }

    /// Length in chars.
    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_offset(&self, char_offset: usize) -> Option<usize> {
        self.bytes.get(char_offset).copied()
    }

    /// Char offset of a byte offset that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> Option<usize> {
        self.bytes.binary_search(&byte_offset).ok()
    }

    /// Slice `[begin, end)` in char offsets.
    pub fn slice(&self, begin: usize, end: usize) -> Option<&'a str> {
        if begin > end {
            return None;
        }
        let b = self.byte_offset(begin)?;
        let e = self.byte_offset(end)?;
        Some(&self.text[b..e])
    }
}

/// Slices `text` by char offsets. Prefer [`CharMap`] for repeated slicing.
pub fn char_slice(text: &str, begin: usize, end: usize) -> Option<&str> {
    CharMap::new(text).slice(begin, end)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub text: String,
}

pub fn is_valid_pmid(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

impl Document {
    pub fn new(doc_id: Option<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        if let Some(id) = &doc_id {
            if !is_valid_pmid(id) {
                return Err(ModelError::InvalidDocId(id.clone()));
            }
        }
        Ok(Self {
            doc_id,
            text: text.into(),
        })
    }

    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            doc_id: None,
            text: text.into(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub begin: usize,
    pub end: usize,
    pub surface: String,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin >= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub begin: usize,
    pub end: usize,
    pub surface: String,
    pub etype: EntityType,
    pub prob: f64,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.begin)
    }

    pub fn is_empty(&self) -> bool {
        self.begin >= self.end
    }

    /// Canonical ordering key: (begin, end, serialized type name).
    pub fn sort_key(&self) -> (usize, usize, &'static str) {
        (self.begin, self.end, self.etype.as_str())
    }

    pub fn contains(&self, other: &Mention) -> bool {
        self.begin <= other.begin && other.end <= self.end
    }
}

pub fn cmp_mentions(a: &Mention, b: &Mention) -> Ordering {
    a.sort_key().cmp(&b.sort_key())
}

/// Which normalizer produced the concept ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormSource {
    Rule,
    Neural,
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ids: Vec<String>,
    pub source: NormSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Normalization {
    pub fn rule(ids: Vec<String>) -> Self {
        Self {
            ids,
            source: NormSource::Rule,
            score: None,
        }
    }

    pub fn neural(cui: String, score: f64) -> Self {
        Self {
            ids: vec![cui],
            source: NormSource::Neural,
            score: Some(score),
        }
    }

    pub fn unmapped() -> Self {
        Self {
            ids: Vec::new(),
            source: NormSource::Unmapped,
            score: None,
        }
    }

    pub fn is_neural(&self) -> bool {
        self.source == NormSource::Neural
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub mention: Mention,
    pub norm: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub doc: Document,
    pub annotations: Vec<Annotation>,
    pub elapsed_ms: f64,
    pub pipeline_version: String,
}

/// [`AnnotationResult`] without the observational timing field; this is
/// what gets persisted and compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPayload {
    pub doc: Document,
    pub annotations: Vec<Annotation>,
    pub pipeline_version: String,
}

impl AnnotationResult {
    pub fn payload(&self) -> AnnotationPayload {
        AnnotationPayload {
            doc: self.doc.clone(),
            annotations: self.annotations.clone(),
            pipeline_version: self.pipeline_version.clone(),
        }
    }

    /// Canonical JSON of the payload (elapsed_ms excluded).
    pub fn canonical_payload(&self) -> String {
        self.payload().to_canonical_json()
    }

    pub fn sort_annotations(&mut self) {
        self.annotations
            .sort_by(|a, b| cmp_mentions(&a.mention, &b.mention));
    }
}

impl AnnotationPayload {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("annotation payload is always serializable")
    }

    pub fn into_result(self, elapsed_ms: f64) -> AnnotationResult {
        AnnotationResult {
            doc: self.doc,
            annotations: self.annotations,
            elapsed_ms,
            pipeline_version: self.pipeline_version,
        }
    }
}

/// One broken invariant found by [`validate_result`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index into `annotations`, if the violation concerns one annotation.
    pub index: Option<usize>,
    pub field: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "annotations[{i}].{}: {}", self.field, self.detail),
            None => write!(f, "{}: {}", self.field, self.detail),
        }
    }
}

/// Lists every invariant violation in `r`. An empty list means the result is valid.
pub fn validate_result(r: &AnnotationResult) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |index: Option<usize>, field: &str, detail: String| {
        out.push(Violation {
            index,
            field: field.to_string(),
            detail,
        })
    };

    if let Some(id) = &r.doc.doc_id {
        if !is_valid_pmid(id) {
            push(None, "doc.doc_id", format!("{id:?} is not a decimal digit string"));
        }
    }
    if !(r.elapsed_ms >= 0.0 && r.elapsed_ms.is_finite()) {
        push(None, "elapsed_ms", format!("{} is not a nonnegative real", r.elapsed_ms));
    }

    let text = CharMap::new(&r.doc.text);
    for (i, a) in r.annotations.iter().enumerate() {
        let m = &a.mention;
        let idx = Some(i);
        if m.begin >= m.end {
            push(idx, "begin<end", format!("begin {} >= end {}", m.begin, m.end));
        } else if m.end > text.len() {
            push(idx, "end", format!("end {} exceeds text length {}", m.end, text.len()));
        } else if text.slice(m.begin, m.end) != Some(m.surface.as_str()) {
            push(
                idx,
                "surface",
                format!(
                    "{:?} differs from text slice {:?}",
                    m.surface,
                    text.slice(m.begin, m.end).unwrap_or_default()
                ),
            );
        }
        if !(0.0..=1.0).contains(&m.prob) {
            push(idx, "prob", format!("{} outside [0,1]", m.prob));
        }

        let n = &a.norm;
        let unmapped = n.source == NormSource::Unmapped;
        if unmapped != n.ids.is_empty() {
            push(
                idx,
                "norm.ids",
                format!("source {:?} with {} ids", n.source, n.ids.len()),
            );
        }
        for cui in &n.ids {
            if !is_valid_cui(cui) {
                push(idx, "norm.ids", format!("malformed CUI {cui:?}"));
            }
        }
        if n.score.is_some() != (n.source == NormSource::Neural) {
            push(
                idx,
                "norm.score",
                format!("score {:?} with source {:?}", n.score, n.source),
            );
        }

        if i > 0 {
            let prev = &r.annotations[i - 1].mention;
            match cmp_mentions(prev, m) {
                Ordering::Less => {}
                Ordering::Equal => push(
                    idx,
                    "duplicate",
                    format!("same (begin, end, etype) as annotation {}", i - 1),
                ),
                Ordering::Greater => push(
                    idx,
                    "order",
                    format!("sorts before annotation {}", i - 1),
                ),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(text: &str, begin: usize, end: usize, etype: EntityType) -> Annotation {
        Annotation {
            mention: Mention {
                begin,
                end,
                surface: char_slice(text, begin, end).unwrap_or("").to_string(),
                etype,
                prob: 0.9,
            },
            norm: Normalization::unmapped(),
        }
    }

    fn result(text: &str, annotations: Vec<Annotation>) -> AnnotationResult {
        AnnotationResult {
            doc: Document::plain(text),
            annotations,
            elapsed_ms: 1.0,
            pipeline_version: "test".into(),
        }
    }

    #[test]
    fn empty_result_is_valid() {
        assert!(validate_result(&result("", vec![])).is_empty());
    }

    #[test]
    fn zero_width_annotation_flagged_once() {
        let r = result("tumor", vec![ann("tumor", 2, 2, EntityType::Disease)]);
        let v = validate_result(&r);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "begin<end");
        assert_eq!(v[0].index, Some(0));
    }

    #[test]
    fn mutated_surface_flagged() {
        let text = "Atg7 suppresses tumor growth";
        let mut a = ann(text, 16, 21, EntityType::Disease);
        assert_eq!(a.mention.surface, "tumor");
        a.mention.surface = "tumer".into();
        let v = validate_result(&result(text, vec![a]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "surface");
    }

    #[test]
    fn order_and_duplicates() {
        let text = "Atg7 suppresses tumor growth";
        let a = ann(text, 16, 21, EntityType::Disease);
        let b = ann(text, 0, 4, EntityType::Gene);
        let v = validate_result(&result(text, vec![a.clone(), b]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "order");

        let v = validate_result(&result(text, vec![a.clone(), a]));
        assert_eq!(v[0].field, "duplicate");
    }

    #[test]
    fn normalization_consistency() {
        let text = "arginine";
        let mut a = ann(text, 0, 8, EntityType::Drug);
        a.norm = Normalization {
            ids: vec!["mesh:D001120".into()],
            source: NormSource::Unmapped,
            score: None,
        };
        let v = validate_result(&result(text, vec![a.clone()]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "norm.ids");

        a.norm = Normalization::rule(vec!["D001120".into()]);
        assert_eq!(validate_result(&result(text, vec![a.clone()]))[0].field, "norm.ids");

        a.norm = Normalization {
            ids: vec!["mesh:D001120".into()],
            source: NormSource::Rule,
            score: Some(0.9),
        };
        assert_eq!(validate_result(&result(text, vec![a]))[0].field, "norm.score");
    }

    #[test]
    fn multibyte_offsets() {
        let text = "TNF-α βcatenin";
        let map = CharMap::new(text);
        assert_eq!(map.len(), 14);
        assert_eq!(map.slice(4, 5), Some("α"));
        assert_eq!(map.slice(6, 14), Some("βcatenin"));
        assert_eq!(map.slice(6, 15), None);
        let r = result(text, vec![ann(text, 6, 14, EntityType::Gene)]);
        assert!(validate_result(&r).is_empty());
    }

    #[test]
    fn entity_type_names_round_trip() {
        for t in EntityType::ALL {
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
            assert_eq!(t.as_str().parse::<EntityType>().unwrap(), t);
        }
        assert_eq!("Chemical".parse::<EntityType>().unwrap(), EntityType::Drug);
        assert!("protein_complex".parse::<EntityType>().is_err());
    }

    #[test]
    fn cui_shape() {
        assert!(is_valid_cui("mesh:D001120"));
        assert!(is_valid_cui("NCBIGene:10533"));
        assert!(!is_valid_cui("D001120"));
        assert!(!is_valid_cui(":x"));
        assert!(!is_valid_cui("mesh:"));
        assert!(!is_valid_cui("-"));
    }

    #[test]
    fn doc_id_must_be_digits() {
        assert!(Document::new(Some("12345".into()), "x").is_ok());
        assert!(Document::new(Some("PMC1".into()), "x").is_err());
        assert!(Document::new(Some(String::new()), "x").is_err());
    }
}
