//! Wire types for the HTTP API.

use bioann_core::model::{Annotation, AnnotationResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpan {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiAnnotation {
    pub span: ApiSpan,
    pub mention: String,
    pub obj: String,
    pub prob: f64,
    pub id: Vec<String>,
    pub is_neural_normalized: bool,
}

impl From<&Annotation> for ApiAnnotation {
    fn from(a: &Annotation) -> Self {
        Self {
            span: ApiSpan {
                begin: a.mention.begin,
                end: a.mention.end,
            },
            mention: a.mention.surface.clone(),
            obj: a.mention.etype.as_str().to_string(),
            prob: a.mention.prob,
            id: a.norm.ids.clone(),
            is_neural_normalized: a.norm.is_neural(),
        }
    }
}

/// Body of a successful `/plain` reply and of each `ok` item from `/pmid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmid: Option<String>,
    pub text: String,
    pub annotations: Vec<ApiAnnotation>,
    pub elapsed_ms: f64,
    pub pipeline_version: String,
}

impl From<&AnnotationResult> for ApiResult {
    fn from(r: &AnnotationResult) -> Self {
        Self {
            pmid: r.doc.doc_id.clone(),
            text: r.doc.text.clone(),
            annotations: r.annotations.iter().map(ApiAnnotation::from).collect(),
            elapsed_ms: r.elapsed_ms,
            pipeline_version: r.pipeline_version.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    NotFound,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmidItem {
    pub pmid: String,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ApiResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub pipeline_version: String,
    pub backend: String,
    pub backend_ok: bool,
    pub cache_records: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Largest accepted `/pmid` batch.
pub const MAX_BATCH: usize = 100;
