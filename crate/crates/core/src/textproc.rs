//! Offset-preserving sentence segmentation, tokenization and the PubTator
//! interchange codec.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CharMap, EntityType, TokenSpan};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../resources/abbreviations.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRange {
    pub begin: usize,
    pub end: usize,
}

/// Rule-based sentence splitter with a protected-abbreviation list.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<Vec<char>>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::from_resource(DEFAULT_ABBREVIATIONS)
    }
}

impl Segmenter {
    /// Parses a plain-text abbreviation list: one entry per line, `#` comments.
    pub fn from_resource(text: &str) -> Self {
        let mut s = Self {
            abbreviations: Vec::new(),
        };
        s.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        );
        s
    }

    pub fn extend<'a>(&mut self, entries: impl IntoIterator<Item = &'a str>) {
        for e in entries {
            let chars: Vec<char> = e.chars().flat_map(char::to_lowercase).collect();
            if !chars.is_empty() && !self.abbreviations.contains(&chars) {
                self.abbreviations.push(chars);
            }
        }
    }

    fn protected(&self, prefix: &[char]) -> bool {
        self.abbreviations.iter().any(|abbr| {
            if abbr.len() > prefix.len() {
                return false;
            }
            let start = prefix.len() - abbr.len();
            let tail_matches = prefix[start..]
                .iter()
                .zip(abbr)
                .all(|(c, a)| c.to_lowercase().eq(std::iter::once(*a)));
            tail_matches && (start == 0 || !prefix[start - 1].is_alphanumeric())
        })
    }

    /// Splits after `.`, `!` or `?` when followed by whitespace and an
    /// uppercase letter, unless the period closes a protected abbreviation.
    pub fn segment(&self, text: &str) -> Vec<SentenceRange> {
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < n {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') && i + 1 < n && chars[i + 1].is_whitespace() {
                let mut j = i + 1;
                while j < n && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < n
                    && chars[j].is_uppercase()
                    && !(c == '.' && self.protected(&chars[..=i]))
                {
                    push_trimmed(&chars, start, i + 1, &mut out);
                    start = j;
                    i = j;
                    continue;
                }
            }
            i += 1;
        }
        push_trimmed(&chars, start, n, &mut out);
        out
    }
}

fn push_trimmed(chars: &[char], mut begin: usize, mut end: usize, out: &mut Vec<SentenceRange>) {
    while begin < end && chars[begin].is_whitespace() {
        begin += 1;
    }
    while end > begin && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if begin < end {
        out.push(SentenceRange { begin, end });
    }
}

/// Segments with the default abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<SentenceRange> {
    Segmenter::default().segment(text)
}

/// Splits on whitespace, then peels punctuation into single-char tokens.
///
/// A non-alphanumeric char stays inside a token only when both neighbours are
/// alphanumeric, so "p53-dependent", "BRCA1/2" and "c.76A>T" survive whole
/// while "arginine)." becomes three tokens.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let byte_at = |i: usize| if i < n { chars[i].0 } else { text.len() };
    let mut emit = |b: usize, e: usize| {
        out.push(TokenSpan {
            begin: b,
            end: e,
            surface: text[byte_at(b)..byte_at(e)].to_string(),
        })
    };

    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            emit(i, i + 1);
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < n {
            let c = chars[i].1;
            if c.is_alphanumeric() {
                i += 1;
            } else if !c.is_whitespace() && i + 1 < n && chars[i + 1].1.is_alphanumeric() {
                // internal joiner: left neighbour is alphanumeric by construction
                i += 2;
            } else {
                break;
            }
        }
        emit(start, i);
    }
    out
}

/// One annotated span in a gold corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMention {
    pub begin: usize,
    pub end: usize,
    pub surface: String,
    pub etype: EntityType,
    pub cuis: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldDocument {
    pub doc_id: String,
    pub title: String,
    pub abstract_text: String,
    pub gold: Vec<GoldMention>,
}

impl GoldDocument {
    /// Title and abstract joined by a single space; gold offsets index into this.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PubtatorError {
    #[error("line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("document {doc_id}, line {line_no}: annotation offsets do not match the text")]
    OffsetMismatch { doc_id: String, line_no: usize },
}

fn malformed(line_no: usize, reason: impl Into<String>) -> PubtatorError {
    PubtatorError::MalformedLine {
        line_no,
        reason: reason.into(),
    }
}

fn header_line<'a>(line: &'a str, line_no: usize, tag: &str) -> Result<(&'a str, &'a str), PubtatorError> {
    let mut parts = line.splitn(3, '|');
    let (id, t, rest) = match (parts.next(), parts.next(), parts.next()) {
        (Some(id), Some(t), Some(rest)) => (id, t, rest),
        _ => return Err(malformed(line_no, format!("expected `<pmid>|{tag}|...`"))),
    };
    if t != tag {
        return Err(malformed(line_no, format!("expected `|{tag}|` section, found `|{t}|`")));
    }
    if !crate::model::is_valid_pmid(id) {
        return Err(malformed(line_no, format!("document id {id:?} is not numeric")));
    }
    Ok((id, rest))
}

/// Parses a PubTator corpus. Line numbers in errors are 1-based.
pub fn parse_pubtator(input: &str) -> Result<Vec<GoldDocument>, PubtatorError> {
    let mut docs = Vec::new();
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .peekable();

    loop {
        // skip blank separators
        while matches!(lines.peek(), Some((_, l)) if l.trim().is_empty()) {
            lines.next();
        }
        let Some((title_no, title_line)) = lines.next() else {
            break;
        };
        let (doc_id, title) = header_line(title_line, title_no, "t")?;
        let Some((abs_no, abs_line)) = lines.next() else {
            return Err(malformed(title_no, "document ends without an abstract line"));
        };
        let (abs_id, abstract_text) = header_line(abs_line, abs_no, "a")?;
        if abs_id != doc_id {
            return Err(malformed(abs_no, format!("abstract id {abs_id} differs from title id {doc_id}")));
        }
        let mut doc = GoldDocument {
            doc_id: doc_id.to_string(),
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            gold: Vec::new(),
        };
        let text = doc.text();
        let map = CharMap::new(&text);

        while let Some(&(line_no, line)) = lines.peek() {
            if line.trim().is_empty() {
                break;
            }
            lines.next();
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(malformed(
                    line_no,
                    format!("expected 6 tab-separated fields, found {}", fields.len()),
                ));
            }
            if fields[0] != doc.doc_id {
                return Err(malformed(
                    line_no,
                    format!("annotation id {} differs from document id {}", fields[0], doc.doc_id),
                ));
            }
            let begin: usize = fields[1]
                .parse()
                .map_err(|_| malformed(line_no, format!("begin offset {:?} is not an integer", fields[1])))?;
            let end: usize = fields[2]
                .parse()
                .map_err(|_| malformed(line_no, format!("end offset {:?} is not an integer", fields[2])))?;
            let surface = fields[3];
            if begin >= end || map.slice(begin, end) != Some(surface) {
                return Err(PubtatorError::OffsetMismatch {
                    doc_id: doc.doc_id.clone(),
                    line_no,
                });
            }
            let etype: EntityType = fields[4]
                .parse()
                .map_err(|e: crate::model::ModelError| malformed(line_no, e.to_string()))?;
            let cuis = match fields[5] {
                "-" | "" => Vec::new(),
                ids => {
                    let v: Vec<String> = ids.split(',').map(str::to_string).collect();
                    if v.iter().any(String::is_empty) {
                        return Err(malformed(line_no, "empty concept id in list"));
                    }
                    v
                }
            };
            doc.gold.push(GoldMention {
                begin,
                end,
                surface: surface.to_string(),
                etype,
                cuis,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes documents in PubTator format; inverse of [`parse_pubtator`].
pub fn serialize_pubtator(docs: &[GoldDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        let _ = writeln!(out, "{}|t|{}", d.doc_id, d.title);
        let _ = writeln!(out, "{}|a|{}", d.doc_id, d.abstract_text);
        for g in &d.gold {
            let cuis = if g.cuis.is_empty() {
                "-".to_string()
            } else {
                g.cuis.join(",")
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                d.doc_id, g.begin, g.end, g.surface, g.etype, cuis
            );
        }
        out.push('\n');
    }
    out
}
