use std::collections::{BTreeMap, HashSet};

use crate::model::{EntityType, TokenSpan};
use crate::normalizer::Lexicon;
use crate::scalar::Scalar;
use crate::textproc::tokenize;

use super::{requested_heads, HeadOutputs, TagProbSeq, TaggerBackend, TaggerError};

pub(super) const P_BEGIN_ROW: [f64; 3] = [0.99, 0.0, 0.01];
pub(super) const P_INSIDE_ROW: [f64; 3] = [0.0, 0.99, 0.01];
pub(super) const P_OUTSIDE_ROW: [f64; 3] = [0.005, 0.005, 0.99];

#[derive(Debug, Clone, Default)]
struct PhraseSet {
    phrases: HashSet<Vec<String>>,
    max_len: usize,
}

/// Dictionary-driven tagging backend.
///
/// Phrases match case-insensitively on token boundaries; at each start token
/// the longest phrase wins and matching resumes after it.
#[derive(Debug, Clone, Default)]
pub struct GazetteerTagger {
    heads: BTreeMap<EntityType, PhraseSet>,
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase)
        .into_iter()
        .map(|t| t.surface.to_lowercase())
        .collect()
}

impl GazetteerTagger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_phrase(&mut self, etype: EntityType, phrase: &str) {
        let toks = phrase_tokens(phrase);
        if toks.is_empty() {
            return;
        }
        let set = self.heads.entry(etype).or_default();
        set.max_len = set.max_len.max(toks.len());
        set.phrases.insert(toks);
    }

    pub fn with_phrases<'a>(mut self, etype: EntityType, phrases: impl IntoIterator<Item = &'a str>) -> Self {
        for p in phrases {
            self.add_phrase(etype, p);
        }
        self
    }

    /// Adds every dictionary name of `lex` as a phrase of the lexicon's type.
    pub fn add_lexicon(&mut self, lex: &Lexicon) {
        for name in lex.names() {
            self.add_phrase(lex.etype(), name);
        }
    }

    pub fn phrase_count(&self, etype: EntityType) -> usize {
        self.heads.get(&etype).map_or(0, |s| s.phrases.len())
    }

    fn tag_head<S: Scalar>(&self, etype: EntityType, lowered: &[String]) -> TagProbSeq<S> {
        let b = P_BEGIN_ROW.map(S::from_f64_lossy);
        let i_row = P_INSIDE_ROW.map(S::from_f64_lossy);
        let mut seq = TagProbSeq::outside(etype, lowered.len());
        let Some(set) = self.heads.get(&etype) else {
            return seq;
        };
        let n = lowered.len();
        let mut i = 0;
        while i < n {
            let longest = (1..=set.max_len.min(n - i))
                .rev()
                .find(|&len| set.phrases.contains(&lowered[i..i + len]));
            match longest {
                Some(len) => {
                    seq.rows[i] = b;
                    for row in &mut seq.rows[i + 1..i + len] {
                        *row = i_row;
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        seq
    }
}

impl<S: Scalar> TaggerBackend<S> for GazetteerTagger {
    fn tag(&self, tokens: &[TokenSpan], types: &[EntityType]) -> Result<HeadOutputs<S>, TaggerError> {
        let heads = requested_heads(types)?;
        let lowered: Vec<String> = tokens.iter().map(|t| t.surface.to_lowercase()).collect();
        Ok(heads
            .into_iter()
            .map(|t| (t, self.tag_head(t, &lowered)))
            .collect())
    }

    fn kind(&self) -> &'static str {
        "gazetteer"
    }
}
