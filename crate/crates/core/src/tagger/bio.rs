use crate::model::{CharMap, Mention, TokenSpan};
use crate::scalar::Scalar;

use super::{TagProbSeq, TaggerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    B,
    I,
    O,
}

impl Label {
    /// Argmax over `(p_B, p_I, p_O)`; ties prefer B, then I.
    pub fn argmax<S: Scalar>(row: &[S; 3]) -> (Label, S) {
        let [b, i, o] = *row;
        if b >= i && b >= o {
            (Label::B, b)
        } else if i >= o {
            (Label::I, i)
        } else {
            (Label::O, o)
        }
    }
}

/// Decodes one head into mentions.
///
/// Maximal `B I*` runs become mentions; an `I` after `O` (or at the start) is
/// treated as `B`. A mention's probability is the minimum winning probability
/// over its tokens. `text` must be the document the token offsets index into.
pub fn decode_bio<S: Scalar>(
    seq: &TagProbSeq<S>,
    tokens: &[TokenSpan],
    text: &CharMap<'_>,
) -> Result<Vec<Mention>, TaggerError> {
    if seq.rows.len() != tokens.len() {
        return Err(TaggerError::LengthMismatch {
            rows: seq.rows.len(),
            tokens: tokens.len(),
        });
    }

    let mut out = Vec::new();
    // (first token, last token, min prob)
    let mut open: Option<(usize, usize, S)> = None;
    let close = |span: (usize, usize, S), out: &mut Vec<Mention>| {
        let (first, last, p) = span;
        let begin = tokens[first].begin;
        let end = tokens[last].end;
        out.push(Mention {
            begin,
            end,
            surface: text.slice(begin, end).unwrap_or_default().to_string(),
            etype: seq.etype,
            prob: p.to_f64_lossy().clamp(0.0, 1.0),
        });
    };

    for (k, row) in seq.rows.iter().enumerate() {
        let (label, p) = Label::argmax(row);
        match (label, open.take()) {
            (Label::B, prev) => {
                if let Some(span) = prev {
                    close(span, &mut out);
                }
                open = Some((k, k, p));
            }
            (Label::I, Some((first, _, min_p))) => open = Some((first, k, min_p.min(p))),
            (Label::I, None) => open = Some((k, k, p)),
            (Label::O, prev) => {
                if let Some(span) = prev {
                    close(span, &mut out);
                }
            }
        }
    }
    if let Some(span) = open {
        close(span, &mut out);
    }
    Ok(out)
}
