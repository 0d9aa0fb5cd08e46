use std::ops::Range;

use crate::model::TokenSpan;
use crate::textproc::SentenceRange;

use super::TaggerError;

pub const MIN_WINDOW: usize = 16;

/// Splits `tokens` into windows of at most `max_len` tokens.
///
/// Whole sentences are packed greedily; a sentence longer than `max_len` is
/// hard-split. Returned ranges index into `tokens` and partition it.
pub fn chunk_tokens(
    tokens: &[TokenSpan],
    sentences: &[SentenceRange],
    max_len: usize,
) -> Result<Vec<Range<usize>>, TaggerError> {
    if max_len < MIN_WINDOW {
        return Err(TaggerError::WindowTooSmall(max_len));
    }

    // consecutive token ranges that share a sentence
    let mut groups: Vec<Range<usize>> = Vec::new();
    let mut sent = 0;
    let mut current: Option<(usize, usize)> = None; // (sentence index, group start)
    for (i, t) in tokens.iter().enumerate() {
        while sent + 1 < sentences.len() && t.begin >= sentences[sent].end {
            sent += 1;
        }
        match current {
            Some((s, _)) if s == sent => {}
            Some((_, start)) => {
                groups.push(start..i);
                current = Some((sent, i));
            }
            None => current = Some((sent, i)),
        }
    }
    if let Some((_, start)) = current {
        groups.push(start..tokens.len());
    }

    let mut windows = Vec::new();
    let mut start = 0;
    let mut len = 0;
    for g in groups {
        let glen = g.len();
        if len + glen <= max_len {
            len += glen;
            continue;
        }
        if len > 0 {
            windows.push(start..start + len);
        }
        start = g.start;
        len = glen;
        while len > max_len {
            windows.push(start..start + max_len);
            start += max_len;
            len -= max_len;
        }
    }
    if len > 0 {
        windows.push(start..start + len);
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{segment_sentences, tokenize};

    fn sizes(w: &[Range<usize>]) -> Vec<usize> {
        w.iter().map(Range::len).collect()
    }

    fn sentence(words: usize) -> String {
        let mut s = "Word".to_string();
        for _ in 1..words - 1 {
            s.push_str(" w");
        }
        s.push_str(" end.");
        s
    }

    #[test]
    fn short_input_single_window() {
        let text = "a b c d e f g h i j";
        let toks = tokenize(text);
        let w = chunk_tokens(&toks, &segment_sentences(text), 512).unwrap();
        assert_eq!(sizes(&w), vec![10]);
    }

    #[test]
    fn hard_split_single_sentence() {
        let text = vec!["w"; 600].join(" ");
        let toks = tokenize(&text);
        let w = chunk_tokens(&toks, &segment_sentences(&text), 512).unwrap();
        assert_eq!(sizes(&w), vec![512, 88]);
    }

    #[test]
    fn prefers_sentence_boundaries() {
        // 199 words + final "." token = 200 tokens per sentence
        let text = [sentence(199), sentence(199), sentence(199)].join(" ");
        let toks = tokenize(&text);
        assert_eq!(toks.len(), 600);
        let sents = segment_sentences(&text);
        assert_eq!(sents.len(), 3);
        let w = chunk_tokens(&toks, &sents, 512).unwrap();
        assert_eq!(sizes(&w), vec![400, 200]);
    }

    #[test]
    fn rejects_tiny_windows() {
        assert_eq!(chunk_tokens(&[], &[], 8), Err(TaggerError::WindowTooSmall(8)));
        assert!(chunk_tokens(&[], &[], 16).unwrap().is_empty());
    }

    #[test]
    fn windows_partition_tokens() {
        let text = [sentence(30), sentence(5), sentence(40), sentence(12)].join(" ");
        let toks = tokenize(&text);
        let w = chunk_tokens(&toks, &segment_sentences(&text), 32).unwrap();
        assert!(w.iter().all(|r| r.len() <= 32 && !r.is_empty()));
        assert_eq!(w.first().unwrap().start, 0);
        assert_eq!(w.last().unwrap().end, toks.len());
        for pair in w.windows(2) {
            assert_eq!(pair[0].end, pair[1].start);
        }
    }
}
