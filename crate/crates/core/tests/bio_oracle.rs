use bioann_core::model::{CharMap, EntityType, TokenSpan};
use bioann_core::tagger::{decode_bio, TagProbSeq};
use bioann_core::textproc::tokenize;
use rand::{rngs::StdRng, RngExt, SeedableRng};

/// Reference: per-token label by first maximal index (B=0, I=1, O=2), then a
/// span opens at every B, and at every I not preceded by B or I.
fn reference(rows: &[[f64; 3]], tokens: &[TokenSpan], text: &str) -> Vec<(usize, usize, String, f64)> {
    let labels: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| {
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let idx = r.iter().position(|&v| v == max).unwrap();
            (idx, max)
        })
        .collect();
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < labels.len() {
        let starts = labels[k].0 == 0 || (labels[k].0 == 1 && (k == 0 || labels[k - 1].0 == 2));
        if !starts {
            k += 1;
            continue;
        }
        let mut last = k;
        let mut p = labels[k].1;
        while last + 1 < labels.len() && labels[last + 1].0 == 1 {
            last += 1;
            p = p.min(labels[last].1);
        }
        let (b, e) = (tokens[k].begin, tokens[last].end);
        out.push((b, e, chars[b..e].iter().collect(), p));
        k = last + 1;
    }
    out
}

fn text_of(n: usize) -> String {
    const WORDS: [&str; 6] = ["Atg7", "β-cat", "tumor", "x", "IL-6", "näive"];
    (0..n).map(|i| WORDS[i % WORDS.len()]).collect::<Vec<_>>().join(" ")
}

fn check(rows: Vec<[f64; 3]>) -> bool {
    let text = text_of(rows.len());
    let tokens = tokenize(&text);
    assert_eq!(tokens.len(), rows.len());
    let expected = reference(&rows, &tokens, &text);
    let seq = TagProbSeq::new(EntityType::Gene, rows);
    let got: Vec<(usize, usize, String, f64)> = decode_bio(&seq, &tokens, &CharMap::new(&text))
        .unwrap()
        .into_iter()
        .map(|m| (m.begin, m.end, m.surface, m.prob))
        .collect();
    got == expected
}

#[test]
fn exhaustive_length_five() {
    let one_hot = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]];
    let mut mismatches = 0;
    for code in 0..3usize.pow(5) {
        let rows: Vec<[f64; 3]> = (0..5).map(|i| one_hot[(code / 3usize.pow(i)) % 3]).collect();
        if !check(rows) {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn random_sequences() {
    let mut rng = StdRng::seed_from_u64(0xb10);
    let mut mismatches = 0;
    for case in 0..10_000 {
        let n = rng.random_range(0..=32usize);
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let raw: [f64; 3] = if case % 4 == 0 {
                    // coarse values force exact ties
                    [0, 1, 2].map(|_| rng.random_range(0..3u32) as f64)
                } else {
                    [0, 1, 2].map(|_| rng.random::<f64>())
                };
                let sum: f64 = raw.iter().sum();
                if sum == 0.0 {
                    [1.0 / 3.0; 3]
                } else {
                    raw.map(|v| v / sum)
                }
            })
            .collect();
        if !check(rows) {
            mismatches += 1;
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn length_mismatch_is_rejected() {
    let text = "a b";
    let tokens = tokenize(text);
    let seq = TagProbSeq::new(EntityType::Gene, vec![[0.1, 0.1, 0.8]]);
    assert!(decode_bio(&seq, &tokens, &CharMap::new(text)).is_err());
}
