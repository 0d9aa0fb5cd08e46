//! Entity-level NER precision/recall/F1 and normalization accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::EntityType;
use crate::scalar::Scalar;
use crate::textproc::GoldDocument;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no items to evaluate")]
    EmptyEvaluation,
}

/// A typed span in a named document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EvalSpan {
    pub doc: String,
    pub begin: usize,
    pub end: usize,
    pub etype: EntityType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrfScore<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl<S: Scalar> PrfScore<S> {
    /// Scores from counts. Zero denominators give zero, except that an empty
    /// gold and prediction set scores a perfect 1.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                S::zero()
            } else {
                S::from_usize(num).unwrap() / S::from_usize(den).unwrap()
            }
        };
        let (precision, recall) = if tp + fp + fn_ == 0 {
            (S::one(), S::one())
        } else {
            (ratio(tp, tp + fp), ratio(tp, tp + fn_))
        };
        let two = S::one() + S::one();
        let f1 = if precision + recall == S::zero() {
            S::zero()
        } else {
            two * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NerScore<S> {
    pub per_type: BTreeMap<EntityType, PrfScore<S>>,
    /// Micro-averaged over all types.
    pub overall: PrfScore<S>,
}

/// Exact-match entity F1: a prediction is a true positive iff an unmatched
/// gold span with identical (doc, begin, end, type) exists.
pub fn ner_f1<S: Scalar>(gold: &[EvalSpan], pred: &[EvalSpan]) -> NerScore<S> {
    let mut remaining: HashMap<&EvalSpan, usize> = HashMap::new();
    for g in gold {
        *remaining.entry(g).or_default() += 1;
    }
    let mut counts: BTreeMap<EntityType, (usize, usize, usize)> = BTreeMap::new();
    for g in gold {
        counts.entry(g.etype).or_default();
    }
    let mut sorted_pred: Vec<&EvalSpan> = pred.iter().collect();
    sorted_pred.sort();
    for p in sorted_pred {
        let c = counts.entry(p.etype).or_default();
        match remaining.get_mut(p) {
            Some(n) if *n > 0 => {
                *n -= 1;
                c.0 += 1;
            }
            _ => c.1 += 1,
        }
    }
    for (g, n) in &remaining {
        counts.entry(g.etype).or_default().2 += n;
    }

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let per_type = counts
        .into_iter()
        .map(|(t, (a, b, c))| {
            tp += a;
            fp += b;
            fn_ += c;
            (t, PrfScore::from_counts(a, b, c))
        })
        .collect();
    NerScore {
        per_type,
        overall: PrfScore::from_counts(tp, fp, fn_),
    }
}

/// One normalization decision: the gold concept set and the predicted ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NenItem {
    pub etype: EntityType,
    pub gold: Vec<String>,
    pub pred: Vec<String>,
}

/// Lowercases the namespace part of a CUI, leaving the identifier intact.
pub fn fold_cui(cui: &str) -> String {
    match cui.split_once(':') {
        Some((ns, id)) => format!("{}:{id}", ns.to_lowercase()),
        None => cui.to_string(),
    }
}

fn item_correct(item: &NenItem) -> bool {
    let gold: Vec<String> = item.gold.iter().map(|c| fold_cui(c)).collect();
    item.pred.iter().any(|p| gold.contains(&fold_cui(p)))
}

/// Top-1 accuracy: an item counts when any predicted id is in its gold set.
pub fn nen_accuracy<S: Scalar>(items: &[NenItem]) -> Result<S, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let correct = items.iter().filter(|i| item_correct(i)).count();
    Ok(S::from_usize(correct).unwrap() / S::from_usize(items.len()).unwrap())
}

/// Accuracy and item count per type.
pub type TypeAccuracy<S> = BTreeMap<EntityType, (S, usize)>;

/// Accuracy per type plus overall; types without items are omitted.
pub fn nen_accuracy_by_type<S: Scalar>(
    items: &[NenItem],
) -> Result<(TypeAccuracy<S>, S), EvalError> {
    let overall = nen_accuracy(items)?;
    let mut by_type: BTreeMap<EntityType, Vec<NenItem>> = BTreeMap::new();
    for i in items {
        by_type.entry(i.etype).or_default().push(i.clone());
    }
    let per_type = by_type
        .into_iter()
        .map(|(t, v)| (t, (nen_accuracy(&v).expect("nonempty group"), v.len())))
        .collect();
    Ok((per_type, overall))
}

pub fn spans_of(docs: &[GoldDocument]) -> Vec<EvalSpan> {
    docs.iter()
        .flat_map(|d| {
            d.gold.iter().map(move |g| EvalSpan {
                doc: d.doc_id.clone(),
                begin: g.begin,
                end: g.end,
                etype: g.etype,
            })
        })
        .collect()
}

/// Pairs every gold mention that has concept ids with the prediction on the
/// identical span and type (no prediction means no ids).
pub fn nen_items(gold: &[GoldDocument], pred: &[GoldDocument]) -> Vec<NenItem> {
    let mut predicted: HashMap<EvalSpan, &[String]> = HashMap::new();
    for d in pred {
        for m in &d.gold {
            predicted.insert(
                EvalSpan {
                    doc: d.doc_id.clone(),
                    begin: m.begin,
                    end: m.end,
                    etype: m.etype,
                },
                &m.cuis,
            );
        }
    }
    gold.iter()
        .flat_map(|d| d.gold.iter().map(move |m| (d, m)))
        .filter(|(_, m)| !m.cuis.is_empty())
        .map(|(d, m)| {
            let key = EvalSpan {
                doc: d.doc_id.clone(),
                begin: m.begin,
                end: m.end,
                etype: m.etype,
            };
            NenItem {
                etype: m.etype,
                gold: m.cuis.clone(),
                pred: predicted.get(&key).map(|c| c.to_vec()).unwrap_or_default(),
            }
        })
        .collect()
}

pub fn format_ner_table<S: Scalar>(score: &NerScore<S>) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
        "type", "tp", "fp", "fn", "precision", "recall", "f1"
    );
    let mut row = |name: &str, s: &PrfScore<S>| {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>6} {:>6} {:>9.3} {:>9.3} {:>9.3}",
            name,
            s.tp,
            s.fp,
            s.fn_,
            s.precision.to_f64_lossy(),
            s.recall.to_f64_lossy(),
            s.f1.to_f64_lossy()
        );
    };
    for (t, s) in &score.per_type {
        row(t.as_str(), s);
    }
    row("overall", &score.overall);
    out
}

pub fn format_nen_table<S: Scalar>(per_type: &BTreeMap<EntityType, (S, usize)>, overall: S, total: usize) -> String {
    let mut out = format!("{:<10} {:>6} {:>9}\n", "type", "n", "accuracy");
    for (t, (acc, n)) in per_type {
        let _ = writeln!(out, "{:<10} {:>6} {:>9.3}", t.as_str(), n, acc.to_f64_lossy());
    }
    let _ = writeln!(out, "{:<10} {:>6} {:>9.3}", "overall", total, overall.to_f64_lossy());
    out
}
