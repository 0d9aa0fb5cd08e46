use serde::{Deserialize, Serialize};

use crate::model::{cmp_mentions, Mention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    #[default]
    KeepAll,
    /// Drop mentions contained in a longer mention of another type; equal
    /// spans keep the higher-priority type.
    LongestWins,
}

fn dominated(m: &Mention, by: &Mention) -> bool {
    if m.etype == by.etype || !by.contains(m) {
        return false;
    }
    let (lm, lb) = (m.len(), by.len());
    lb > lm || (lb == lm && by.etype.priority() < m.etype.priority())
}

/// Resolves cross-type conflicts. Within a type mentions must already be
/// non-overlapping. Output is sorted by (begin, end, type name).
pub fn resolve_overlaps(mut mentions: Vec<Mention>, policy: OverlapPolicy) -> Vec<Mention> {
    mentions.sort_by(cmp_mentions);
    match policy {
        OverlapPolicy::KeepAll => mentions,
        OverlapPolicy::LongestWins => {
            let keep: Vec<bool> = mentions
                .iter()
                .map(|m| !mentions.iter().any(|other| dominated(m, other)))
                .collect();
            mentions
                .into_iter()
                .zip(keep)
                .filter_map(|(m, k)| k.then_some(m))
                .collect()
        }
    }
}
