use std::collections::BTreeMap;
use std::path::Path;

use crate::model::{is_valid_cui, EntityType};

use super::keys::normalize_keys;
use super::LexiconError;

/// Name → concept dictionary for one entity type.
///
/// Names are stored lowercased. Each concept has a canonical display name:
/// the line flagged canonical, else the first name seen for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    etype: EntityType,
    entries: BTreeMap<String, Vec<String>>,
    canonical: BTreeMap<String, String>,
    flagged: BTreeMap<String, bool>,
}

impl Lexicon {
    pub fn new(etype: EntityType) -> Self {
        Self {
            etype,
            entries: BTreeMap::new(),
            canonical: BTreeMap::new(),
            flagged: BTreeMap::new(),
        }
    }

    pub fn etype(&self) -> EntityType {
        self.etype
    }

    pub fn insert(&mut self, cui: &str, name: &str, canonical: bool) -> Result<(), String> {
        if !is_valid_cui(cui) {
            return Err(format!("malformed concept id {cui:?}"));
        }
        let name = name.trim();
        if name.is_empty() {
            return Err("empty name".into());
        }
        let cuis = self.entries.entry(name.to_lowercase()).or_default();
        if !cuis.iter().any(|c| c == cui) {
            cuis.push(cui.to_string());
            cuis.sort();
        }
        let already_flagged = self.flagged.get(cui).copied().unwrap_or(false);
        if !self.canonical.contains_key(cui) || (canonical && !already_flagged) {
            self.canonical.insert(cui.to_string(), name.to_string());
            self.flagged.insert(cui.to_string(), canonical);
        }
        Ok(())
    }

    /// Parses `<cui>\t<name>\t<0|1>` lines. Blank lines and `#` comments are skipped.
    pub fn parse(etype: EntityType, text: &str, source: &str) -> Result<Self, LexiconError> {
        let mut lex = Self::new(etype);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |reason: String| LexiconError::InvalidLine {
                file: source.to_string(),
                line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [cui, name, flag] = fields.as_slice() else {
                return Err(invalid(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            };
            let canonical = match *flag {
                "0" => false,
                "1" => true,
                other => return Err(invalid(format!("canonical flag {other:?} is not 0 or 1"))),
            };
            lex.insert(cui, name, canonical).map_err(invalid)?;
        }
        Ok(lex)
    }

    pub fn load(etype: EntityType, path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(etype, &text, &path.display().to_string())
    }

    pub fn lookup(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn canonical_name(&self, cui: &str) -> Option<&str> {
        self.canonical.get(cui).map(String::as_str)
    }

    /// Stored (lowercased) names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// `(name, cui)` pairs sorted by name, then cui.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .flat_map(|(n, cuis)| cuis.iter().map(move |c| (n.as_str(), c.as_str())))
    }

    pub fn pair_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn concept_count(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Returns the concept ids of the first cascade key present in `lex`,
/// together with that key.
pub fn rule_normalize(mention: &str, lex: &Lexicon) -> Option<(Vec<String>, String)> {
    normalize_keys(mention)
        .into_iter()
        .find_map(|k| lex.lookup(&k).map(|ids| (ids.to_vec(), k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED: &str = "mesh:D001120\tArginine\t1\nmesh:D001120\tL-Arginine\t0\nmesh:D009369\ttumor\t0\nmesh:D009369\tNeoplasms\t1\n";

    #[test]
    fn parse_and_lookup() {
        let lex = Lexicon::parse(EntityType::Drug, SEED, "seed").unwrap();
        assert_eq!(lex.pair_count(), 4);
        assert_eq!(lex.concept_count(), 2);
        assert_eq!(lex.canonical_name("mesh:D009369"), Some("Neoplasms"));
        assert_eq!(lex.canonical_name("mesh:D001120"), Some("Arginine"));
        assert_eq!(lex.lookup("l-arginine"), Some(&["mesh:D001120".to_string()][..]));
    }

    #[test]
    fn rule_cascade_hits() {
        let lex = Lexicon::parse(EntityType::Drug, SEED, "seed").unwrap();
        assert_eq!(
            rule_normalize("arginine", &lex),
            Some((vec!["mesh:D001120".to_string()], "arginine".to_string()))
        );
        assert_eq!(
            rule_normalize("Tumors,", &lex),
            Some((vec!["mesh:D009369".to_string()], "tumor".to_string()))
        );
        assert_eq!(rule_normalize("xyzzy", &lex), None);
    }

    #[test]
    fn one_name_many_concepts() {
        let mut lex = Lexicon::new(EntityType::Gene);
        lex.insert("NCBIGene:2", "A2M", true).unwrap();
        lex.insert("NCBIGene:1", "a2m", false).unwrap();
        assert_eq!(lex.lookup("a2m").unwrap(), ["NCBIGene:1", "NCBIGene:2"]);
        assert_eq!(lex.pairs().count(), 2);
    }

    #[test]
    fn invalid_lines_report_position() {
        let err = Lexicon::parse(EntityType::Gene, "NCBIGene:1\tA\t1\nNCBIGene:2\tB\n", "g.tsv").unwrap_err();
        assert_eq!(
            err,
            LexiconError::InvalidLine {
                file: "g.tsv".into(),
                line_no: 2,
                reason: "expected 3 tab-separated fields, found 2".into()
            }
        );
        assert!(Lexicon::parse(EntityType::Gene, "10533\tatg7\t1\n", "g").is_err());
        assert!(Lexicon::parse(EntityType::Gene, "NCBIGene:1\tA\t2\n", "g").is_err());
    }
}
