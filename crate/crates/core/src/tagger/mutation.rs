use std::sync::OnceLock;

use regex::Regex;

use crate::model::{CharMap, EntityType, Mention};

/// Protein substitutions (`p.V600E`, `V600E`), coding changes (`c.76A>T`) and
/// dbSNP ids (`rs113488022`). Alternation order matters: prefixed forms first.
fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        const AA: &str = "[ACDEFGHIKLMNPQRSTVWY]";
        let src = format!(
            r"p\.{AA}[0-9]+{AA}|c\.[0-9]+[ACGT]>[ACGT]|rs[0-9]+|{AA}[0-9]+{AA}"
        );
        Regex::new(&src).expect("mutation pattern compiles")
    })
}

/// Finds non-overlapping mutation mentions delimited by non-alphanumeric context.
pub fn recognize_mutations(text: &str) -> Vec<Mention> {
    let re = pattern();
    let map = CharMap::new(text);
    let mut out = Vec::new();
    let mut pos = 0;
    while pos <= text.len() {
        let Some(m) = re.find_at(text, pos) else {
            break;
        };
        let before_ok = text[..m.start()]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = text[m.end()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            let begin = map.char_offset(m.start()).expect("regex matches on char boundaries");
            let end = map.char_offset(m.end()).expect("regex matches on char boundaries");
            out.push(Mention {
                begin,
                end,
                surface: m.as_str().to_string(),
                etype: EntityType::Mutation,
                prob: 1.0,
            });
            pos = m.end();
        } else {
            // retry one char past the rejected start
            let step = text[m.start()..].chars().next().map_or(1, char::len_utf8);
            pos = m.start() + step;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str) -> Vec<(usize, usize, String)> {
        recognize_mutations(text)
            .into_iter()
            .map(|m| (m.begin, m.end, m.surface))
            .collect()
    }

    #[test]
    fn examples() {
        assert!(spans("wild-type sample").is_empty());
        assert_eq!(spans("BRAF V600E mutation"), vec![(5, 10, "V600E".into())]);
        assert_eq!(
            spans("c.76A>T and rs113488022"),
            vec![(0, 7, "c.76A>T".into()), (12, 23, "rs113488022".into())]
        );
    }

    #[test]
    fn prefixed_protein_form() {
        assert_eq!(spans("(p.R273H)"), vec![(1, 8, "p.R273H".into())]);
    }

    #[test]
    fn requires_boundaries() {
        assert!(spans("xV600E").is_empty());
        assert!(spans("V600Ex").is_empty());
        assert!(spans("rs12ab").is_empty());
        assert!(spans("c.76A>Tx").is_empty());
        // B and J are not amino-acid codes
        assert!(spans("B600E").is_empty());
    }

    #[test]
    fn multibyte_offsets() {
        assert_eq!(spans("β-catenin; G12D."), vec![(11, 15, "G12D".into())]);
    }
}
