//! Rule-cascade lookup keys for dictionary matching.

const GREEK: &[(char, &str)] = &[
    ('α', "alpha"),
    ('β', "beta"),
    ('γ', "gamma"),
    ('δ', "delta"),
    ('ε', "epsilon"),
    ('ζ', "zeta"),
    ('η', "eta"),
    ('θ', "theta"),
    ('ι', "iota"),
    ('κ', "kappa"),
    ('λ', "lambda"),
    ('μ', "mu"),
    ('µ', "mu"),
    ('ν', "nu"),
    ('ξ', "xi"),
    ('ο', "omicron"),
    ('π', "pi"),
    ('ρ', "rho"),
    ('σ', "sigma"),
    ('ς', "sigma"),
    ('τ', "tau"),
    ('υ', "upsilon"),
    ('φ', "phi"),
    ('χ', "chi"),
    ('ψ', "psi"),
    ('ω', "omega"),
];

fn strip_punctuation(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn collapse_separators(s: &str) -> String {
    s.split(|c: char| c.is_whitespace() || c == '-')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_plural(s: &str) -> String {
    let (head, last) = match s.rsplit_once(' ') {
        Some((h, l)) => (Some(h), l),
        None => (None, s),
    };
    let keep = last.chars().count() <= 3
        || !last.ends_with('s')
        || last.ends_with("ss")
        || last.ends_with("us")
        || last.ends_with("is");
    if keep {
        return s.to_string();
    }
    let singular = &last[..last.len() - 1];
    match head {
        Some(h) => format!("{h} {singular}"),
        None => singular.to_string(),
    }
}

fn spell_greek(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match GREEK.iter().find(|(g, _)| *g == c) {
            Some((_, name)) => out.push_str(name),
            None => out.push(c),
        }
    }
    out
}

/// Lookup keys for `name`, most specific first, deduplicated.
///
/// Each stage builds on the previous one: lowercase; strip edge punctuation;
/// collapse whitespace and hyphens; drop a plural "s" from the last word;
/// spell out Greek letters.
pub fn normalize_keys(name: &str) -> Vec<String> {
    let s1 = name.to_lowercase();
    let s2 = strip_punctuation(&s1);
    let s3 = collapse_separators(&s2);
    let s4 = strip_plural(&s3);
    let s5 = spell_greek(&s4);

    let mut keys: Vec<String> = Vec::with_capacity(5);
    for k in [s1, s2, s3, s4, s5] {
        if !k.is_empty() && !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_key_is_lowercase() {
        assert_eq!(normalize_keys("Arginine")[0], "arginine");
        assert_eq!(normalize_keys("Arginine"), vec!["arginine"]);
    }

    #[test]
    fn plural_at_stage_four() {
        let keys = normalize_keys("tumors,");
        assert_eq!(keys, vec!["tumors,", "tumors", "tumor"]);
    }

    #[test]
    fn hyphen_and_greek() {
        let keys = normalize_keys("TNF-α");
        assert_eq!(keys, vec!["tnf-α", "tnf α", "tnf alpha"]);
    }

    #[test]
    fn plural_guards() {
        assert_eq!(normalize_keys("Sepsis"), vec!["sepsis"]);
        assert_eq!(normalize_keys("virus"), vec!["virus"]);
        assert_eq!(normalize_keys("gas"), vec!["gas"]);
        assert_eq!(normalize_keys("breast  cancers"), vec!["breast  cancers", "breast cancers", "breast cancer"]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(normalize_keys("").is_empty());
        assert_eq!(normalize_keys("--"), vec!["--"]);
    }
}
