const QUOTES: &[char] = &['"', '\'', '`', '\u{201C}', '\u{201D}', '\u{2018}', '\u{2019}'];
const TERMINAL: &[char] = &['?', '.', '!', ',', ';', ':'];

/// Canonical form used for duplicate detection and cache keys: lowercase,
/// single spaces, no surrounding quotes, no terminal punctuation.
pub fn normalize_query(query: &str) -> String {
    let lowered = query.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut s = collapsed.as_str();
    loop {
        let next = s.trim_matches(QUOTES).trim_end_matches(TERMINAL).trim();
        if next == s {
            break;
        }
        s = next;
    }
    s.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            normalize_query("Did the Gator Bowl happen?"),
            "did the gator bowl happen"
        );
        assert_eq!(normalize_query("  GATOR   bowl "), "gator bowl");
        assert_eq!(normalize_query("x"), "x");
        assert_eq!(normalize_query("\"Is it true?\""), "is it true");
        assert_eq!(normalize_query("'quoted'?!"), "quoted");
        assert_eq!(normalize_query("?!"), "");
    }

    proptest! {
        #[test]
        fn idempotent(q in "\\PC{0,40}") {
            let once = normalize_query(&q);
            prop_assert_eq!(normalize_query(&once), once.clone());
        }
    }
}
