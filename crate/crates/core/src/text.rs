//! Character-level helpers shared by the tokenizers and the lexical matcher.

/// A token made only of punctuation or symbols.
pub fn is_punct(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_alphanumeric)
}

/// Lowercased alphanumeric runs, with every other non-space character kept as
/// its own piece: `"IL-2 (human)"` gives `["il", "-", "2", "(", "human", ")"]`.
pub fn word_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            pieces.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            pieces.push(ch.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

/// Lowercased alphanumeric runs only.
pub fn alnum_words(text: &str) -> Vec<String> {
    word_pieces(text)
        .into_iter()
        .filter(|p| !is_punct(p))
        .collect()
}

/// Collapse runs of whitespace into a single space and trim both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte offset -> character offset. `byte` must lie on a char boundary.
pub fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Character offset -> byte offset, clamped to the end of the text.
pub fn char_to_byte(text: &str, ch: usize) -> usize {
    text.char_indices()
        .nth(ch)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_split_punctuation() {
        assert_eq!(
            word_pieces("IL-2 (Human),  cells"),
            vec!["il", "-", "2", "(", "human", ")", ",", "cells"]
        );
        assert_eq!(alnum_words("E. coli"), vec!["e", "coli"]);
    }

    #[test]
    fn punct_detection() {
        assert!(is_punct("."));
        assert!(is_punct("--"));
        assert!(!is_punct("e."));
        assert!(!is_punct(""));
    }

    #[test]
    fn offsets_roundtrip() {
        let s = "αβ gamma";
        let b = char_to_byte(s, 3);
        assert_eq!(&s[b..], "gamma");
        assert_eq!(byte_to_char(s, b), 3);
        assert_eq!(char_to_byte(s, 100), s.len());
    }
}
