//! Tokenisation: lowercase, split on whitespace, every punctuation or symbol
//! character becomes its own token.

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() && !ch.is_control() {
                tokens.push(ch.to_lowercase().collect());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Joins tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Bedřich Smetana, (1824) said: \"Hi!\""),
            vec!["bedřich", "smetana", ",", "(", "1824", ")", "said", ":", "\"", "hi", "!", "\""]
        );
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(tokenize(" \t\n ").is_empty());
    }
}
