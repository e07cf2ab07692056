//! Tokenization, sentence splitting and the stable hash used by every
//! hashed feature layout.
//!
//! Tokens are produced by lowercasing, splitting on whitespace and stripping
//! leading/trailing punctuation; chunks that are pure punctuation vanish.
//! A sentence ends after `.`, `!` or `?` when followed by whitespace or the
//! end of the text.

/// Default truncation applied before feature extraction.
pub const MAX_TOKENS: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// FNV-1a of `s` reduced modulo `slots`.
pub fn hash_slot(s: &str, slots: usize) -> usize {
    (fnv1a64(s.as_bytes()) % slots as u64) as usize
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201c}'
                | '\u{201d}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00ab}'
                | '\u{00bb}'
                | '\u{00bf}'
                | '\u{00a1}'
        )
}

/// Normalizes one whitespace-delimited chunk into a token, if anything is left.
pub fn normalize_word(chunk: &str) -> Option<String> {
    let core = chunk.trim_matches(is_punct);
    if core.is_empty() {
        None
    } else {
        Some(core.to_lowercase())
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Splits raw text into sentence strings (untokenized).
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                out.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Sentences as token sequences. Sentences without tokens are dropped; a text
/// with no tokenizable sentence yields a single empty sentence.
pub fn sentence_tokens(text: &str) -> Vec<Vec<String>> {
    let sents: Vec<Vec<String>> = split_sentences(text)
        .into_iter()
        .map(tokenize)
        .filter(|s| !s.is_empty())
        .collect();
    if sents.is_empty() {
        vec![Vec::new()]
    } else {
        sents
    }
}

/// Tokenized view of a text, truncated to a token budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub sentences: Vec<Vec<String>>,
}

impl Tokenized {
    pub fn new(text: &str, max_tokens: usize) -> Self {
        let mut sentences = Vec::new();
        let mut tokens = Vec::new();
        for sent in sentence_tokens(text) {
            let room = max_tokens.saturating_sub(tokens.len());
            if room == 0 && !sentences.is_empty() {
                break;
            }
            let kept: Vec<String> = sent.into_iter().take(room).collect();
            tokens.extend(kept.iter().cloned());
            sentences.push(kept);
        }
        Tokenized { tokens, sentences }
    }

    /// Sentences joined back into normalized strings.
    pub fn sentence_strings(&self) -> Vec<String> {
        self.sentences.iter().map(|s| s.join(" ")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_and_lowercases() {
        assert_eq!(
            tokenize("Hello, World! -- it's \"fine\"."),
            vec!["hello", "world", "it's", "fine"]
        );
        assert!(tokenize("  ... !! ").is_empty());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn sentence_boundaries_need_trailing_space() {
        let s = split_sentences("Pi is 3.14 here. Next one!Not split? End");
        assert_eq!(s, vec!["Pi is 3.14 here.", " Next one!Not split?", " End"]);
        assert_eq!(sentence_tokens("no terminal punctuation").len(), 1);
        assert_eq!(sentence_tokens(""), vec![Vec::<String>::new()]);
        assert_eq!(sentence_tokens("A b. ... C d.").len(), 2);
    }

    #[test]
    fn truncation_keeps_sentences_consistent() {
        let t = Tokenized::new("a b c. d e f. g h.", 4);
        assert_eq!(t.tokens, vec!["a", "b", "c", "d"]);
        assert_eq!(t.sentences, vec![vec!["a", "b", "c"], vec!["d"]]);
        let full = Tokenized::new("a b c. d e f.", MAX_TOKENS);
        assert_eq!(full.sentences.len(), 2);
    }
}
