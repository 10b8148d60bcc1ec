//! Tokenization and the optional chat-text normalizations.
//!
//! With every flag off the pipeline is `lowercase(tokenize(turn))`. The
//! normalizations (elongation collapse, slang expansion, diacritic / number /
//! stop-word stripping) are opt-in and applied in that order after lowercasing.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Conversation;

const BUNDLED_EMOTICONS: &str = include_str!("../data/emoticons.txt");
const BUNDLED_SLANG: &str = include_str!("../data/slang.tsv");
const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Inclusive codepoint ranges treated as emoji.
///
/// Covers the pictographic blocks plus the joiners that glue multi-codepoint
/// emoji together (variation selector 16, zero-width joiner, keycap).
pub const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
    (0x2300, 0x23FF),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0x3030, 0x3030),
    (0x303D, 0x303D),
    (0x3297, 0x3297),
    (0x3299, 0x3299),
    (0xFE0F, 0xFE0F),
    (0x1F000, 0x1FAFF),
];

pub fn is_emoji_char(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES
        .iter()
        .any(|&(lo, hi)| cp >= lo && cp <= hi)
}

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("line {line_no}: malformed row")]
    MalformedRow { line_no: usize },
    #[error("slang key {0:?} must be a single lowercase token")]
    BadSlangKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_word_list<R: BufRead>(reader: R) -> Result<Vec<String>, ResourceError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let entry = line.trim_end_matches('\r').trim();
        if !entry.is_empty() {
            out.push(entry.to_string());
        }
    }
    Ok(out)
}

/// Load a one-entry-per-line list (stop-words, emoticons, vocabularies).
pub fn load_word_set<R: BufRead>(reader: R) -> Result<HashSet<String>, ResourceError> {
    Ok(parse_word_list(reader)?.into_iter().collect())
}

pub fn bundled_stopwords() -> HashSet<String> {
    BUNDLED_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Word,
    Emoji,
    Punct,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Whitespace/punctuation tokenizer with an emoticon exemption list.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    emoticons: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::with_emoticons(
            BUNDLED_EMOTICONS
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from),
        )
    }
}

impl Tokenizer {
    pub fn with_emoticons<I: IntoIterator<Item = String>>(emoticons: I) -> Self {
        Self {
            emoticons: emoticons.into_iter().collect(),
        }
    }

    pub fn from_emoticon_file<R: BufRead>(reader: R) -> Result<Self, ResourceError> {
        Ok(Self::with_emoticons(parse_word_list(reader)?))
    }

    pub fn is_emoticon(&self, token: &str) -> bool {
        self.emoticons.contains(token)
    }

    /// A token counts as emoji if it is a listed emoticon or contains an emoji codepoint.
    pub fn is_emoji_token(&self, token: &str) -> bool {
        self.is_emoticon(token) || token.chars().any(is_emoji_char)
    }

    /// Split on whitespace, then split each chunk into maximal runs of word
    /// characters, emoji, and other punctuation. Apostrophes between two word
    /// characters stay inside the word. Chunks that are listed emoticons are
    /// kept whole. Case is preserved.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for chunk in text.split_whitespace() {
            if self.emoticons.contains(chunk) {
                tokens.push(chunk.to_string());
                continue;
            }
            let chars: Vec<char> = chunk.chars().collect();
            let mut current = String::new();
            let mut current_class = None;
            for (i, &c) in chars.iter().enumerate() {
                let class = if is_word_char(c) {
                    CharClass::Word
                } else if is_apostrophe(c)
                    && i > 0
                    && is_word_char(chars[i - 1])
                    && chars.get(i + 1).copied().is_some_and(is_word_char)
                {
                    CharClass::Word
                } else if is_emoji_char(c) {
                    CharClass::Emoji
                } else {
                    CharClass::Punct
                };
                if current_class != Some(class) && !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                current_class = Some(class);
                current.push(c);
            }
            if !current.is_empty() {
                tokens.push(current);
            }
        }
        tokens
    }
}

fn default_tokenizer() -> &'static Tokenizer {
    static TOKENIZER: OnceLock<Tokenizer> = OnceLock::new();
    TOKENIZER.get_or_init(Tokenizer::default)
}

/// Tokenize with the bundled emoticon list.
pub fn tokenize(text: &str) -> Vec<String> {
    default_tokenizer().tokenize(text)
}

/// Shorten every run of three or more identical characters to exactly two.
pub fn collapse_elongation(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut prev = None;
    let mut run = 0usize;
    for c in token.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= 2 {
            out.push(c);
        }
    }
    out
}

/// Token → replacement sequence, loaded from `token\texpansion words` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlangTable {
    entries: HashMap<String, Vec<String>>,
}

impl SlangTable {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_SLANG.as_bytes()).expect("bundled slang table is well-formed")
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, ResourceError> {
        let mut entries = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (key, expansion) = line
                .split_once('\t')
                .ok_or(ResourceError::MalformedRow { line_no: i + 1 })?;
            let words: Vec<String> = expansion.split_whitespace().map(String::from).collect();
            if words.is_empty() {
                return Err(ResourceError::MalformedRow { line_no: i + 1 });
            }
            if key.is_empty() || key.chars().any(char::is_whitespace) || key.to_lowercase() != key
            {
                return Err(ResourceError::BadSlangKey(key.to_string()));
            }
            entries.insert(key.to_string(), words);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: &str, expansion: &[&str]) {
        self.entries.insert(
            key.to_string(),
            expansion.iter().map(|s| s.to_string()).collect(),
        );
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Single left-to-right pass; expansions are not re-expanded.
pub fn expand_slang(tokens: &[String], table: &SlangTable) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        match table.get(token) {
            Some(expansion) => out.extend(expansion.iter().cloned()),
            None => out.push(token.clone()),
        }
    }
    out
}

fn strip_diacritics(token: &str) -> String {
    token.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
}

/// Remove diacritics, then drop digit-only tokens, stop-words and question-mark tokens.
pub fn strip_normalize(tokens: &[String], stopwords: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| strip_diacritics(t))
        .filter(|t| {
            !t.is_empty()
                && !t.chars().all(|c| c.is_numeric())
                && !t.chars().all(|c| c == '?')
                && !stopwords.contains(t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub collapse_elongation: bool,
    pub expand_slang: bool,
    pub strip_normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedConversation {
    pub id: String,
    pub raw_turns: [String; 3],
    pub lower_turns: [String; 3],
    pub tokens: [Vec<String>; 3],
}

/// Flags plus the resources the optional steps need.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub tokenizer: Tokenizer,
    pub slang: SlangTable,
    pub stopwords: HashSet<String>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(PreprocessConfig::default())
    }
}

impl Preprocessor {
    /// Bundled tokenizer, slang table and stop-word list.
    pub fn new(config: PreprocessConfig) -> Self {
        Self {
            config,
            tokenizer: Tokenizer::default(),
            slang: SlangTable::bundled(),
            stopwords: bundled_stopwords(),
        }
    }

    pub fn tokens(&self, raw: &str) -> Vec<String> {
        let mut tokens: Vec<String> = self
            .tokenizer
            .tokenize(raw)
            .into_iter()
            .map(|t| t.to_lowercase())
            .collect();
        if self.config.collapse_elongation {
            tokens = tokens.iter().map(|t| collapse_elongation(t)).collect();
        }
        if self.config.expand_slang {
            tokens = expand_slang(&tokens, &self.slang);
        }
        if self.config.strip_normalize {
            tokens = strip_normalize(&tokens, &self.stopwords);
        }
        tokens
    }

    pub fn process(&self, conv: &Conversation) -> TokenizedConversation {
        TokenizedConversation {
            id: conv.id.clone(),
            raw_turns: conv.turns.clone(),
            lower_turns: conv.turns.clone().map(|t| t.to_lowercase()),
            tokens: [
                self.tokens(&conv.turns[0]),
                self.tokens(&conv.turns[1]),
                self.tokens(&conv.turns[2]),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I'm happy!!"), s(&["I'm", "happy", "!!"]));
        assert_eq!(tokenize(":) ok"), s(&[":)", "ok"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("lol😂😂 <3"), s(&["lol", "😂😂", "<3"]));
        assert_eq!(tokenize("'quoted'"), s(&["'", "quoted", "'"]));
        assert_eq!(tokenize("WHY???"), s(&["WHY", "???"]));
    }

    #[test]
    fn elongation_examples() {
        assert_eq!(collapse_elongation("soooo"), "soo");
        assert_eq!(collapse_elongation("heelloo"), "heelloo");
        assert_eq!(collapse_elongation("okaaaayyyy"), "okaayy");
        assert_eq!(collapse_elongation(""), "");
    }

    #[test]
    fn slang_examples() {
        let mut table = SlangTable::default();
        table.insert("idk", &["i", "don't", "know"]);
        assert_eq!(expand_slang(&s(&["idk"]), &table), s(&["i", "don't", "know"]));
        assert_eq!(expand_slang(&s(&["hello"]), &table), s(&["hello"]));
        assert!(expand_slang(&[], &table).is_empty());
    }

    #[test]
    fn slang_is_single_pass() {
        let mut table = SlangTable::default();
        table.insert("a", &["b"]);
        table.insert("b", &["c"]);
        assert_eq!(expand_slang(&s(&["a", "b"]), &table), s(&["b", "c"]));
    }

    #[test]
    fn bundled_slang_loads() {
        let table = SlangTable::bundled();
        assert!(table.len() >= 50);
        assert_eq!(table.get("idk").unwrap(), s(&["i", "don't", "know"]).as_slice());
    }

    #[test]
    fn slang_rejects_uppercase_key() {
        let err = SlangTable::from_tsv("IDK\ti don't know\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ResourceError::BadSlangKey(_)));
    }

    #[test]
    fn strip_examples() {
        let stop: HashSet<String> = ["the".to_string()].into();
        assert_eq!(
            strip_normalize(&s(&["café", "123", "the", "?", "good"]), &stop),
            s(&["cafe", "good"])
        );
        assert_eq!(strip_normalize(&s(&["good"]), &stop), s(&["good"]));
        assert_eq!(strip_normalize(&s(&["à"]), &stop), s(&["a"]));
    }

    #[test]
    fn flags_off_is_lowercase_tokenize() {
        let p = Preprocessor::default();
        let text = "OMG Sooooo HAPPY :D idk";
        let expected: Vec<String> = tokenize(text).iter().map(|t| t.to_lowercase()).collect();
        assert_eq!(p.tokens(text), expected);
    }

    #[test]
    fn all_flags_on() {
        let p = Preprocessor::new(PreprocessConfig {
            collapse_elongation: true,
            expand_slang: true,
            strip_normalize: true,
        });
        assert_eq!(p.tokens("IDK the café is sooooo 123 good?"), s(&["don't", "know", "cafe", "soo", "good"]));
    }

    proptest! {
        #[test]
        fn collapse_is_idempotent(t in "[a-c]{0,12}") {
            let once = collapse_elongation(&t);
            prop_assert_eq!(collapse_elongation(&once), once);
        }

        #[test]
        fn tokens_are_nonempty_without_whitespace(text in "\\PC{0,40}") {
            let tokens = tokenize(&text);
            for t in &tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
            // tokens re-segment the non-whitespace characters in order
            let joined: String = tokens.concat();
            let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, expected);
        }

        #[test]
        fn slang_never_shrinks(tokens in proptest::collection::vec("[a-z]{1,4}", 0..10)) {
            let table = SlangTable::bundled();
            prop_assert!(expand_slang(&tokens, &table).len() >= tokens.len());
        }
    }
}
