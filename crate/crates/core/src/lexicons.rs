//! Affect lexicons: word → (valence, arousal, dominance) and word → emotion categories.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use log::warn;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line_no}: malformed row")]
    MalformedRow { line_no: usize },
    #[error("line {line_no}: value outside [0, 1]")]
    OutOfRange { line_no: usize },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("line {line_no}: unknown category {name:?}")]
    UnknownCategory { line_no: usize, name: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VadLexicon {
    entries: HashMap<String, Vad>,
    skipped_multiword: usize,
}

impl VadLexicon {
    /// Exact lookup on the lowercase key.
    pub fn get(&self, word: &str) -> Option<Vad> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of multi-word rows skipped during loading.
    pub fn skipped_multiword(&self) -> usize {
        self.skipped_multiword
    }
}

/// Load `word\tV\tA\tD` rows. A first row whose values are not numeric is a header.
pub fn load_vad<R: BufRead>(reader: R) -> Result<VadLexicon, LexiconError> {
    let mut lex = VadLexicon::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 4 {
            return Err(LexiconError::MalformedRow { line_no });
        }
        let values: Result<Vec<f64>, _> = cells[1..].iter().map(|c| c.trim().parse::<f64>()).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(LexiconError::MalformedRow { line_no }),
        };
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LexiconError::OutOfRange { line_no });
        }
        let word = cells[0].trim().to_lowercase();
        if word.is_empty() {
            return Err(LexiconError::MalformedRow { line_no });
        }
        if word.contains(char::is_whitespace) {
            lex.skipped_multiword += 1;
            continue;
        }
        if lex.entries.contains_key(&word) {
            return Err(LexiconError::DuplicateWord(word));
        }
        lex.entries.insert(
            word,
            Vad {
                valence: values[0],
                arousal: values[1],
                dominance: values[2],
            },
        );
    }
    if lex.skipped_multiword > 0 {
        warn!("VAD lexicon: skipped {} multi-word entries", lex.skipped_multiword);
    }
    Ok(lex)
}

/// The ten association categories in feature order: eight emotions, then two sentiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmoCategory {
    Anger,
    Anticipation,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Trust,
    Negative,
    Positive,
}

impl EmoCategory {
    pub const ALL: [EmoCategory; 10] = [
        EmoCategory::Anger,
        EmoCategory::Anticipation,
        EmoCategory::Disgust,
        EmoCategory::Fear,
        EmoCategory::Joy,
        EmoCategory::Sadness,
        EmoCategory::Surprise,
        EmoCategory::Trust,
        EmoCategory::Negative,
        EmoCategory::Positive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmoCategory::Anger => "anger",
            EmoCategory::Anticipation => "anticipation",
            EmoCategory::Disgust => "disgust",
            EmoCategory::Fear => "fear",
            EmoCategory::Joy => "joy",
            EmoCategory::Sadness => "sadness",
            EmoCategory::Surprise => "surprise",
            EmoCategory::Trust => "trust",
            EmoCategory::Negative => "negative",
            EmoCategory::Positive => "positive",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for EmoCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmoCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        EmoCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(())
    }
}

/// Set of categories as a bitmask over `EmoCategory::ALL`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategorySet(u16);

impl CategorySet {
    pub fn contains(self, c: EmoCategory) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn insert(&mut self, c: EmoCategory) {
        self.0 |= c.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = EmoCategory> {
        EmoCategory::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmoLexicon {
    entries: HashMap<String, CategorySet>,
}

impl EmoLexicon {
    /// `None` when the word never appeared in the source; a listed word with
    /// only zero flags maps to the empty set.
    pub fn get(&self, word: &str) -> Option<CategorySet> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Words associated with `category`, sorted.
    pub fn words_with(&self, category: EmoCategory) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, set)| set.contains(category))
            .map(|(w, _)| w.as_str())
            .collect();
        words.sort_unstable();
        words
    }
}

/// Load the long format `word\tcategory\tflag`, flag ∈ {0, 1}.
pub fn load_emolex<R: BufRead>(reader: R) -> Result<EmoLexicon, LexiconError> {
    let mut lex = EmoLexicon::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 3 || cells[0].trim().is_empty() {
            return Err(LexiconError::MalformedRow { line_no });
        }
        let name = cells[1].trim();
        let category = name
            .to_lowercase()
            .parse::<EmoCategory>()
            .map_err(|_| LexiconError::UnknownCategory {
                line_no,
                name: name.to_string(),
            })?;
        let flag = match cells[2].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(LexiconError::MalformedRow { line_no }),
        };
        let word = cells[0].trim().to_lowercase();
        let entry = lex.entries.entry(word).or_default();
        if flag {
            entry.insert(category);
        }
    }
    Ok(lex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vad_basic() {
        let lex = load_vad("love\t0.9\t0.7\t0.6\n".as_bytes()).unwrap();
        assert_eq!(
            lex.get("love"),
            Some(Vad {
                valence: 0.9,
                arousal: 0.7,
                dominance: 0.6
            })
        );
        assert_eq!(lex.get("hate"), None);
        assert!(load_vad("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn vad_errors() {
        assert!(matches!(
            load_vad("x\t1.5\t0\t0\n".as_bytes()),
            Err(LexiconError::OutOfRange { line_no: 1 })
        ));
        assert!(matches!(
            load_vad("x\t0.5\t0\n".as_bytes()),
            Err(LexiconError::MalformedRow { line_no: 1 })
        ));
        assert!(matches!(
            load_vad("a\t0.1\t0.1\t0.1\nb\tx\t0.1\t0.1\n".as_bytes()),
            Err(LexiconError::MalformedRow { line_no: 2 })
        ));
        assert!(matches!(
            load_vad("Love\t0.1\t0.1\t0.1\nlove\t0.2\t0.2\t0.2\n".as_bytes()),
            Err(LexiconError::DuplicateWord(ref w)) if w == "love"
        ));
    }

    #[test]
    fn vad_header_and_multiword() {
        let text = "Word\tValence\tArousal\tDominance\nGood\t0.9\t0.4\t0.7\nice cream\t0.9\t0.5\t0.5\n";
        let lex = load_vad(text.as_bytes()).unwrap();
        assert_eq!(lex.len(), 1);
        assert!(lex.get("good").is_some());
        assert_eq!(lex.skipped_multiword(), 1);
    }

    #[test]
    fn emolex_basic() {
        let lex = load_emolex("abandon\tsadness\t1\nabandon\tjoy\t0\n".as_bytes()).unwrap();
        let set = lex.get("abandon").unwrap();
        assert!(set.contains(EmoCategory::Sadness));
        assert!(!set.contains(EmoCategory::Joy));
        assert_eq!(lex.get("zzz"), None);
        assert_eq!(lex.words_with(EmoCategory::Sadness), vec!["abandon"]);
        assert!(lex.words_with(EmoCategory::Joy).is_empty());
    }

    #[test]
    fn emolex_errors() {
        assert!(matches!(
            load_emolex("abandon\tbliss\t1\n".as_bytes()),
            Err(LexiconError::UnknownCategory { ref name, .. }) if name == "bliss"
        ));
        assert!(matches!(
            load_emolex("abandon\tjoy\t2\n".as_bytes()),
            Err(LexiconError::MalformedRow { .. })
        ));
        assert!(matches!(
            load_emolex("abandon\tjoy\n".as_bytes()),
            Err(LexiconError::MalformedRow { .. })
        ));
    }

    #[test]
    fn emolex_order_insensitive() {
        let a = "x\tjoy\t1\nx\tfear\t1\ny\tanger\t1\nx\tanger\t0\n";
        let b = "x\tanger\t0\ny\tanger\t1\nx\tfear\t1\nx\tjoy\t1\n";
        let (la, lb) = (load_emolex(a.as_bytes()).unwrap(), load_emolex(b.as_bytes()).unwrap());
        for w in ["x", "y", "z"] {
            assert_eq!(la.get(w), lb.get(w));
        }
    }

    #[test]
    fn category_order_is_fixed() {
        let names: Vec<&str> = EmoCategory::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            names,
            [
                "anger",
                "anticipation",
                "disgust",
                "fear",
                "joy",
                "sadness",
                "surprise",
                "trust",
                "negative",
                "positive"
            ]
        );
    }
}
