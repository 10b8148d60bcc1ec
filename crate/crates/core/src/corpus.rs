//! Conversation TSV parsing, label encoding and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::Tokenizer;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line_no}: wrong column count (expected {expected}, found {found})")]
    WrongColumnCount {
        line_no: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line_no}: unknown label {text:?}")]
    UnknownLabel { line_no: usize, text: String },
    #[error("duplicate conversation id {0:?}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four task classes. `Others` is the non-emotion class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Happy,
    Sad,
    Angry,
    Others,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Happy, Label::Sad, Label::Angry, Label::Others];
    pub const EMOTIONS: [Label; 3] = [Label::Happy, Label::Sad, Label::Angry];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Happy => "happy",
            Label::Sad => "sad",
            Label::Angry => "angry",
            Label::Others => "others",
        }
    }

    pub fn is_emotion(self) -> bool {
        self != Label::Others
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label {0:?}")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "happy" => Ok(Label::Happy),
            "sad" => Ok(Label::Sad),
            "angry" => Ok(Label::Angry),
            "others" | "other" => Ok(Label::Others),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub turns: [String; 3],
    pub label: Option<Label>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, turns: [&str; 3], label: Option<Label>) -> Self {
        Self {
            id: id.into(),
            turns: turns.map(String::from),
            label,
        }
    }
}

/// Parse `id, turn1, turn2, turn3[, label]` rows.
///
/// A first row whose first cell is `id` (any case) is treated as a header.
/// Blank lines are skipped; turn text is kept byte-exact.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    has_labels: bool,
) -> Result<Vec<Conversation>, CorpusError> {
    let expected = if has_labels { 5 } else { 4 };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if i == 0 && cells[0].eq_ignore_ascii_case("id") {
            continue;
        }
        if cells.len() != expected {
            return Err(CorpusError::WrongColumnCount {
                line_no,
                expected,
                found: cells.len(),
            });
        }
        let label = if has_labels {
            Some(
                cells[4]
                    .parse::<Label>()
                    .map_err(|e| CorpusError::UnknownLabel {
                        line_no,
                        text: e.0,
                    })?,
            )
        } else {
            None
        };
        let id = cells[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        out.push(Conversation {
            id,
            turns: [
                cells[1].to_string(),
                cells[2].to_string(),
                cells[3].to_string(),
            ],
            label,
        });
    }
    Ok(out)
}

/// Write conversations in the same TSV layout, with a header row.
/// The label column is written only when every conversation has one.
pub fn write_dataset<W: Write>(mut writer: W, convs: &[Conversation]) -> std::io::Result<()> {
    let labelled = !convs.is_empty() && convs.iter().all(|c| c.label.is_some());
    if labelled {
        writeln!(writer, "id\tturn1\tturn2\tturn3\tlabel")?;
    } else {
        writeln!(writer, "id\tturn1\tturn2\tturn3")?;
    }
    for c in convs {
        write!(writer, "{}\t{}\t{}\t{}", c.id, c.turns[0], c.turns[1], c.turns[2])?;
        match c.label {
            Some(label) if labelled => writeln!(writer, "\t{label}")?,
            _ => writeln!(writer)?,
        }
    }
    Ok(())
}

/// Table-1-style corpus statistics. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub example_count: usize,
    pub token_count: usize,
    pub emoji_pct: f64,
    /// Per-token OOV rate; `None` when no vocabulary was supplied.
    pub oov_pct: Option<f64>,
    pub avg_length: f64,
    /// Present only when every conversation is labelled.
    pub class_pct: Option<BTreeMap<Label, f64>>,
}

/// Tokens are produced by `tokenizer` and lowercased before the vocabulary
/// lookup. A conversation counts toward `emoji_pct` when any of its tokens is
/// an emoji or listed emoticon.
pub fn dataset_stats(
    convs: &[Conversation],
    vocab: Option<&HashSet<String>>,
    tokenizer: &Tokenizer,
) -> Result<DatasetStats, CorpusError> {
    if convs.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut token_count = 0usize;
    let mut oov = 0usize;
    let mut with_emoji = 0usize;
    for conv in convs {
        let mut has_emoji = false;
        for turn in &conv.turns {
            for token in tokenizer.tokenize(turn) {
                token_count += 1;
                has_emoji |= tokenizer.is_emoji_token(&token);
                if let Some(vocab) = vocab {
                    if !vocab.contains(&token.to_lowercase()) {
                        oov += 1;
                    }
                }
            }
        }
        if has_emoji {
            with_emoji += 1;
        }
    }
    let n = convs.len() as f64;
    let oov_pct = vocab.map(|_| {
        if token_count == 0 {
            0.0
        } else {
            100.0 * oov as f64 / token_count as f64
        }
    });
    let class_pct = if convs.iter().all(|c| c.label.is_some()) {
        let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
        for c in convs {
            *counts.get_mut(&c.label.unwrap()).unwrap() += 1;
        }
        Some(
            counts
                .into_iter()
                .map(|(l, k)| (l, 100.0 * k as f64 / n))
                .collect(),
        )
    } else {
        None
    };
    Ok(DatasetStats {
        example_count: convs.len(),
        token_count,
        emoji_pct: 100.0 * with_emoji as f64 / n,
        oov_pct,
        avg_length: token_count as f64 / n,
        class_pct,
    })
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("Examples          {}\n", self.example_count));
        s.push_str(&format!("Emojis (%)        {:.1}\n", self.emoji_pct));
        match self.oov_pct {
            Some(v) => s.push_str(&format!("OOV (%)           {v:.1}\n")),
            None => s.push_str("OOV (%)           n/a\n"),
        }
        s.push_str(&format!("Avg.Length        {:.1}\n", self.avg_length));
        if let Some(pct) = &self.class_pct {
            for (label, v) in pct {
                s.push_str(&format!("{:<18}{v:.1}\n", format!("{label} (%)")));
            }
        }
        s
    }
}
