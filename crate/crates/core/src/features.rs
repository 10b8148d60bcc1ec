//! Feature space construction and vectorization.
//!
//! Columns come in six ablatable groups, always in this order:
//! word n-grams, char n-grams, VAD (15), EmoLex (30), neural scores (9),
//! lexical counts (27). Inside a group columns are ordered by turn, then by
//! name in byte order. Dense column names carry a numeric prefix so that the
//! byte order matches the extraction order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicons::{EmoCategory, EmoLexicon, VadLexicon};
use crate::preprocess::{TokenizedConversation, Tokenizer};
use crate::sparse::FeatureVector;

pub const VAD_PER_TURN: usize = 5;
pub const EMOLEX_PER_TURN: usize = 10;
pub const NEURAL_PER_TURN: usize = 3;
pub const COUNTS_PER_TURN: usize = 9;
pub const NEURAL_LEN: usize = NEURAL_PER_TURN * 3;
pub const DENSE_LEN: usize = (VAD_PER_TURN + EMOLEX_PER_TURN + NEURAL_PER_TURN + COUNTS_PER_TURN) * 3;

/// Value used for every VAD column of a turn without lexicon hits.
pub const VAD_NEUTRAL: f64 = 0.5;

const SPACE_MAGIC: &str = "nelec-feature-space";
const SPACE_VERSION: u32 = 1;

const VAD_NAMES: [&str; VAD_PER_TURN] = [
    "0_mean_valence",
    "1_mean_arousal",
    "2_mean_dominance",
    "3_max_dominance",
    "4_arousal_of_max_dominance",
];
const NEURAL_NAMES: [&str; NEURAL_PER_TURN] = ["0_sentiment", "1_adult", "2_offensive"];
const COUNT_NAMES: [&str; COUNTS_PER_TURN] = [
    "0_question_marks",
    "1_exclamation_marks",
    "2_uppercase_letters",
    "3_words",
    "4_letters",
    "5_emoji",
    "6_all_caps_words",
    "7_elongated_tokens",
    "8_punct_runs",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite neural score at position {0}")]
    NonFinite(usize),
    #[error("invalid n-gram config: {0}")]
    InvalidConfig(String),
    #[error("feature space file, line {line_no}: {msg}")]
    Corrupt { line_no: usize, msg: String },
    #[error("unsupported feature space version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    WordNgram,
    CharNgram,
    Vad,
    EmoLex,
    Neural,
    Counts,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::WordNgram,
        FeatureGroup::CharNgram,
        FeatureGroup::Vad,
        FeatureGroup::EmoLex,
        FeatureGroup::Neural,
        FeatureGroup::Counts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::WordNgram => "word",
            FeatureGroup::CharNgram => "char",
            FeatureGroup::Vad => "vad",
            FeatureGroup::EmoLex => "emolex",
            FeatureGroup::Neural => "neural",
            FeatureGroup::Counts => "counts",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, FeatureGroup::WordNgram | FeatureGroup::CharNgram)
    }

    fn dense_names(self) -> Vec<&'static str> {
        match self {
            FeatureGroup::WordNgram | FeatureGroup::CharNgram => Vec::new(),
            FeatureGroup::Vad => VAD_NAMES.to_vec(),
            FeatureGroup::EmoLex => EmoCategory::ALL.iter().map(|c| emolex_name(*c)).collect(),
            FeatureGroup::Neural => NEURAL_NAMES.to_vec(),
            FeatureGroup::Counts => COUNT_NAMES.to_vec(),
        }
    }
}

fn emolex_name(c: EmoCategory) -> &'static str {
    match c {
        EmoCategory::Anger => "0_anger",
        EmoCategory::Anticipation => "1_anticipation",
        EmoCategory::Disgust => "2_disgust",
        EmoCategory::Fear => "3_fear",
        EmoCategory::Joy => "4_joy",
        EmoCategory::Sadness => "5_sadness",
        EmoCategory::Surprise => "6_surprise",
        EmoCategory::Trust => "7_trust",
        EmoCategory::Negative => "8_negative",
        EmoCategory::Positive => "9_positive",
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown feature group {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramConfig {
    pub word_orders: BTreeSet<usize>,
    pub word_skip: usize,
    pub char_orders: BTreeSet<usize>,
    pub min_doc_freq: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            word_orders: [1, 2, 3].into(),
            word_skip: 1,
            char_orders: [2, 3].into(),
            min_doc_freq: 5,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.word_orders.contains(&0) || self.char_orders.contains(&0) {
            return Err(FeatureError::InvalidConfig("n-gram orders must be >= 1".into()));
        }
        if self.min_doc_freq == 0 {
            return Err(FeatureError::InvalidConfig("min_doc_freq must be >= 1".into()));
        }
        Ok(())
    }
}

/// Multiset of gram strings.
pub type GramCounts = HashMap<String, u32>;

/// Ordered index tuples `i1 < … < in` whose total gap is at most `skip`,
/// joined with `|`.
pub fn word_skipgrams(tokens: &[String], n: usize, skip: usize) -> GramCounts {
    let mut out = GramCounts::new();
    add_word_skipgrams(tokens, n, skip, &mut out);
    out
}

fn add_word_skipgrams(tokens: &[String], n: usize, skip: usize, out: &mut GramCounts) {
    fn extend(
        tokens: &[String],
        n: usize,
        budget: usize,
        idx: &mut Vec<usize>,
        out: &mut GramCounts,
    ) {
        if idx.len() == n {
            let mut key = String::new();
            for (k, &i) in idx.iter().enumerate() {
                if k > 0 {
                    key.push('|');
                }
                key.push_str(&tokens[i]);
            }
            *out.entry(key).or_insert(0) += 1;
            return;
        }
        let last = *idx.last().unwrap();
        for gap in 0..=budget {
            let j = last + 1 + gap;
            if j >= tokens.len() {
                break;
            }
            idx.push(j);
            extend(tokens, n, budget - gap, idx, out);
            idx.pop();
        }
    }

    if n == 0 || tokens.len() < n {
        return;
    }
    let mut idx = Vec::with_capacity(n);
    for start in 0..=tokens.len() - n {
        idx.push(start);
        extend(tokens, n, skip, &mut idx, out);
        idx.pop();
    }
}

/// Contiguous length-`n` substrings by Unicode scalar value.
pub fn char_ngrams(text: &str, n: usize) -> GramCounts {
    let mut out = GramCounts::new();
    add_char_ngrams(text, n, &mut out);
    out
}

fn add_char_ngrams(text: &str, n: usize, out: &mut GramCounts) {
    if n == 0 {
        return;
    }
    let chars: Vec<char> = text.chars().collect();
    for window in chars.windows(n) {
        *out.entry(window.iter().collect()).or_insert(0) += 1;
    }
}

fn turn_word_grams(tokens: &[String], cfg: &NgramConfig) -> GramCounts {
    let mut out = GramCounts::new();
    for &n in &cfg.word_orders {
        add_word_skipgrams(tokens, n, cfg.word_skip, &mut out);
    }
    out
}

fn turn_char_grams(text: &str, cfg: &NgramConfig) -> GramCounts {
    let mut out = GramCounts::new();
    for &n in &cfg.char_orders {
        add_char_ngrams(text, n, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub group: FeatureGroup,
    /// 1-based turn number.
    pub turn: u8,
    pub name: String,
}

/// Deterministic registry of feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    config: NgramConfig,
    columns: Vec<Column>,
    /// `[word, char][turn]` gram → column.
    sparse_index: [[HashMap<String, u32>; 3]; 2],
    dense_start: usize,
}

fn sparse_slot(group: FeatureGroup) -> usize {
    match group {
        FeatureGroup::WordNgram => 0,
        FeatureGroup::CharNgram => 1,
        _ => unreachable!("dense group has no gram index"),
    }
}

type DocFreq = [[HashMap<String, usize>; 3]; 2];

fn merge_df(mut a: DocFreq, b: DocFreq) -> DocFreq {
    for (sa, sb) in a.iter_mut().zip(b) {
        for (ta, tb) in sa.iter_mut().zip(sb) {
            for (gram, k) in tb {
                *ta.entry(gram).or_insert(0) += k;
            }
        }
    }
    a
}

/// Keep every `(group, turn)` gram that appears in at least `min_doc_freq`
/// conversations' corresponding turn.
pub fn build_feature_space(
    corpus: &[TokenizedConversation],
    cfg: &NgramConfig,
) -> Result<FeatureSpace, FeatureError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let df = corpus
        .par_iter()
        .fold(DocFreq::default, |mut acc, conv| {
            for t in 0..3 {
                for gram in turn_word_grams(&conv.tokens[t], cfg).into_keys() {
                    *acc[0][t].entry(gram).or_insert(0) += 1;
                }
                for gram in turn_char_grams(&conv.lower_turns[t], cfg).into_keys() {
                    *acc[1][t].entry(gram).or_insert(0) += 1;
                }
            }
            acc
        })
        .reduce(DocFreq::default, merge_df);

    let mut columns = Vec::new();
    for (slot, group) in [FeatureGroup::WordNgram, FeatureGroup::CharNgram].into_iter().enumerate() {
        for (t, counts) in df[slot].iter().enumerate() {
            let mut kept: Vec<&String> = counts
                .iter()
                .filter(|(_, &k)| k >= cfg.min_doc_freq)
                .map(|(g, _)| g)
                .collect();
            kept.sort();
            columns.extend(kept.into_iter().map(|g| Column {
                group,
                turn: t as u8 + 1,
                name: g.clone(),
            }));
        }
    }
    Ok(FeatureSpace::from_columns(cfg.clone(), columns))
}

impl FeatureSpace {
    /// `sparse_columns` must already be in canonical order; dense descriptors are appended.
    fn from_columns(config: NgramConfig, mut columns: Vec<Column>) -> Self {
        let mut sparse_index: [[HashMap<String, u32>; 3]; 2] = Default::default();
        for (i, c) in columns.iter().enumerate() {
            sparse_index[sparse_slot(c.group)][c.turn as usize - 1].insert(c.name.clone(), i as u32);
        }
        let dense_start = columns.len();
        columns.extend(dense_columns());
        Self {
            config,
            columns,
            sparse_index,
            dense_start,
        }
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn dimension(&self) -> usize {
        self.columns.len()
    }

    pub fn sparse_count(&self) -> usize {
        self.dense_start
    }

    pub fn dense_count(&self) -> usize {
        self.columns.len() - self.dense_start
    }

    pub fn group_size(&self, group: FeatureGroup) -> usize {
        self.columns.iter().filter(|c| c.group == group).count()
    }

    pub fn column_index(&self, group: FeatureGroup, turn: u8, name: &str) -> Option<usize> {
        if group.is_sparse() {
            self.sparse_index[sparse_slot(group)][turn as usize - 1]
                .get(name)
                .map(|&i| i as usize)
        } else {
            self.columns[self.dense_start..]
                .iter()
                .position(|c| c.group == group && c.turn == turn && c.name == name)
                .map(|p| p + self.dense_start)
        }
    }

    /// Write the versioned text format:
    ///
    /// ```text
    /// nelec-feature-space\t1
    /// word_orders\t1,2,3
    /// word_skip\t1
    /// char_orders\t2,3
    /// min_doc_freq\t5
    /// columns\t<N>
    /// <group>\t<turn>\t<escaped name>      (N rows)
    /// ```
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let join = |s: &BTreeSet<usize>| s.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "{SPACE_MAGIC}\t{SPACE_VERSION}")?;
        writeln!(w, "word_orders\t{}", join(&self.config.word_orders))?;
        writeln!(w, "word_skip\t{}", self.config.word_skip)?;
        writeln!(w, "char_orders\t{}", join(&self.config.char_orders))?;
        writeln!(w, "min_doc_freq\t{}", self.config.min_doc_freq)?;
        writeln!(w, "columns\t{}", self.columns.len())?;
        for c in &self.columns {
            writeln!(w, "{}\t{}\t{}", c.group, c.turn, escape(&c.name))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), FeatureError> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(FeatureError::Corrupt {
                    line_no: 0,
                    msg: format!("truncated before {what}"),
                }),
            }
        };
        let corrupt = |line_no: usize, msg: &str| FeatureError::Corrupt {
            line_no,
            msg: msg.to_string(),
        };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(SPACE_MAGIC)
            .and_then(|v| v.strip_prefix('\t'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| corrupt(ln, "bad header"))?;
        if version != SPACE_VERSION {
            return Err(FeatureError::UnsupportedVersion(version));
        }
        let mut field = |key: &str| -> Result<(usize, String), FeatureError> {
            let (ln, line) = next(key)?;
            match line.split_once('\t') {
                Some((k, v)) if k == key => Ok((ln, v.to_string())),
                _ => Err(corrupt(ln, &format!("expected {key}"))),
            }
        };
        let parse_set = |ln: usize, v: &str| -> Result<BTreeSet<usize>, FeatureError> {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|_| corrupt(ln, "bad order list")))
                .collect()
        };
        let parse_num = |ln: usize, v: &str| v.parse::<usize>().map_err(|_| corrupt(ln, "bad number"));
        let (ln, v) = field("word_orders")?;
        let word_orders = parse_set(ln, &v)?;
        let (ln, v) = field("word_skip")?;
        let word_skip = parse_num(ln, &v)?;
        let (ln, v) = field("char_orders")?;
        let char_orders = parse_set(ln, &v)?;
        let (ln, v) = field("min_doc_freq")?;
        let min_doc_freq = parse_num(ln, &v)?;
        let (ln, v) = field("columns")?;
        let total = parse_num(ln, &v)?;
        let config = NgramConfig {
            word_orders,
            word_skip,
            char_orders,
            min_doc_freq,
        };
        config.validate()?;

        let mut sparse = Vec::new();
        let mut dense = Vec::new();
        for _ in 0..total {
            let (ln, line) = next("column")?;
            let mut parts = line.splitn(3, '\t');
            let (Some(g), Some(t), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(corrupt(ln, "bad column row"));
            };
            let group: FeatureGroup = g.parse().map_err(|e: String| corrupt(ln, &e))?;
            let turn: u8 = t
                .parse()
                .ok()
                .filter(|t| (1..=3).contains(t))
                .ok_or_else(|| corrupt(ln, "bad turn"))?;
            let column = Column {
                group,
                turn,
                name: unescape(name).ok_or_else(|| corrupt(ln, "bad escape"))?,
            };
            if group.is_sparse() {
                if !dense.is_empty() {
                    return Err(corrupt(ln, "sparse column after dense block"));
                }
                if let Some(prev) = sparse.last() {
                    if column_key(prev) >= column_key(&column) {
                        return Err(corrupt(ln, "columns out of order"));
                    }
                }
                sparse.push(column);
            } else {
                dense.push(column);
            }
        }
        if let Some((i, _)) = next("end").ok().filter(|(_, l)| !l.is_empty()) {
            return Err(corrupt(i, "trailing data"));
        }
        if dense != dense_columns() {
            return Err(corrupt(0, "dense block does not match this version's layout"));
        }
        Ok(Self::from_columns(config, sparse))
    }
}

fn column_key(c: &Column) -> (FeatureGroup, u8, &[u8]) {
    (c.group, c.turn, c.name.as_bytes())
}

fn dense_columns() -> Vec<Column> {
    let mut out = Vec::with_capacity(DENSE_LEN);
    for group in [FeatureGroup::Vad, FeatureGroup::EmoLex, FeatureGroup::Neural, FeatureGroup::Counts] {
        for turn in 1..=3u8 {
            for name in group.dense_names() {
                out.push(Column {
                    group,
                    turn,
                    name: name.to_string(),
                });
            }
        }
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(match chars.next()? {
                '\\' => '\\',
                't' => '\t',
                'n' => '\n',
                'r' => '\r',
                _ => return None,
            });
        } else {
            out.push(c);
        }
    }
    Some(out)
}

/// Per turn: mean V, mean A, mean D, max D, and the arousal of the max-D word.
/// The first token reaching the max dominance wins ties.
pub fn vad_features(conv: &TokenizedConversation, vad: &VadLexicon) -> [f64; VAD_PER_TURN * 3] {
    let mut out = [VAD_NEUTRAL; VAD_PER_TURN * 3];
    for (t, tokens) in conv.tokens.iter().enumerate() {
        let hits: Vec<_> = tokens.iter().filter_map(|tok| vad.get(tok)).collect();
        if hits.is_empty() {
            continue;
        }
        let n = hits.len() as f64;
        let mut top = hits[0];
        for h in &hits[1..] {
            if h.dominance > top.dominance {
                top = *h;
            }
        }
        let base = t * VAD_PER_TURN;
        out[base] = hits.iter().map(|h| h.valence).sum::<f64>() / n;
        out[base + 1] = hits.iter().map(|h| h.arousal).sum::<f64>() / n;
        out[base + 2] = hits.iter().map(|h| h.dominance).sum::<f64>() / n;
        out[base + 3] = top.dominance;
        out[base + 4] = top.arousal;
    }
    out
}

/// Per turn, token occurrences per category (with multiplicity).
pub fn emolex_features(conv: &TokenizedConversation, emo: &EmoLexicon) -> [f64; EMOLEX_PER_TURN * 3] {
    let mut out = [0.0; EMOLEX_PER_TURN * 3];
    for (t, tokens) in conv.tokens.iter().enumerate() {
        for set in tokens.iter().filter_map(|tok| emo.get(tok)) {
            for c in set.iter() {
                out[t * EMOLEX_PER_TURN + c as usize] += 1.0;
            }
        }
    }
    out
}

fn has_run(s: &str, min_len: usize) -> bool {
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run >= min_len {
            return true;
        }
    }
    false
}

fn punct_runs(s: &str) -> usize {
    let mut runs = 0;
    let mut len = 0;
    for c in s.chars().chain(std::iter::once(' ')) {
        if matches!(c, '?' | '!' | '.') {
            len += 1;
        } else {
            if len >= 2 {
                runs += 1;
            }
            len = 0;
        }
    }
    runs
}

/// Counts over one raw (not lowercased) turn, in column order.
pub fn turn_counts(raw: &str, tokenizer: &Tokenizer) -> [f64; COUNTS_PER_TURN] {
    let tokens = tokenizer.tokenize(raw);
    let chars = || raw.chars();
    let all_caps = |t: &&String| {
        let letters: Vec<char> = t.chars().filter(|c| c.is_alphabetic()).collect();
        letters.len() >= 2 && !letters.iter().any(|c| c.is_lowercase())
    };
    [
        chars().filter(|&c| c == '?').count() as f64,
        chars().filter(|&c| c == '!').count() as f64,
        chars().filter(|c| c.is_uppercase()).count() as f64,
        tokens
            .iter()
            .filter(|t| t.chars().any(char::is_alphanumeric) && !tokenizer.is_emoji_token(t))
            .count() as f64,
        chars().filter(|c| c.is_alphabetic()).count() as f64,
        tokens.iter().filter(|t| tokenizer.is_emoji_token(t)).count() as f64,
        tokens.iter().filter(all_caps).count() as f64,
        tokens.iter().filter(|t| has_run(t, 3)).count() as f64,
        punct_runs(raw) as f64,
    ]
}

/// The 27 count columns for the three raw turns, turn-major.
pub fn count_features(raw_turns: &[String; 3], tokenizer: &Tokenizer) -> [f64; COUNTS_PER_TURN * 3] {
    let mut out = [0.0; COUNTS_PER_TURN * 3];
    for (t, turn) in raw_turns.iter().enumerate() {
        out[t * COUNTS_PER_TURN..(t + 1) * COUNTS_PER_TURN].copy_from_slice(&turn_counts(turn, tokenizer));
    }
    out
}

/// Everything needed to turn a preprocessed conversation into a row.
#[derive(Debug, Clone, Copy)]
pub struct Vectorizer<'a> {
    pub space: &'a FeatureSpace,
    pub vad: &'a VadLexicon,
    pub emo: &'a EmoLexicon,
    pub tokenizer: &'a Tokenizer,
}

impl Vectorizer<'_> {
    /// Sparse gram columns hold raw term frequencies; the dense blocks follow.
    pub fn vectorize(
        &self,
        conv: &TokenizedConversation,
        neural_scores: &[f64],
    ) -> Result<FeatureVector, FeatureError> {
        if neural_scores.len() != NEURAL_LEN {
            return Err(FeatureError::DimensionMismatch {
                expected: NEURAL_LEN,
                found: neural_scores.len(),
            });
        }
        if let Some(i) = neural_scores.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(i));
        }
        let cfg = self.space.config();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for t in 0..3 {
            let word = turn_word_grams(&conv.tokens[t], cfg);
            let index = &self.space.sparse_index[0][t];
            entries.extend(word.iter().filter_map(|(g, &k)| index.get(g).map(|&i| (i, k as f64))));
            let chars = turn_char_grams(&conv.lower_turns[t], cfg);
            let index = &self.space.sparse_index[1][t];
            entries.extend(chars.iter().filter_map(|(g, &k)| index.get(g).map(|&i| (i, k as f64))));
        }
        entries.sort_unstable_by_key(|&(i, _)| i);

        let mut dense = Vec::with_capacity(DENSE_LEN);
        dense.extend_from_slice(&vad_features(conv, self.vad));
        dense.extend_from_slice(&emolex_features(conv, self.emo));
        dense.extend_from_slice(neural_scores);
        dense.extend_from_slice(&count_features(&conv.raw_turns, self.tokenizer));
        let start = self.space.dense_start as u32;
        entries.extend(
            dense
                .into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .map(|(i, v)| (start + i as u32, v)),
        );
        Ok(FeatureVector::new(self.space.dimension(), entries).expect("vectorizer emits sorted in-range columns"))
    }
}

/// Vectorize with the bundled tokenizer.
pub fn vectorize(
    conv: &TokenizedConversation,
    space: &FeatureSpace,
    vad: &VadLexicon,
    emo: &EmoLexicon,
    neural_scores: &[f64],
) -> Result<FeatureVector, FeatureError> {
    let tokenizer = Tokenizer::default();
    Vectorizer {
        space,
        vad,
        emo,
        tokenizer: &tokenizer,
    }
    .vectorize(conv, neural_scores)
}

/// Distinct gram set of one `(group, turn)` slot, for tests and diagnostics.
pub fn distinct_grams(conv: &TokenizedConversation, group: FeatureGroup, turn: u8, cfg: &NgramConfig) -> HashSet<String> {
    let t = turn as usize - 1;
    match group {
        FeatureGroup::WordNgram => turn_word_grams(&conv.tokens[t], cfg).into_keys().collect(),
        FeatureGroup::CharNgram => turn_char_grams(&conv.lower_turns[t], cfg).into_keys().collect(),
        _ => HashSet::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Conversation;
    use crate::lexicons::{load_emolex, load_vad};
    use crate::preprocess::Preprocessor;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|t| t.to_string()).collect()
    }

    fn counts(v: &[(&str, u32)]) -> GramCounts {
        v.iter().map(|(g, k)| (g.to_string(), *k)).collect()
    }

    fn tc(turns: [&str; 3]) -> TokenizedConversation {
        Preprocessor::default().process(&Conversation::new("c", turns, None))
    }

    /// Enumerates every increasing index tuple and keeps those within the skip budget.
    fn skipgram_oracle(tokens: &[String], n: usize, skip: usize) -> GramCounts {
        let mut out = GramCounts::new();
        let len = tokens.len();
        if n == 0 || len < n {
            return out;
        }
        let total = 1usize << len;
        for mask in 0..total {
            if mask.count_ones() as usize != n {
                continue;
            }
            let idx: Vec<usize> = (0..len).filter(|i| mask & (1 << i) != 0).collect();
            let span = idx[n - 1] - idx[0] + 1;
            if span - n <= skip {
                let key = idx.iter().map(|&i| tokens[i].as_str()).collect::<Vec<_>>().join("|");
                *out.entry(key).or_insert(0) += 1;
            }
        }
        out
    }

    #[test]
    fn skipgram_examples() {
        let t = s(&["am", "very", "happy"]);
        assert_eq!(
            word_skipgrams(&t, 2, 1),
            counts(&[("am|very", 1), ("very|happy", 1), ("am|happy", 1)])
        );
        assert_eq!(word_skipgrams(&t, 3, 1), counts(&[("am|very|happy", 1)]));
        assert!(word_skipgrams(&t, 4, 1).is_empty());
        assert_eq!(word_skipgrams(&t, 1, 1), counts(&[("am", 1), ("very", 1), ("happy", 1)]));
    }

    #[test]
    fn char_ngram_examples() {
        assert_eq!(char_ngrams("haha", 3), counts(&[("hah", 1), ("aha", 1)]));
        assert_eq!(char_ngrams("wow", 2), counts(&[("wo", 1), ("ow", 1)]));
        assert!(char_ngrams("", 2).is_empty());
        assert_eq!(char_ngrams("hahaha", 2), counts(&[("ha", 3), ("ah", 2)]));
        assert_eq!(char_ngrams("😂😂", 2), counts(&[("😂😂", 1)]));
    }

    #[test]
    fn vad_examples() {
        let lex = load_vad("love\t0.9\t0.7\t0.6\nhate\t0.1\t0.8\t0.4\n".as_bytes()).unwrap();
        let f = vad_features(&tc(["nothing here", "love", "love hate"]), &lex);
        assert_eq!(&f[0..5], &[0.5; 5]);
        assert_eq!(&f[5..10], &[0.9, 0.7, 0.6, 0.6, 0.7]);
        let expected = [0.5, 0.75, 0.5, 0.6, 0.7];
        for (a, b) in f[10..15].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn emolex_examples() {
        let lex = load_emolex("abandon\tsadness\t1\nabandon\tnegative\t1\nabandon\tjoy\t0\n".as_bytes()).unwrap();
        let f = emolex_features(&tc(["", "abandon abandon", "x"]), &lex);
        assert_eq!(&f[0..10], &[0.0; 10]);
        let mut expected = [0.0; 10];
        expected[EmoCategory::Sadness as usize] = 2.0;
        expected[EmoCategory::Negative as usize] = 2.0;
        assert_eq!(&f[10..20], &expected);
    }

    #[test]
    fn count_examples() {
        let tok = Tokenizer::default();
        assert_eq!(turn_counts("WHY???", &tok), [3.0, 0.0, 3.0, 1.0, 3.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(turn_counts("", &tok), [0.0; 9]);
        assert_eq!(
            turn_counts("Sooo happy :D 😂 OK!?.", &tok),
            [1.0, 1.0, 4.0, 3.0, 12.0, 2.0, 1.0, 1.0, 1.0]
        );
    }

    fn fixture_corpus() -> Vec<TokenizedConversation> {
        vec![
            tc(["i am so happy", "why", "haha :)"]),
            tc(["i am very happy", "why not", "haha"]),
            tc(["so sad", "why", "hahaha"]),
        ]
    }

    #[test]
    fn space_counts_and_threshold() {
        let corpus = fixture_corpus();
        let cfg = NgramConfig {
            min_doc_freq: 1,
            ..Default::default()
        };
        let space = build_feature_space(&corpus, &cfg).unwrap();
        for group in [FeatureGroup::WordNgram, FeatureGroup::CharNgram] {
            for turn in 1..=3 {
                let mut all = HashSet::new();
                for c in &corpus {
                    all.extend(distinct_grams(c, group, turn, &cfg));
                }
                let n = space.columns().iter().filter(|c| c.group == group && c.turn == turn).count();
                assert_eq!(n, all.len(), "{group} turn {turn}");
            }
        }
        assert_eq!(space.dense_count(), 81);
        let total: usize = FeatureGroup::ALL.iter().map(|g| space.group_size(*g)).sum();
        assert_eq!(total, space.dimension());

        let none = build_feature_space(
            &corpus,
            &NgramConfig {
                min_doc_freq: corpus.len() + 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(none.sparse_count(), 0);
        assert_eq!(none.dimension(), 81);
    }

    #[test]
    fn space_column_order() {
        let space = build_feature_space(&fixture_corpus(), &NgramConfig { min_doc_freq: 1, ..Default::default() }).unwrap();
        for pair in space.columns().windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(column_key(a) < column_key(b), "{a:?} !< {b:?}");
        }
        assert_eq!(space.column_index(FeatureGroup::Vad, 3, "4_arousal_of_max_dominance"), Some(space.sparse_count() + 14));
    }

    #[test]
    fn space_errors() {
        assert!(matches!(build_feature_space(&[], &NgramConfig::default()), Err(FeatureError::EmptyCorpus)));
        let bad = NgramConfig { min_doc_freq: 0, ..Default::default() };
        assert!(matches!(build_feature_space(&fixture_corpus(), &bad), Err(FeatureError::InvalidConfig(_))));
    }

    #[test]
    fn space_save_load_roundtrip() {
        let mut corpus = fixture_corpus();
        corpus.push(tc(["tab\\here", "line", "x"]));
        let space = build_feature_space(&corpus, &NgramConfig { min_doc_freq: 1, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        space.save(&mut buf).unwrap();
        let loaded = FeatureSpace::load(buf.as_slice()).unwrap();
        assert_eq!(loaded, space);
        let mut again = Vec::new();
        loaded.save(&mut again).unwrap();
        assert_eq!(again, buf);

        let text = String::from_utf8(buf.clone()).unwrap();
        let bumped = text.replacen("nelec-feature-space\t1", "nelec-feature-space\t2", 1);
        assert!(matches!(FeatureSpace::load(bumped.as_bytes()), Err(FeatureError::UnsupportedVersion(2))));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(FeatureSpace::load(truncated.as_bytes()), Err(FeatureError::Corrupt { .. })));
    }

    #[test]
    fn vectorize_defaults_only() {
        let corpus = fixture_corpus();
        let space = build_feature_space(&corpus, &NgramConfig::default()).unwrap();
        let conv = tc(["", "", ""]);
        let v = vectorize(&conv, &space, &VadLexicon::default(), &EmoLexicon::default(), &[0.0; 9]).unwrap();
        assert_eq!(v.dim(), space.dimension());
        assert_eq!(v.nnz(), 15);
        assert!(v.entries().iter().all(|&(_, x)| x == VAD_NEUTRAL));
        assert!(matches!(
            vectorize(&conv, &space, &VadLexicon::default(), &EmoLexicon::default(), &[0.0; 8]),
            Err(FeatureError::DimensionMismatch { expected: 9, found: 8 })
        ));
    }

    #[test]
    fn vectorize_term_frequency() {
        let corpus = fixture_corpus();
        let space = build_feature_space(&corpus, &NgramConfig { min_doc_freq: 1, ..Default::default() }).unwrap();
        let conv = tc(["why why", "why why", ""]);
        let v = vectorize(&conv, &space, &VadLexicon::default(), &EmoLexicon::default(), &[0.0; 9]).unwrap();
        let col = space.column_index(FeatureGroup::CharNgram, 2, "wh").unwrap();
        assert_eq!(v.get(col), 2.0);
        let col = space.column_index(FeatureGroup::WordNgram, 2, "why").unwrap();
        assert_eq!(v.get(col), 2.0);
        // "why" is only in turn-2 vocabulary, so the turn-1 word column does not exist.
        assert_eq!(space.column_index(FeatureGroup::WordNgram, 1, "why"), None);
    }

    proptest! {
        #[test]
        fn skipgrams_match_oracle(
            tokens in proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e"]), 0..=8),
            n in 1usize..=3,
            skip in 0usize..=1,
        ) {
            let tokens: Vec<String> = tokens.into_iter().map(String::from).collect();
            prop_assert_eq!(word_skipgrams(&tokens, n, skip), skipgram_oracle(&tokens, n, skip));
        }

        #[test]
        fn skip_zero_is_contiguous(tokens in proptest::collection::vec("[a-c]", 0..8), n in 1usize..4) {
            let mut expected = GramCounts::new();
            for w in tokens.windows(n) {
                *expected.entry(w.join("|")).or_insert(0) += 1;
            }
            prop_assert_eq!(word_skipgrams(&tokens, n, 0), expected);
        }
    }
}
