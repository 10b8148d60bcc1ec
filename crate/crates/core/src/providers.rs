//! Sources for the nine per-turn "neural" score columns.
//!
//! Each turn gets three scores in `[0, 1]`: sentiment (1 = positive), adult and
//! offensive. Providers either replay a precomputed score file, query an HTTP
//! scoring service (with an on-disk cache), or compute a deterministic
//! word-list stub.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Conversation;
use crate::features::NEURAL_LEN;
use crate::preprocess::Tokenizer;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("score file line {line_no}: malformed row")]
    MalformedRow { line_no: usize },
    #[error("score file: duplicate entry for conversation {id:?} turn {turn}")]
    DuplicateScore { id: String, turn: u8 },
    #[error("no score for conversation {id:?} turn {turn}")]
    MissingScore { id: String, turn: u8 },
    #[error("conversation {id:?} turn {turn}: request timed out")]
    Timeout { id: String, turn: u8 },
    #[error("conversation {id:?} turn {turn}: endpoint answered HTTP {code}")]
    BadStatus { id: String, turn: u8, code: u16 },
    #[error("conversation {id:?} turn {turn}: malformed response ({detail})")]
    MalformedResponse { id: String, turn: u8, detail: String },
    #[error("conversation {id:?} turn {turn}: transport failure ({detail})")]
    Transport { id: String, turn: u8, detail: String },
    #[error("score cache: {0}")]
    Cache(String),
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for ProviderError {
    fn from(e: std::io::Error) -> Self {
        ProviderError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnScores {
    pub sentiment: f64,
    pub adult: f64,
    pub offensive: f64,
}

impl TurnScores {
    pub fn new(sentiment: f64, adult: f64, offensive: f64) -> Option<Self> {
        let s = Self {
            sentiment,
            adult,
            offensive,
        };
        s.is_valid().then_some(s)
    }

    pub fn is_valid(&self) -> bool {
        [self.sentiment, self.adult, self.offensive]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sentiment, self.adult, self.offensive]
    }
}

/// Scores one turn of one conversation. Implementations must be deterministic
/// within a run and must surface failures instead of substituting defaults.
pub trait ScoreProvider: Send + Sync {
    /// `turn` is 1-based.
    fn score(&self, conversation_id: &str, turn: u8, text: &str) -> Result<TurnScores, ProviderError>;
}

/// The nine neural columns of a conversation, turn-major.
pub fn conversation_scores(
    provider: &dyn ScoreProvider,
    conv: &Conversation,
) -> Result<[f64; NEURAL_LEN], ProviderError> {
    let mut out = [0.0; NEURAL_LEN];
    for (t, text) in conv.turns.iter().enumerate() {
        let scores = provider.score(&conv.id, t as u8 + 1, text)?;
        out[t * 3..t * 3 + 3].copy_from_slice(&scores.as_array());
    }
    Ok(out)
}

/// Returns the same scores for every turn.
#[derive(Debug, Clone, Copy)]
pub struct ConstantProvider(pub TurnScores);

impl ConstantProvider {
    pub fn zeros() -> Self {
        ConstantProvider(TurnScores {
            sentiment: 0.0,
            adult: 0.0,
            offensive: 0.0,
        })
    }
}

impl ScoreProvider for ConstantProvider {
    fn score(&self, _: &str, _: u8, _: &str) -> Result<TurnScores, ProviderError> {
        Ok(self.0)
    }
}

/// Replays `conversation_id\tturn_index\tsentiment\tadult\toffensive` rows.
#[derive(Debug, Clone, Default)]
pub struct FileProvider {
    scores: HashMap<(String, u8), TurnScores>,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let file = fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, ProviderError> {
        let mut provider = Self::default();
        provider.extend_from_reader(reader)?;
        Ok(provider)
    }

    /// Merge more rows in; a key present twice is an error.
    pub fn extend_from_reader<R: BufRead>(&mut self, reader: R) -> Result<(), ProviderError> {
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            if i == 0 && matches!(cells[0], "id" | "conversation_id") {
                continue;
            }
            let malformed = || ProviderError::MalformedRow { line_no };
            if cells.len() != 5 {
                return Err(malformed());
            }
            let turn: u8 = cells[1]
                .parse()
                .ok()
                .filter(|t| (1..=3).contains(t))
                .ok_or_else(malformed)?;
            let mut values = [0.0; 3];
            for (v, cell) in values.iter_mut().zip(&cells[2..]) {
                *v = cell.trim().parse().map_err(|_| malformed())?;
            }
            let scores = TurnScores::new(values[0], values[1], values[2]).ok_or_else(malformed)?;
            let key = (cells[0].to_string(), turn);
            if self.scores.contains_key(&key) {
                return Err(ProviderError::DuplicateScore { id: key.0, turn });
            }
            self.scores.insert(key, scores);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl ScoreProvider for FileProvider {
    fn score(&self, conversation_id: &str, turn: u8, _: &str) -> Result<TurnScores, ProviderError> {
        self.scores
            .get(&(conversation_id.to_string(), turn))
            .copied()
            .ok_or_else(|| ProviderError::MissingScore {
                id: conversation_id.to_string(),
                turn,
            })
    }
}

/// Score every turn with `provider` and write the replayable score file.
pub fn export_scores<W: Write>(
    mut writer: W,
    provider: &dyn ScoreProvider,
    convs: &[Conversation],
) -> Result<(), ProviderError> {
    writeln!(writer, "conversation_id\tturn_index\tsentiment\tadult\toffensive")?;
    for conv in convs {
        for (t, text) in conv.turns.iter().enumerate() {
            let turn = t as u8 + 1;
            let s = provider.score(&conv.id, turn, text)?;
            writeln!(
                writer,
                "{}\t{}\t{}\t{}\t{}",
                conv.id, turn, s.sentiment, s.adult, s.offensive
            )?;
        }
    }
    Ok(())
}

/// Deterministic word-list scorer, used as a test double and as an offline fallback.
///
/// sentiment = (1 + (pos − neg) / max(1, pos + neg)) / 2,
/// offensive = min(1, offensive hits / 3), adult = 0.
#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    positive: HashSet<String>,
    negative: HashSet<String>,
    offensive: HashSet<String>,
    tokenizer: Tokenizer,
}

impl StubProvider {
    pub fn new(positive: HashSet<String>, negative: HashSet<String>, offensive: HashSet<String>) -> Self {
        Self {
            positive,
            negative,
            offensive,
            tokenizer: Tokenizer::default(),
        }
    }

    pub fn score_text(&self, text: &str) -> TurnScores {
        let (mut pos, mut neg, mut off) = (0usize, 0usize, 0usize);
        for token in self.tokenizer.tokenize(text) {
            let token = token.to_lowercase();
            pos += self.positive.contains(&token) as usize;
            neg += self.negative.contains(&token) as usize;
            off += self.offensive.contains(&token) as usize;
        }
        let balance = (pos as f64 - neg as f64) / (pos + neg).max(1) as f64;
        TurnScores {
            sentiment: (1.0 + balance) / 2.0,
            adult: 0.0,
            offensive: (off as f64 / 3.0).min(1.0),
        }
    }
}

impl ScoreProvider for StubProvider {
    fn score(&self, _: &str, _: u8, text: &str) -> Result<TurnScores, ProviderError> {
        Ok(self.score_text(text))
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    sentiment: f64,
    adult: f64,
    offensive: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    text: String,
    sentiment: f64,
    adult: f64,
    offensive: f64,
}

type Inflight = Arc<OnceLock<Result<TurnScores, ProviderError>>>;

/// Queries a JSON scoring endpoint: `POST {"text": …}` →
/// `{"sentiment": x, "adult": y, "offensive": z}`.
///
/// Responses are cached under `cache_dir/<hh>/<sha256>.json`, where `<hh>`
/// is the first two hex digits of the SHA-256 of the UTF-8 text. A cache
/// hit never touches the network. Concurrent requests for the same text
/// share one network call.
pub struct HttpProvider {
    endpoint: String,
    agent: ureq::Agent,
    cache_dir: PathBuf,
    max_retries: usize,
    backoff: Duration,
    inflight: Mutex<HashMap<String, Inflight>>,
    cache_write: Mutex<()>,
    network_calls: AtomicUsize,
}

enum Attempt {
    Done(TurnScores),
    Transient(ProviderError),
    Fatal(ProviderError),
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, cache_dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let cache_dir = cache_dir.into();
        fs::create_dir_all(&cache_dir).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: endpoint.into(),
            agent,
            cache_dir,
            max_retries: 2,
            backoff: Duration::from_millis(200),
            inflight: Mutex::new(HashMap::new()),
            cache_write: Mutex::new(()),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// Base delay before the first retry; doubles on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Number of HTTP requests actually sent (cache hits excluded).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(text: &str) -> String {
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn cache_path(&self, key: &str) -> PathBuf {
        self.cache_dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read_cache(&self, key: &str, text: &str) -> Result<Option<TurnScores>, ProviderError> {
        let path = self.cache_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ProviderError::Cache(e.to_string())),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| ProviderError::Cache(format!("{}: {e}", path.display())))?;
        if entry.text != text {
            return Err(ProviderError::Cache(format!("{}: hash collision", path.display())));
        }
        TurnScores::new(entry.sentiment, entry.adult, entry.offensive)
            .map(Some)
            .ok_or_else(|| ProviderError::Cache(format!("{}: scores outside [0, 1]", path.display())))
    }

    fn write_cache(&self, key: &str, text: &str, s: TurnScores) -> Result<(), ProviderError> {
        let _guard = self.cache_write.lock().unwrap();
        let path = self.cache_path(key);
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let entry = CacheEntry {
            text: text.to_string(),
            sentiment: s.sentiment,
            adult: s.adult,
            offensive: s.offensive,
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&entry).expect("cache entry serializes"))
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| ProviderError::Cache(e.to_string()))
    }

    fn attempt(&self, id: &str, turn: u8, text: &str) -> Attempt {
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let malformed = |detail: String| ProviderError::MalformedResponse {
            id: id.to_string(),
            turn,
            detail,
        };
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(ScoreRequest { text });
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Transient(ProviderError::Timeout {
                    id: id.to_string(),
                    turn,
                })
            }
            Err(e) => {
                return Attempt::Transient(ProviderError::Transport {
                    id: id.to_string(),
                    turn,
                    detail: e.to_string(),
                })
            }
        };
        let code = response.status().as_u16();
        if code != 200 {
            let err = ProviderError::BadStatus {
                id: id.to_string(),
                turn,
                code,
            };
            return if code >= 500 || code == 429 {
                Attempt::Transient(err)
            } else {
                Attempt::Fatal(err)
            };
        }
        let body: ScoreResponse = match response.body_mut().read_json() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Transient(ProviderError::Timeout {
                    id: id.to_string(),
                    turn,
                })
            }
            Err(e) => return Attempt::Fatal(malformed(e.to_string())),
        };
        match TurnScores::new(body.sentiment, body.adult, body.offensive) {
            Some(s) => Attempt::Done(s),
            None => Attempt::Fatal(malformed("scores outside [0, 1]".into())),
        }
    }

    fn fetch(&self, id: &str, turn: u8, text: &str) -> Result<TurnScores, ProviderError> {
        let mut delay = self.backoff;
        let mut retries = 0;
        loop {
            match self.attempt(id, turn, text) {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(e) if retries >= self.max_retries => return Err(e),
                Attempt::Transient(_) => {
                    retries += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
}

impl ScoreProvider for HttpProvider {
    fn score(&self, conversation_id: &str, turn: u8, text: &str) -> Result<TurnScores, ProviderError> {
        let key = Self::cache_key(text);
        let cell = {
            let mut inflight = self.inflight.lock().unwrap();
            inflight.entry(key.clone()).or_default().clone()
        };
        let result = cell
            .get_or_init(|| {
                if let Some(hit) = self.read_cache(&key, text)? {
                    return Ok(hit);
                }
                let scores = self.fetch(conversation_id, turn, text)?;
                self.write_cache(&key, text, scores)?;
                Ok(scores)
            })
            .clone();
        if result.is_err() {
            // Let a later call retry instead of replaying the failure.
            let mut inflight = self.inflight.lock().unwrap();
            if inflight.get(&key).is_some_and(|c| Arc::ptr_eq(c, &cell)) {
                inflight.remove(&key);
            }
        }
        result
    }
}
