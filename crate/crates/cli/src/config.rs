//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use nelec_core::features::NgramConfig;
use nelec_core::model::{GbdtParams, LogRegParams, ModelSpec};
use nelec_core::preprocess::PreprocessConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Gbdt,
    Logreg,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Precomputed `conversation_id turn_index sentiment adult offensive` files.
    File,
    /// Word-list scores derived from the EmoLex lexicon.
    Stub,
    /// All scores zero (disables the neural columns' signal).
    #[default]
    Zeros,
    /// JSON scoring endpoint with an on-disk cache.
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Training files, concatenated in order.
    pub train: Vec<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePaths {
    pub vad: Option<PathBuf>,
    pub emolex: Option<PathBuf>,
    pub slang: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub emoticons: Option<PathBuf>,
    /// Vocabulary for the OOV statistic.
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub source: ScoreKind,
    pub files: Vec<PathBuf>,
    pub endpoint: Option<String>,
    /// Defaults to `score-cache` inside the output directory.
    pub cache_dir: Option<PathBuf>,
    pub timeout_secs: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            source: ScoreKind::Zeros,
            files: Vec::new(),
            endpoint: None,
            cache_dir: None,
            timeout_secs: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub data: DataPaths,
    pub resources: ResourcePaths,
    pub scores: ScoreConfig,
    pub preprocess: PreprocessConfig,
    pub features: NgramConfig,
    pub gbdt: GbdtParams,
    pub logreg: LogRegParams,
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parse a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let base = std::path::absolute(&base).map_err(|e| CliError::internal(e.to_string()))?;
        cfg.for_each_path(|p| absolutize(&base, p));
        Ok(cfg)
    }

    pub fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        self.data.train.iter_mut().for_each(&mut f);
        let r = &mut self.resources;
        for p in [&mut self.data.dev, &mut self.data.test, &mut r.vad, &mut r.emolex, &mut r.slang]
            .into_iter()
            .chain([&mut r.stopwords, &mut r.emoticons, &mut r.vocab, &mut self.scores.cache_dir])
            .flatten()
        {
            f(p);
        }
        self.scores.files.iter_mut().for_each(&mut f);
    }

    /// The learner with the run seed applied.
    pub fn model_spec(&self) -> ModelSpec {
        match self.model {
            ModelKind::Gbdt => ModelSpec::Gbdt(GbdtParams {
                seed: self.seed,
                ..self.gbdt.clone()
            }),
            ModelKind::Logreg => ModelSpec::Logreg(LogRegParams {
                seed: self.seed,
                ..self.logreg.clone()
            }),
        }
    }

    /// Keep the persisted parameter sections consistent with the run seed.
    pub fn sync_seed(&mut self) {
        self.gbdt.seed = self.seed;
        self.logreg.seed = self.seed;
    }

    /// Parameter checks and existence of every referenced input path.
    pub fn validate(&self) -> Result<(), CliError> {
        self.features.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.gbdt.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.logreg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        let mut missing = Vec::new();
        let mut probe = self.clone();
        probe.scores.cache_dir = None;
        probe.for_each_path(|p| {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        });
        if let Some(m) = missing.first() {
            return Err(CliError::usage(format!("path does not exist: {m}")));
        }
        match self.scores.source {
            ScoreKind::File if self.scores.files.is_empty() => {
                Err(CliError::usage("scores.source = \"file\" needs at least one score file"))
            }
            ScoreKind::Http if self.scores.endpoint.is_none() => {
                Err(CliError::usage("scores.source = \"http\" needs scores.endpoint"))
            }
            ScoreKind::Stub if self.resources.emolex.is_none() => {
                Err(CliError::usage("scores.source = \"stub\" needs resources.emolex"))
            }
            _ if !(self.scores.timeout_secs > 0.0 && self.scores.timeout_secs.is_finite()) => {
                Err(CliError::usage("scores.timeout_secs must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[gbdt]\nround = 3\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[data]\ntrain = [\"a.tsv\"]\n[resources]\nvad = \"/abs/vad.tsv\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.data.train, vec![dir.path().join("a.tsv")]);
        assert_eq!(cfg.resources.vad, Some(PathBuf::from("/abs/vad.tsv")));
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = RunConfig {
            resources: ResourcePaths {
                vad: Some("/definitely/not/here.tsv".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().message.contains("does not exist"));
    }

    #[test]
    fn seed_reaches_the_model() {
        let cfg = RunConfig {
            seed: 17,
            model: ModelKind::Logreg,
            ..Default::default()
        };
        assert_eq!(cfg.model_spec().seed(), 17);
    }
}
