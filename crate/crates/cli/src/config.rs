use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use traco::corpus::VocabOptions;
use traco::evalmetrics::DEFAULT_TOP_N;
use traco::trainer::TrainConfig;

use crate::error::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "traco_out";
pub const ECHO_FILE: &str = "config.toml";

/// Everything a run needs, in one TOML document. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// raw input for `preprocess` (JSON lines or one document per line)
    pub raw: Option<PathBuf>,
    /// stopword list replacing the built-in English one
    pub stopwords: Option<PathBuf>,
    /// preprocessed corpus directory; defaults to `<output_dir>/corpus`
    pub prepared: Option<PathBuf>,
    pub min_doc_freq: usize,
    pub max_doc_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub top_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let opts = VocabOptions::default();
        Self {
            raw: None,
            stopwords: None,
            prepared: None,
            min_doc_freq: opts.min_doc_freq,
            max_doc_frac: opts.max_doc_frac,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { top_n: DEFAULT_TOP_N }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.eval.top_n == 0 {
            return Err(CliError::Config("eval.top_n must be positive".into()));
        }
        Ok(())
    }

    pub fn vocab_options(&self) -> VocabOptions {
        VocabOptions {
            min_doc_freq: self.corpus.min_doc_freq,
            max_doc_frac: self.corpus.max_doc_frac,
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.corpus
            .prepared
            .clone()
            .unwrap_or_else(|| self.output_dir.join("corpus"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("model.ckpt")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable in TOML")
    }

    /// Writes the resolved configuration to `<output_dir>/config.toml`.
    pub fn echo(&self) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.output_dir).map_err(|e| CliError::Input(e.to_string()))?;
        let path = self.output_dir.join(ECHO_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| CliError::Input(e.to_string()))?;
        Ok(path)
    }
}
