//! Binary checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "TRACOCKP"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H in bytes, u64 little-endian
//! 20      H     UTF-8 JSON header (config, vocabulary, loss history, array table)
//! 20+H    ...   f64 little-endian arrays, row-major, in array-table order
//! ```
//!
//! The array table lists every model parameter by name followed by the
//! dependency matrices `plan.0 .. plan.{L-2}`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::TracoModel;
use crate::numerics::{Matrix, ParamStore};
use crate::tpd::DependencyMatrix;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TRACOCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab_size: usize,
    /// empty when the model was trained without word strings
    pub vocabulary: Vec<String>,
    pub params: ParamStore,
    /// final children × parents plan under each level
    pub plans: Vec<DependencyMatrix>,
    /// mean objective per epoch
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    vocab_size: usize,
    vocabulary: Vec<String>,
    vocabulary_hash: Option<String>,
    loss_history: Vec<f64>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn model(&self) -> Result<TracoModel> {
        TracoModel::from_params(self.config.hierarchy.clone(), self.vocab_size, self.params.clone())
    }

    /// Attaches word strings; their count must equal the trained vocabulary size.
    pub fn with_vocabulary(mut self, vocab: &Vocabulary) -> Result<Self> {
        if vocab.len() != self.vocab_size {
            return Err(Error::VocabMismatch(format!(
                "vocabulary has {} words, model was trained on {}",
                vocab.len(),
                self.vocab_size
            )));
        }
        self.vocabulary = vocab.words().to_vec();
        Ok(self)
    }

    pub fn vocabulary(&self) -> Result<Option<Vocabulary>> {
        if self.vocabulary.is_empty() {
            return Ok(None);
        }
        Vocabulary::from_words(self.vocabulary.clone()).map(Some)
    }

    pub fn vocabulary_hash(&self) -> Option<String> {
        self.vocabulary().ok().flatten().map(|v| v.content_hash())
    }

    /// Errors with [`Error::VocabMismatch`] unless `vocab` is the training vocabulary.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let same = if self.vocabulary.is_empty() {
            vocab.len() == self.vocab_size
        } else {
            self.vocabulary_hash().as_deref() == Some(vocab.content_hash().as_str())
        };
        if same {
            Ok(())
        } else {
            Err(Error::VocabMismatch(format!(
                "corpus vocabulary ({} words) differs from the checkpoint's ({} words)",
                vocab.len(),
                self.vocab_size
            )))
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut arrays: Vec<(&str, &Matrix)> = self
            .params
            .names()
            .iter()
            .map(String::as_str)
            .zip(self.params.values())
            .collect();
        let plan_names: Vec<String> = (0..self.plans.len()).map(|l| format!("plan.{l}")).collect();
        arrays.extend(plan_names.iter().map(String::as_str).zip(self.plans.iter().map(|p| p.matrix())));
        let header = Header {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            vocabulary: self.vocabulary.clone(),
            vocabulary_hash: self.vocabulary_hash(),
            loss_history: self.loss_history.clone(),
            arrays: arrays
                .iter()
                .map(|(n, m)| ArrayEntry {
                    name: n.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Schema(e.to_string()))?;
        let payload: usize = arrays.iter().map(|(_, m)| m.len() * 8).sum();
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &arrays {
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated checkpoint"));
        if bytes.len() < PREAMBLE {
            return Err(truncated());
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Schema("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = PREAMBLE.checked_add(header_len).ok_or_else(truncated)?;
        if bytes.len() < header_end {
            return Err(truncated());
        }
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;

        let mut offset = header_end;
        let mut params = ParamStore::new();
        let mut plans = Vec::new();
        for entry in &header.arrays {
            let n = entry.rows.checked_mul(entry.cols).ok_or_else(truncated)?;
            let end = offset.checked_add(n * 8).ok_or_else(truncated)?;
            if bytes.len() < end {
                return Err(truncated());
            }
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            let m = Matrix::new(entry.rows, entry.cols, data)?;
            if entry.name.starts_with("plan.") {
                plans.push(DependencyMatrix::from_matrix(m)?);
            } else {
                params.register(entry.name.clone(), m);
            }
        }
        if offset != bytes.len() {
            return Err(Error::Schema(format!(
                "{} unexpected trailing bytes",
                bytes.len() - offset
            )));
        }
        let cp = Self {
            config: header.config,
            vocab_size: header.vocab_size,
            vocabulary: header.vocabulary,
            params,
            plans,
            loss_history: header.loss_history,
        };
        if cp.vocabulary_hash() != header.vocabulary_hash {
            return Err(Error::Schema("vocabulary hash does not match stored words".into()));
        }
        // validates parameter names and shapes against the config
        cp.model()?;
        if cp.plans.len() + 1 != cp.config.hierarchy.num_levels() {
            return Err(Error::Schema(format!(
                "{} plans for {} levels",
                cp.plans.len(),
                cp.config.hierarchy.num_levels()
            )));
        }
        Ok(cp)
    }

    /// Writes to a temporary file next to `path`, then renames over it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = temp_path(path);
        let write = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::Io(e)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    cp.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
