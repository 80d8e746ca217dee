//! JSON-lines persistence for solve records and the few-shot pool.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use synthsel_core::bandit::{BanditStore, SolveRecord, SolverId};
use synthsel_core::llm::FewShotExample;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}:{line}: {reason}")]
    Invalid { path: PathBuf, line: usize, reason: String },
}

/// Reads every line of `path`; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|source| StoreError::Json { path: path.to_path_buf(), line: i + 1, source })?,
        );
    }
    Ok(out)
}

pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<(), StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let line = serde_json::to_string(item).expect("serializable");
    writeln!(f, "{}", line).map_err(io)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        writeln!(w, "{}", serde_json::to_string(item).expect("serializable")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Loads a record store, validating each record.
pub fn load_store(path: &Path) -> Result<BanditStore<SolverId>, StoreError> {
    let recs: Vec<SolveRecord<SolverId>> = read_jsonl(path)?;
    for (i, r) in recs.iter().enumerate() {
        r.validate()
            .map_err(|e| StoreError::Invalid { path: path.to_path_buf(), line: i + 1, reason: e.to_string() })?;
    }
    Ok(BanditStore::from_records(recs))
}

/// Few-shot pool kept next to a state file: `state.jsonl` pairs with
/// `state.fewshot.jsonl`.
pub fn few_shot_path(state: &Path) -> PathBuf {
    let mut s = state.as_os_str().to_owned();
    s.push(".fewshot.jsonl");
    PathBuf::from(s)
}

pub fn load_few_shot(state: &Path) -> Result<Vec<FewShotExample>, StoreError> {
    read_jsonl(&few_shot_path(state))
}
