//! Persistent run state: the new-pattern blacklist and the verified pool.
//! Both are stored as JSON Lines under a state directory.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::proposal::{fingerprint, NewPatternProposal};
use crate::gas::GasMeasurement;

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("pool entry does not save gas (before {before}, after {after})")]
    NotASaving { before: u64, after: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StateError + '_ {
    move |source| StateError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Layout of the state directory (`.gasloop/` by default).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDir {
    pub root: PathBuf,
}

impl Default for StateDir {
    fn default() -> Self {
        Self::new(".gasloop")
    }
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn blacklist_path(&self) -> PathBuf {
        self.root.join("blacklist.jsonl")
    }

    pub fn pool_path(&self) -> PathBuf {
        self.root.join("pool.jsonl")
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StateError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| StateError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistRecord {
    pub fingerprint: String,
    pub proposal_name: String,
    pub rejection_reason: String,
    pub timestamp: u64,
}

/// Proposals that failed verification. Append-only.
#[derive(Debug, Clone, Default)]
pub struct Blacklist {
    records: Vec<BlacklistRecord>,
    seen: HashSet<String>,
    path: Option<PathBuf>,
}

impl Blacklist {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads the blacklist at `path` (empty if the file does not exist yet);
    /// later additions are appended to it.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StateError> {
        let path = path.into();
        let mut bl = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        for record in read_jsonl::<BlacklistRecord>(&path)? {
            if bl.seen.insert(record.fingerprint.clone()) {
                bl.records.push(record);
            }
        }
        Ok(bl)
    }

    pub fn records(&self) -> &[BlacklistRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, p: &NewPatternProposal) -> bool {
        self.contains_fingerprint(&fingerprint(p))
    }

    pub fn contains_fingerprint(&self, fp: &str) -> bool {
        self.seen.contains(fp)
    }

    /// Records `p` as rejected. Returns false when it was already present.
    pub fn add(&mut self, p: &NewPatternProposal, reason: &str, timestamp: u64) -> Result<bool, StateError> {
        let record = BlacklistRecord {
            fingerprint: fingerprint(p),
            proposal_name: p.proposed_name.clone(),
            rejection_reason: reason.to_string(),
            timestamp,
        };
        if self.seen.contains(&record.fingerprint) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(file, "{line}").map_err(io_err(path))?;
        }
        self.seen.insert(record.fingerprint.clone());
        self.records.push(record);
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasEvidence {
    pub before: GasMeasurement,
    pub after: GasMeasurement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedPoolEntry {
    pub proposal: NewPatternProposal,
    pub evidence: GasEvidence,
    pub contract_id: String,
    pub verified_at: u64,
}

/// Proposals that passed every verification gate, pending review.
#[derive(Debug, Clone, Default)]
pub struct VerifiedPool {
    entries: Vec<VerifiedPoolEntry>,
    path: Option<PathBuf>,
}

impl VerifiedPool {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StateError> {
        let path = path.into();
        let entries = read_jsonl(&path)?;
        Ok(Self {
            entries,
            path: Some(path),
        })
    }

    pub fn entries(&self) -> &[VerifiedPoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `entry` and rewrites the pool file through a temporary file
    /// and a rename, so readers never observe a partial file.
    pub fn add(&mut self, entry: VerifiedPoolEntry) -> Result<(), StateError> {
        let (before, after) = (entry.evidence.before.gas, entry.evidence.after.gas);
        if after >= before {
            return Err(StateError::NotASaving { before, after });
        }
        self.entries.push(entry);
        if let Err(e) = self.persist() {
            self.entries.pop();
            return Err(e);
        }
        Ok(())
    }

    fn persist(&self) -> Result<(), StateError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut body = String::new();
        for e in &self.entries {
            body.push_str(&serde_json::to_string(e).expect("pool entry serializes"));
            body.push('\n');
        }
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::SpecId;
    use alloy_primitives::B256;

    fn gas(gas: u64) -> GasMeasurement {
        GasMeasurement {
            gas,
            backend: "embedded".into(),
            bytecode_hash: B256::ZERO,
            constructor_args_hash: B256::ZERO,
            evm_spec: SpecId::Shanghai,
        }
    }

    fn proposal(name: &str) -> NewPatternProposal {
        NewPatternProposal {
            proposed_name: name.into(),
            description: "d".into(),
            tags: vec![],
            matched_code: vec!["mapping(address => bool) public isAdmin;".into()],
            rationale: "r".into(),
            raw_llm_text: String::new(),
        }
    }

    fn pool_entry(before: u64, after: u64) -> VerifiedPoolEntry {
        VerifiedPoolEntry {
            proposal: proposal("p"),
            evidence: GasEvidence {
                before: gas(before),
                after: gas(after),
            },
            contract_id: "C".into(),
            verified_at: 1,
        }
    }

    #[test]
    fn empty_blacklist_contains_nothing() {
        assert!(!Blacklist::in_memory().contains(&proposal("x")));
    }

    #[test]
    fn blacklist_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let state = StateDir::new(dir.path().join("state"));
        let mut bl = Blacklist::open(state.blacklist_path()).unwrap();
        assert!(bl.add(&proposal("x"), "consistency", 10).unwrap());
        assert!(!bl.add(&proposal("x"), "again", 11).unwrap());
        let mut spaced = proposal("x");
        spaced.description = "  d  ".into();
        assert!(bl.contains(&spaced));

        let reopened = Blacklist::open(state.blacklist_path()).unwrap();
        assert_eq!(reopened.records(), bl.records());
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn pool_enforces_strict_saving() {
        let mut pool = VerifiedPool::in_memory();
        pool.add(pool_entry(100_000, 90_000)).unwrap();
        assert!(matches!(pool.add(pool_entry(100, 100)), Err(StateError::NotASaving { .. })));
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn pool_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let mut pool = VerifiedPool::open(&path).unwrap();
        pool.add(pool_entry(5, 4)).unwrap();
        pool.add(pool_entry(9, 1)).unwrap();
        let reopened = VerifiedPool::open(&path).unwrap();
        assert_eq!(reopened.entries(), pool.entries());
        assert!(!path.with_extension("jsonl.tmp").exists());
    }
}
