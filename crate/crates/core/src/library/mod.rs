//! The curated gas-waste pattern library: one JSON document per pattern.

mod proposal;
mod seed;
mod state;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use proposal::{fingerprint, normalize_proposal, normalize_whitespace, NewPatternProposal};
pub use seed::SEED_FILES;
pub use state::{Blacklist, BlacklistRecord, GasEvidence, StateDir, StateError, VerifiedPool, VerifiedPoolEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PatternExample {
    pub id: String,
    pub title: String,
    pub description: String,
    pub code_before: String,
    pub code_after: String,
    pub code_issue_tags: Vec<String>,
    pub code_improvements: Vec<String>,
    /// Fields outside the schema, kept so re-serialization is lossless.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PatternEntry {
    pub name: String,
    pub description: String,
    pub summary: String,
    pub tags: Vec<String>,
    pub applicable_scenarios: Vec<String>,
    pub examples: Vec<PatternExample>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl PatternEntry {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("pattern entries always serialize")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern entries always serialize")
    }
}

/// One problem with one field, addressed by a dotted path such as
/// `examples[1].codeAfter`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl ValidationErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ValidationErrors {}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

struct Checker {
    errors: Vec<FieldError>,
}

impl Checker {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn string<'v>(&mut self, obj: &'v Map<String, Value>, prefix: &str, key: &str) -> Option<&'v str> {
        let path = join(prefix, key);
        match obj.get(key) {
            None => {
                self.err(path, "missing field");
                None
            }
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                self.err(path, format!("expected string, found {}", kind(other)));
                None
            }
        }
    }

    fn strings(&mut self, obj: &Map<String, Value>, prefix: &str, key: &str) {
        let path = join(prefix, key);
        match obj.get(key) {
            None => self.err(path, "missing field"),
            Some(Value::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    if !item.is_string() {
                        self.err(format!("{path}[{i}]"), format!("expected string, found {}", kind(item)));
                    }
                }
            }
            Some(other) => self.err(path, format!("expected list of strings, found {}", kind(other))),
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

/// Checks a raw document against the entry schema. Every problem found is
/// reported, not just the first.
pub fn validate_entry(raw: &Value) -> Result<PatternEntry, ValidationErrors> {
    let mut c = Checker { errors: Vec::new() };
    let Some(obj) = raw.as_object() else {
        c.err("$", format!("expected object, found {}", kind(raw)));
        return Err(ValidationErrors(c.errors));
    };

    if let Some(name) = c.string(obj, "", "name") {
        if !is_valid_name(name) {
            c.err("name", format!("`{name}` does not match [a-z0-9_]+"));
        }
    }
    c.string(obj, "", "description");
    c.string(obj, "", "summary");
    c.strings(obj, "", "tags");
    c.strings(obj, "", "applicableScenarios");

    match obj.get("examples") {
        None => c.err("examples", "missing field"),
        Some(Value::Array(items)) if items.is_empty() => c.err("examples", "must contain at least one example"),
        Some(Value::Array(items)) => {
            let mut seen = HashSet::new();
            for (i, item) in items.iter().enumerate() {
                let prefix = format!("examples[{i}]");
                let Some(ex) = item.as_object() else {
                    c.err(prefix, format!("expected object, found {}", kind(item)));
                    continue;
                };
                if let Some(id) = c.string(ex, &prefix, "id") {
                    if !seen.insert(id.to_string()) {
                        c.err(format!("{prefix}.id"), format!("duplicate example id `{id}`"));
                    }
                }
                c.string(ex, &prefix, "title");
                c.string(ex, &prefix, "description");
                let before = c.string(ex, &prefix, "codeBefore");
                let after = c.string(ex, &prefix, "codeAfter");
                if before.is_some_and(|s| s.trim().is_empty()) {
                    c.err(format!("{prefix}.codeBefore"), "must not be empty");
                }
                if after.is_some_and(|s| s.trim().is_empty()) {
                    c.err(format!("{prefix}.codeAfter"), "must not be empty");
                }
                if let (Some(b), Some(a)) = (before, after) {
                    if b == a {
                        c.err(format!("{prefix}.codeAfter"), "identical to codeBefore");
                    }
                }
                c.strings(ex, &prefix, "codeIssueTags");
                c.strings(ex, &prefix, "codeImprovements");
            }
        }
        Some(other) => c.err("examples", format!("expected list of examples, found {}", kind(other))),
    }

    if !c.errors.is_empty() {
        return Err(ValidationErrors(c.errors));
    }
    serde_json::from_value(raw.clone()).map_err(|e| {
        ValidationErrors(vec![FieldError {
            path: "$".into(),
            message: e.to_string(),
        }])
    })
}

/// A problem with one file found while loading a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadDiagnostic {
    pub file: PathBuf,
    pub message: String,
}

impl fmt::Display for LoadDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file.display(), self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("pattern directory {0} does not exist")]
    Missing(PathBuf),
    #[error("cannot read pattern directory {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternLibrary {
    pub entries: BTreeMap<String, PatternEntry>,
    pub source_directory: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedLibrary {
    pub library: PatternLibrary,
    pub diagnostics: Vec<LoadDiagnostic>,
}

/// Loads every `*.json` file in `dir`. Files are visited in name order so
/// the first of two entries sharing a name wins deterministically.
pub fn load_library(dir: &Path) -> Result<LoadedLibrary, LibraryError> {
    if !dir.is_dir() {
        return Err(LibraryError::Missing(dir.to_path_buf()));
    }
    let read = std::fs::read_dir(dir).map_err(|source| LibraryError::Unreadable {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut out = LoadedLibrary {
        library: PatternLibrary {
            entries: BTreeMap::new(),
            source_directory: Some(dir.to_path_buf()),
        },
        diagnostics: Vec::new(),
    };
    for file in files {
        let text = match std::fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                out.diagnostics.push(LoadDiagnostic { file, message: e.to_string() });
                continue;
            }
        };
        match parse_document(&text) {
            Ok(entry) => {
                if out.library.entries.contains_key(&entry.name) {
                    out.diagnostics.push(LoadDiagnostic {
                        file,
                        message: format!("name: duplicate pattern name `{}`, file skipped", entry.name),
                    });
                } else {
                    out.library.entries.insert(entry.name.clone(), entry);
                }
            }
            Err(message) => out.diagnostics.push(LoadDiagnostic { file, message }),
        }
    }
    Ok(out)
}

fn parse_document(text: &str) -> Result<PatternEntry, String> {
    let raw: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    validate_entry(&raw).map_err(|e| e.to_string())
}

impl PatternLibrary {
    /// The library shipped with the crate.
    pub fn seed() -> Self {
        let mut entries = BTreeMap::new();
        for (file, text) in SEED_FILES {
            let entry = parse_document(text).unwrap_or_else(|e| panic!("seed pattern {file} is invalid: {e}"));
            entries.insert(entry.name.clone(), entry);
        }
        Self {
            entries,
            source_directory: None,
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = PatternEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.name.clone(), e)).collect(),
            source_directory: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&PatternEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatternEntry> {
        self.entries.values()
    }

    /// Writes each entry to `dir/<name>.json`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for entry in self.iter() {
            std::fs::write(dir.join(format!("{}.json", entry.name)), entry.to_json_pretty() + "\n")?;
        }
        Ok(())
    }

    /// Pattern list for the natural-language retrieval prompt.
    pub fn descriptions(&self) -> String {
        self.iter()
            .map(|e| format!("- {}: {}", e.name, e.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn example(id: &str) -> Value {
        json!({
            "id": id,
            "title": "t",
            "description": "d",
            "codeBefore": "uint256 public chainId;",
            "codeAfter": "uint256 public immutable chainId;",
            "codeIssueTags": ["storage"],
            "codeImprovements": ["no SSTORE"]
        })
    }

    fn entry(name: &str, examples: Vec<Value>) -> Value {
        json!({
            "name": name,
            "description": "d",
            "summary": "s",
            "tags": ["immutable"],
            "applicableScenarios": ["constructor-set fields"],
            "examples": examples
        })
    }

    #[test]
    fn valid_entry() {
        let e = validate_entry(&entry("immutable_variable_usage", vec![example("a")])).unwrap();
        assert_eq!(e.name, "immutable_variable_usage");
        assert_eq!(e.examples.len(), 1);
    }

    #[test]
    fn empty_examples_rejected_at_examples() {
        let err = validate_entry(&entry("x", vec![])).unwrap_err();
        assert_eq!(err.paths(), vec!["examples"]);
    }

    #[test]
    fn duplicate_example_ids_named() {
        let err = validate_entry(&entry("x", vec![example("dup"), example("dup")])).unwrap_err();
        assert_eq!(err.paths(), vec!["examples[1].id"]);
        assert!(err.to_string().contains("`dup`"));
    }

    #[test]
    fn field_errors_carry_paths() {
        let mut raw = entry("Bad-Name", vec![example("a")]);
        raw["tags"] = json!("immutable");
        raw["examples"][0]["codeAfter"] = raw["examples"][0]["codeBefore"].clone();
        raw["examples"][0].as_object_mut().unwrap().remove("title");
        let err = validate_entry(&raw).unwrap_err();
        assert_eq!(err.paths(), vec!["name", "tags", "examples[0].title", "examples[0].codeAfter"]);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let mut raw = entry("x", vec![example("a")]);
        raw["severity"] = json!("low");
        raw["examples"][0]["gasSaved"] = json!(2100);
        let e = validate_entry(&raw).unwrap();
        assert_eq!(e.to_json(), raw);
    }

    #[test]
    fn seed_library_is_complete() {
        let lib = PatternLibrary::seed();
        assert_eq!(lib.len(), 12);
        let names: Vec<_> = lib.names().collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }
}
