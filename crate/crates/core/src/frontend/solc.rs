//! Locating and driving the Solidity compiler over standard JSON.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Mutex, OnceLock};

use super::EnvironmentError;

pub const SOLC_ENV: &str = "GASLOOP_SOLC";
pub const SOLC_JS_ENV: &str = "GASLOOP_SOLC_JS";
pub const NODE_ENV: &str = "GASLOOP_NODE";

/// How the compiler is invoked.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SolcBinary {
    /// A native `solc` executable run with `--standard-json`.
    Native(PathBuf),
    /// The solc-js worker script run under node.
    Js { node: PathBuf, script: PathBuf },
}

impl SolcBinary {
    /// Resolution order: `GASLOOP_SOLC`, `GASLOOP_SOLC_JS`, the bundled
    /// solc-js worker, then `solc` on `PATH`.
    pub fn discover() -> Result<Self, EnvironmentError> {
        if let Ok(path) = std::env::var(SOLC_ENV) {
            return Ok(SolcBinary::Native(PathBuf::from(path)));
        }
        let node = std::env::var(NODE_ENV).map(PathBuf::from).unwrap_or_else(|_| PathBuf::from("node"));
        if let Ok(script) = std::env::var(SOLC_JS_ENV) {
            return Ok(SolcBinary::Js {
                node,
                script: PathBuf::from(script),
            });
        }
        for candidate in bundled_worker_candidates() {
            if candidate.join("node_modules").join("solc").is_dir() && candidate.join("solc-worker.js").is_file() {
                return Ok(SolcBinary::Js {
                    node,
                    script: candidate.join("solc-worker.js"),
                });
            }
        }
        if let Some(path) = find_on_path("solc") {
            return Ok(SolcBinary::Native(path));
        }
        Err(EnvironmentError::CompilerMissing(format!(
            "no compiler found; set {SOLC_ENV} to a solc binary or {SOLC_JS_ENV} to a solc-js worker script"
        )))
    }

    pub fn version(&self) -> Result<String, EnvironmentError> {
        let output = match self {
            SolcBinary::Native(path) => Command::new(path).arg("--version").output(),
            SolcBinary::Js { node, script } => Command::new(node).arg(script).arg("--version").output(),
        }
        .map_err(|e| EnvironmentError::CompilerMissing(format!("{self:?}: {e}")))?;
        if !output.status.success() {
            return Err(EnvironmentError::CompilerFailed(String::from_utf8_lossy(&output.stderr).into_owned()));
        }
        let text = String::from_utf8_lossy(&output.stdout);
        parse_version(&text).ok_or_else(|| EnvironmentError::CompilerFailed(format!("unrecognised version output: {text}")))
    }

    /// Sends one standard-JSON request and returns the raw response.
    pub fn run(&self, input: &str) -> Result<String, EnvironmentError> {
        match self {
            SolcBinary::Native(path) => run_once(Command::new(path).arg("--standard-json"), input),
            SolcBinary::Js { node, script } => {
                let pool = workers();
                let mut guard = pool.lock().unwrap_or_else(|p| p.into_inner());
                let key = (node.clone(), script.clone());
                for attempt in 0..2 {
                    if !guard.iter().any(|(k, _)| *k == key) {
                        guard.push((key.clone(), Worker::spawn(node, script)?));
                    }
                    let idx = guard.iter().position(|(k, _)| *k == key).expect("worker inserted");
                    match guard[idx].1.request(input) {
                        Ok(out) => return Ok(out),
                        Err(e) if attempt == 0 => {
                            tracing::warn!(error = %e, "solc-js worker failed, restarting");
                            guard.remove(idx);
                        }
                        Err(e) => return Err(e),
                    }
                }
                unreachable!("second attempt returns")
            }
        }
    }
}

fn bundled_worker_candidates() -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(cwd) = std::env::current_dir() {
        for dir in cwd.ancestors() {
            out.push(dir.join("tools").join("solc-js"));
        }
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    for dir in manifest.ancestors() {
        out.push(dir.join("tools").join("solc-js"));
    }
    out
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

/// Extracts `0.8.20` from either `solc --version` or solc-js output.
pub fn parse_version(text: &str) -> Option<String> {
    let start = text.find(|c: char| c.is_ascii_digit())?;
    let rest = &text[start..];
    let version: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let parts: Vec<_> = version.split('.').filter(|p| !p.is_empty()).collect();
    (parts.len() == 3).then(|| parts.join("."))
}

fn run_once(cmd: &mut Command, input: &str) -> Result<String, EnvironmentError> {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EnvironmentError::CompilerMissing(e.to_string()))?;
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(input.as_bytes())
        .map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
    let output = child
        .wait_with_output()
        .map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
    if !output.status.success() && output.stdout.is_empty() {
        return Err(EnvironmentError::CompilerFailed(String::from_utf8_lossy(&output.stderr).into_owned()));
    }
    String::from_utf8(output.stdout).map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))
}

type WorkerPool = Mutex<Vec<((PathBuf, PathBuf), Worker)>>;

fn workers() -> &'static WorkerPool {
    static POOL: OnceLock<WorkerPool> = OnceLock::new();
    POOL.get_or_init(|| Mutex::new(Vec::new()))
}

/// A long-lived `solc-worker.js --server` process answering one
/// newline-delimited request at a time.
struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn(node: &Path, script: &Path) -> Result<Self, EnvironmentError> {
        let mut child = Command::new(node)
            .arg(script)
            .arg("--server")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EnvironmentError::CompilerMissing(format!("{}: {e}", node.display())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut banner = String::new();
        stdout
            .read_line(&mut banner)
            .map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
        let ready: serde_json::Value = serde_json::from_str(banner.trim())
            .map_err(|_| EnvironmentError::CompilerFailed(format!("unexpected worker banner: {banner}")))?;
        if ready.get("ready").and_then(|v| v.as_bool()) != Some(true) {
            return Err(EnvironmentError::CompilerFailed(format!("worker not ready: {banner}")));
        }
        Ok(Self { child, stdin, stdout })
    }

    fn request(&mut self, input: &str) -> Result<String, EnvironmentError> {
        let line = serde_json::to_string(&serde_json::from_str::<serde_json::Value>(input).map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?)
            .map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
        writeln!(self.stdin, "{line}").map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
        self.stdin.flush().map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
        let mut out = String::new();
        let n = self
            .stdout
            .read_line(&mut out)
            .map_err(|e| EnvironmentError::CompilerFailed(e.to_string()))?;
        if n == 0 {
            return Err(EnvironmentError::CompilerFailed("worker exited".into()));
        }
        Ok(out)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_parsing() {
        assert_eq!(
            parse_version("solc, the solidity compiler commandline interface\nVersion: 0.8.20+commit.a1b79de6.Linux.g++").as_deref(),
            Some("0.8.20")
        );
        assert_eq!(parse_version("0.8.20+commit.a1b79de6.Emscripten.clang\n").as_deref(), Some("0.8.20"));
        assert_eq!(parse_version("nonsense"), None);
    }
}
