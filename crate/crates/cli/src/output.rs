//! Output plumbing: run headers, error-to-exit-code mapping, and all-or-
//! nothing file writes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use roadrisk::data::DataError;
use roadrisk::eval::EvalError;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, schemas, or input validation: exit 2.
    Usage(String),
    /// Runtime computation failure: exit 1.
    Computation(String),
    /// I/O failure: exit 1.
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(message) | CliError::Computation(message) => f.write_str(message),
            CliError::Io(err) => write!(f, "{err}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Computation(_) | CliError::Io(_) => ExitCode::from(1),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

// input-side problems are the user's data, not ours: exit 2
impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        CliError::Usage(err.to_string())
    }
}

pub fn computation(err: impl fmt::Display) -> CliError {
    CliError::Computation(err.to_string())
}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Drop the `#` comment preamble this tool writes, so emitted JSON files can
/// be fed back in as inputs.
pub fn strip_comment_preamble(text: &str) -> String {
    text.lines()
        .filter(|line| !line.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The comment header prepended to every output file. Contains the tool
/// version, the fully resolved configuration, and a content hash of the
/// input, and nothing run-dependent, so identical runs produce identical
/// bytes.
pub fn run_header(command: &str, config_json: &str, input_label: &str, input_hash: &str) -> String {
    format!(
        "# roadrisk {}\n# command: {}\n# config: {}\n# {}-sha256: {}\n",
        env!("CARGO_PKG_VERSION"),
        command,
        config_json,
        input_label,
        input_hash
    )
}

/// Write every file or none: contents go to `<name>.tmp` first and are
/// renamed only after every temporary write succeeded.
pub fn commit(dir: &Path, header: &str, files: Vec<(String, String)>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(files.len());
    for (name, body) in &files {
        let tmp = dir.join(format!("{name}.tmp"));
        let final_path = dir.join(name);
        let mut content = String::with_capacity(header.len() + body.len());
        content.push_str(header);
        content.push_str(body);
        if let Err(err) = fs::write(&tmp, content) {
            discard(&staged);
            let _ = fs::remove_file(&tmp);
            return Err(err.into());
        }
        staged.push((tmp, final_path));
    }
    for (tmp, final_path) in &staged {
        if let Err(err) = fs::rename(tmp, final_path) {
            discard(&staged);
            return Err(err.into());
        }
    }
    Ok(())
}

fn discard(staged: &[(PathBuf, PathBuf)]) {
    for (tmp, _) in staged {
        let _ = fs::remove_file(tmp);
    }
}
