use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use surface_algebroid::report::to_json_string;
use surface_algebroid::GeometryError;

/// Directory used for reports and meshes when no explicit path is given.
pub const OUT_DIR_VAR: &str = "SURFALG_OUT_DIR";

/// Errors that stop a command before it produces a verdict. All map to exit
/// code 2; failed checks are not errors and exit with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "I/O error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<GeometryError> for CliError {
    fn from(err: GeometryError) -> Self {
        CliError::Config(err.to_string())
    }
}

/// Verdict of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    CheckFailed,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
        }
    }
}

/// Explicit path, else `$SURFALG_OUT_DIR/<default_name>`, else `None`.
pub fn resolve_path(explicit: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(OUT_DIR_VAR)
            .filter(|dir| !dir.is_empty())
            .map(|dir| PathBuf::from(dir).join(default_name))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write the report to `path`, or to stdout when there is none.
pub fn emit_report<T: Serialize>(report: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = to_json_string(report).map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    text.push('\n');
    match path {
        Some(path) => write_text(path, &text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

/// True when the path ends in `.csv` (case-insensitive).
pub fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
