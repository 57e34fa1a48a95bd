//! Error classification and atomic file output.

use std::io::Write;
use std::path::Path;

use anyhow::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, unreadable or invalid inputs.
    User,
    /// Everything else.
    Internal,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self.kind {
            Kind::User => 1,
            Kind::Internal => 2,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn user(self) -> CmdResult<T>;
    fn internal(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn user(self) -> CmdResult<T> {
        self.map_err(|e| Failure { kind: Kind::User, error: e.into() })
    }

    fn internal(self) -> CmdResult<T> {
        self.map_err(|e| Failure { kind: Kind::Internal, error: e.into() })
    }
}

pub fn read_text(path: &Path) -> CmdResult<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).user()
}

/// Write via a temporary file in the target directory and rename into
/// place, so a failed run never leaves partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(anyhow::anyhow!("output directory {} does not exist", dir.display())).user();
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot create a file in {}", dir.display())).internal()?;
    tmp.write_all(bytes).context("write failed").internal()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display())).internal()?;
    Ok(())
}
