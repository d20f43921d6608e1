//! JSON case files.
//!
//! A case file is a JSON object with the sections `base_mva`, `buses`,
//! `branches`, `cont_gens` and `step_gens`; field names follow
//! [`miopf_core::GridCase`]. Power is in MW/Mvar/MVA, impedances in per-unit.

use std::fs;
use std::path::{Path, PathBuf};

use miopf_core::{GridCase, ValidationErrors};

use crate::atomic_write;
use crate::bundled;

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message} (line {line}, column {column})")]
    Syntax {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("invalid case:\n{0}")]
    Invalid(#[from] ValidationErrors),
}

impl CaseError {
    /// Field path of a syntax error, or of every validation error.
    pub fn paths(&self) -> Vec<String> {
        match self {
            CaseError::Io { .. } => Vec::new(),
            CaseError::Syntax { path, .. } => vec![path.clone()],
            CaseError::Invalid(v) => v.errors().iter().map(|e| e.path.clone()).collect(),
        }
    }
}

/// Parses and validates case-file text.
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: GridCase = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CaseError::Syntax {
            path,
            message: strip_position(&inner.to_string()),
            line: inner.line(),
            column: inner.column(),
        }
    })?;
    case.validate()?;
    Ok(case)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Pretty JSON text that [`parse_case`] reads back to an identical case.
pub fn serialize_case(case: &GridCase) -> String {
    let mut s = serde_json::to_string_pretty(case).expect("case serialises");
    s.push('\n');
    s
}

/// Loads a case from a file path, or from the bundled cases when `spec` is a
/// bundled case name and no such file exists.
pub fn load_case(spec: &str) -> Result<GridCase, CaseError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(text) = bundled::text(spec) {
            return parse_case(text);
        }
    }
    let text = fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_case(&text)
}

pub fn write_case(path: &Path, case: &GridCase) -> std::io::Result<()> {
    atomic_write(path, serialize_case(case).as_bytes())
}
