//! Case text ingestion and export.
//!
//! The supported input is the matrix subset of the MATPOWER case format:
//! `mpc.baseMVA` plus the `bus`, `gen`, `branch` and `gencost` matrices in the
//! conventional column layout. Impedances are already per-unit in that
//! format; loads and limits stay in physical units.

mod parse;
mod write;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::network::PowerSystem;

pub use parse::parse_case_named;
pub use write::serialize_case;

pub const BUILTIN_CASES: [&str; 5] = ["case14", "case30", "case57", "case118", "case300"];

const CASE14: &str = include_str!("../../cases/case14.m");
const CASE30: &str = include_str!("../../cases/case30.m");
const CASE57: &str = include_str!("../../cases/case57.m");
const CASE118: &str = include_str!("../../cases/case118.m");
const CASE300: &str = include_str!("../../cases/case300.m");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("invalid case data: {0}")]
    Semantics(String),
    #[error("unknown case '{name}'; supported cases: {}", supported.join(", "))]
    UnknownCase { name: String, supported: Vec<String> },
    #[error("cannot read case file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrigin {
    Builtin,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSource {
    pub name: String,
    pub origin: CaseOrigin,
    pub raw_text: String,
    /// SHA-256 of `raw_text`, lowercase hex.
    pub checksum: String,
}

impl CaseSource {
    pub fn new(name: impl Into<String>, origin: CaseOrigin, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let checksum = sha256_hex(raw_text.as_bytes());
        CaseSource {
            name: name.into(),
            origin,
            raw_text,
            checksum,
        }
    }

    pub fn parse(&self) -> Result<PowerSystem, CaseError> {
        parse_case_named(&self.raw_text, &self.name)
    }
}

pub fn parse_case(text: &str) -> Result<PowerSystem, CaseError> {
    parse_case_named(text, "case")
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    match name {
        "case14" => Some(CASE14),
        "case30" => Some(CASE30),
        "case57" => Some(CASE57),
        "case118" => Some(CASE118),
        "case300" => Some(CASE300),
        _ => None,
    }
}

fn unknown(name: &str) -> CaseError {
    CaseError::UnknownCase {
        name: name.to_string(),
        supported: BUILTIN_CASES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Accepts `case118`, `118`, `ieee118`, `IEEE 118`.
pub fn normalize_case_name(name: &str) -> String {
    let compact: String = name
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_')
        .collect::<String>()
        .to_ascii_lowercase();
    let digits = compact
        .strip_prefix("case")
        .or_else(|| compact.strip_prefix("ieee"))
        .unwrap_or(&compact);
    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
        format!("case{digits}")
    } else {
        compact
    }
}

pub fn load_builtin_source(name: &str) -> Result<CaseSource, CaseError> {
    let key = normalize_case_name(name);
    let text = builtin_text(&key).ok_or_else(|| unknown(name))?;
    Ok(CaseSource::new(key, CaseOrigin::Builtin, text))
}

pub fn load_builtin(name: &str) -> Result<PowerSystem, CaseError> {
    load_builtin_source(name)?.parse()
}

/// Where cases come from: an optional directory of `<name>.m` files that
/// shadows the embedded catalog.
#[derive(Debug, Clone, Default)]
pub struct CaseCatalog {
    pub dir: Option<PathBuf>,
}

impl CaseCatalog {
    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        CaseCatalog {
            dir: Some(dir.into()),
        }
    }

    pub fn source(&self, name: &str) -> Result<CaseSource, CaseError> {
        let key = normalize_case_name(name);
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.m"));
            if path.is_file() {
                return read_case_file(&path, &key);
            }
        }
        load_builtin_source(&key).map_err(|_| unknown(name))
    }

    pub fn load(&self, name: &str) -> Result<(CaseSource, PowerSystem), CaseError> {
        let source = self.source(name)?;
        let net = source.parse()?;
        Ok((source, net))
    }
}

pub fn read_case_file(path: &Path, name: &str) -> Result<CaseSource, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(CaseSource::new(name, CaseOrigin::File, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_normalization() {
        assert_eq!(normalize_case_name("IEEE 118"), "case118");
        assert_eq!(normalize_case_name("118"), "case118");
        assert_eq!(normalize_case_name("case-57"), "case57");
        assert_eq!(normalize_case_name("Case14"), "case14");
    }

    #[test]
    fn unknown_case_lists_supported() {
        let err = load_builtin("case999").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("case999") && msg.contains("case300"), "{msg}");
    }

    #[test]
    fn checksum_is_function_of_text() {
        let a = CaseSource::new("a", CaseOrigin::File, "x");
        let b = CaseSource::new("b", CaseOrigin::Builtin, "x");
        assert_eq!(a.checksum, b.checksum);
        assert_ne!(a.checksum, CaseSource::new("a", CaseOrigin::File, "y").checksum);
    }

    #[test]
    fn case_dir_shadows_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let text = serialize_case(&load_builtin("case14").unwrap());
        std::fs::write(dir.path().join("case14.m"), &text).unwrap();
        let catalog = CaseCatalog::with_dir(dir.path());
        let (src, net) = catalog.load("case14").unwrap();
        assert_eq!(src.origin, CaseOrigin::File);
        assert_eq!(net.buses.len(), 14);
        let (src, _) = catalog.load("case30").unwrap();
        assert_eq!(src.origin, CaseOrigin::Builtin);
    }
}
