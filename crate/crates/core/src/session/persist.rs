use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AgentContext, SessionError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct SessionFileOut<'a> {
    schema_version: u32,
    context: &'a AgentContext,
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema_version: u32,
}

#[derive(Deserialize)]
struct SessionFileIn {
    context: AgentContext,
}

pub fn default_session_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.json"))
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> SessionError {
    SessionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_session(ctx: &AgentContext, path: &Path) -> Result<(), SessionError> {
    let text = serde_json::to_string_pretty(&SessionFileOut {
        schema_version: SCHEMA_VERSION,
        context: ctx,
    })
    .map_err(|e| SessionError::Format(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    // Write then rename so a crash never leaves a truncated file.
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

pub fn load_session(path: &Path) -> Result<AgentContext, SessionError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let probe: SchemaProbe = serde_json::from_str(&text).map_err(|e| SessionError::Format(e.to_string()))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(SessionError::SchemaVersionMismatch {
            found: probe.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    let file: SessionFileIn = serde_json::from_str(&text).map_err(|e| SessionError::Format(e.to_string()))?;
    if !file.context.verify_replay() {
        return Err(SessionError::ReplayMismatch);
    }
    Ok(file.context)
}
