//! Scripted operator commands: one `t_offset verb [args]` per line,
//! `#` starts a comment.

use std::path::Path;

use hopper_core::mission_fsm::RawCommand;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub t: f64,
    pub command: RawCommand,
    pub line: usize,
}

/// Entries in execution order; equal times keep file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    entries: Vec<ScriptEntry>,
    cursor: usize,
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (t_str, rest) = body.split_once(char::is_whitespace).ok_or_else(|| ScriptError::Syntax {
                line,
                msg: "expected '<t_offset> <verb> [args]'".into(),
            })?;
            let t: f64 = t_str.parse().map_err(|_| ScriptError::Syntax {
                line,
                msg: format!("bad time offset '{t_str}'"),
            })?;
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ScriptError::Syntax {
                    line,
                    msg: format!("time offset {t} must be finite and non-negative"),
                });
            }
            let command = rest
                .parse::<RawCommand>()
                .map_err(|e| ScriptError::Syntax { line, msg: e.to_string() })?;
            entries.push(ScriptEntry { t, command, line });
        }
        entries.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { entries, cursor: 0 })
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Pops every entry due at or before `t`.
    pub fn due(&mut self, t: f64) -> Vec<ScriptEntry> {
        let start = self.cursor;
        while self.cursor < self.entries.len() && self.entries[self.cursor].t <= t {
            self.cursor += 1;
        }
        self.entries[start..self.cursor].to_vec()
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor == self.entries.len()
    }
}
