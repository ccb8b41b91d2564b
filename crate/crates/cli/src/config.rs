//! Loading a TOML config on top of a preset.
//!
//! Errors carry the dotted field path and, when the key appears in the
//! user's file, the line it sits on.

use std::fmt;
use std::path::Path;

use linagg_core::experiments::{ExperimentConfig, PRESETS};
use linagg_core::Error;
use toml::{Table, Value};

#[derive(Debug)]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " in `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

fn plain(message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: None,
        line: None,
        message: message.into(),
    }
}

/// Resolves the preset, merges the file over it, applies the seed override
/// and validates the result.
pub fn load(preset: &str, path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    let base = ExperimentConfig::preset(preset)
        .ok_or_else(|| plain(format!("unknown preset `{preset}` (expected one of {PRESETS:?})")))?;
    let (mut cfg, text) = match path {
        None => (base, String::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| plain(format!("cannot read {}: {e}", p.display())))?;
            (parse(&base, &text)?, text)
        }
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate().map_err(|e| match e {
        Error::Config { field, message } => ConfigError {
            line: locate(&text, &field),
            field: Some(field),
            message,
        },
        other => plain(other.to_string()),
    })?;
    Ok(cfg)
}

/// Merges `text` over `base` without validating.
pub fn parse(base: &ExperimentConfig, text: &str) -> Result<ExperimentConfig, ConfigError> {
    let user: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        field: None,
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut merged = Value::try_from(base).map_err(|e| plain(format!("preset does not serialize: {e}")))?;
    merge(&mut merged, Value::Table(user));
    serde_path_to_error::deserialize::<_, ExperimentConfig>(merged).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        // the path already ends in an unknown key, except at the top level
        let field = match unknown_key(&message) {
            Some(key) if path == "." => key,
            _ => path,
        };
        ConfigError {
            line: locate(text, &field),
            field: Some(field),
            message,
        }
    })
}

/// Tables merge key by key; anything else in `over` replaces `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line on which the dotted `field` is assigned, falling back to
/// the closest enclosing table header.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let mut table = String::new();
    let mut best: Option<(usize, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            table = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if field == table || field.starts_with(&format!("{table}.")) {
                let depth = table.split('.').count();
                if best.map_or(true, |(d, _)| depth > d) {
                    best = Some((depth, i + 1));
                }
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim().trim_matches('"');
        let full = if table.is_empty() {
            key.to_string()
        } else {
            format!("{table}.{key}")
        };
        if full == field {
            return Some(i + 1);
        }
    }
    best.map(|(_, line)| line)
}
