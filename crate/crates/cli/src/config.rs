//! `--config file.json` support and data-directory path resolution.
//!
//! A config file is a JSON object whose keys are long flag names (with or
//! without the leading dashes). Each key not already given on the command
//! line is appended as a flag, so explicit flags always win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

pub const DATA_DIR_ENV: &str = "LOCALREC_DATA_DIR";

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn has_flag(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&eq)
    })
}

fn scalar(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => bail!("config key `{key}`: expected a string or number"),
    })
}

/// Expands one config entry into command-line arguments.
fn flag_args(key: &str, value: &Value) -> Result<Vec<String>> {
    let flag = format!("--{}", key.trim_start_matches('-').replace('_', "-"));
    Ok(match value {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.push(flag.clone());
                out.push(scalar(key, item)?);
            }
            out
        }
        v => vec![flag, scalar(key, v)?],
    })
}

/// Returns `args` with entries from the `--config` file appended.
pub fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = resolve(&path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let map: serde_json::Map<String, Value> =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut merged = args.clone();
    for (key, value) in &map {
        let extra = flag_args(key, value)?;
        if let Some(flag) = extra.first() {
            if !has_flag(&args, flag) {
                merged.extend(extra.into_iter().map(OsString::from));
            }
        }
    }
    Ok(merged)
}

/// Relative paths are taken relative to `$LOCALREC_DATA_DIR` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn entries_expand_to_flags() {
        assert_eq!(flag_args("seed", &Value::from(7)).unwrap(), ["--seed", "7"]);
        assert_eq!(flag_args("learning_rate", &Value::from(0.5)).unwrap(), ["--learning-rate", "0.5"]);
        assert_eq!(
            flag_args("model", &serde_json::json!(["a", "b"])).unwrap(),
            ["--model", "a", "--model", "b"]
        );
        assert!(flag_args("x", &Value::from(false)).unwrap().is_empty());
        assert!(flag_args("x", &serde_json::json!({"a": 1})).is_err());
    }

    #[test]
    fn explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 1, "artists": 50}"#).unwrap();
        let args = os(&["localrec", "synth", "--seed=9", "--config", cfg.to_str().unwrap()]);
        let merged = merge_config_file(args).unwrap();
        let merged: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert!(merged.contains(&"--seed=9".to_string()));
        assert!(!merged.contains(&"1".to_string()));
        assert!(merged.ends_with(&["--artists".to_string(), "50".to_string()]));
    }
}
