//! Flat `key = value` configuration files.
//!
//! Keys are the field names of [`TrainConfig`]. Blank lines and lines starting
//! with `#` are ignored. Unknown keys, duplicate keys, unparsable values and
//! constraint violations are all collected and reported together.

use crate::error::{Error, Result};
use crate::train::TrainConfig;
use serde_json::{Map, Value};
use std::path::Path;

fn parse_value(default: &Value, raw: &str) -> std::result::Result<Value, String> {
    match default {
        Value::Bool(_) => match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(Value::Bool(true)),
            "false" | "no" | "off" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("expected a boolean, got `{raw}`")),
        },
        Value::Number(n) if n.is_u64() => raw
            .parse::<u64>()
            .map(Value::from)
            .map_err(|_| format!("expected a non-negative integer, got `{raw}`")),
        Value::Number(_) => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::from(v)),
            _ => Err(format!("expected a finite number, got `{raw}`")),
        },
        _ => Err("unsupported key type".into()),
    }
}

/// Applies `key = value` lines on top of `base`.
pub fn apply_config_text(base: &TrainConfig, text: &str) -> std::result::Result<TrainConfig, Vec<String>> {
    let defaults = match serde_json::to_value(base) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("TrainConfig serializes to an object"),
    };
    let mut values: Map<String, Value> = defaults.clone();
    let mut seen = std::collections::HashSet::new();
    let mut problems = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            problems.push(format!("line {line_no}: expected `key = value`"));
            continue;
        };
        let (key, raw) = (key.trim(), raw.trim());
        let Some(default) = defaults.get(key) else {
            problems.push(format!("line {line_no}: unknown key `{key}`"));
            continue;
        };
        if !seen.insert(key.to_string()) {
            problems.push(format!("line {line_no}: duplicate key `{key}`"));
            continue;
        }
        match parse_value(default, raw) {
            Ok(v) => {
                values.insert(key.to_string(), v);
            }
            Err(msg) => problems.push(format!("line {line_no}: `{key}`: {msg}")),
        }
    }

    // Every accepted value has the default's type, so this only fails on a bug.
    let cfg: TrainConfig = match serde_json::from_value(Value::Object(values)) {
        Ok(c) => c,
        Err(e) => {
            problems.push(e.to_string());
            return Err(problems);
        }
    };
    problems.extend(cfg.problems());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems)
    }
}

pub fn parse_config_text(text: &str) -> Result<TrainConfig> {
    apply_config_text(&TrainConfig::default(), text).map_err(|p| Error::Config(p.join("; ")))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    parse_config_text(&std::fs::read_to_string(path)?)
}

/// Every key with its resolved value, one per line, in a form that
/// [`parse_config_text`] reads back unchanged.
pub fn render_config(cfg: &TrainConfig) -> String {
    let Ok(Value::Object(m)) = serde_json::to_value(cfg) else {
        unreachable!()
    };
    m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        assert_eq!(parse_config_text("# nothing\n\n").unwrap(), TrainConfig::default());
    }

    #[test]
    fn overrides() {
        let cfg = parse_config_text("group_size = 4\nuse_mgas = false\nkl_coeff=0.1\nseed = 12").unwrap();
        assert_eq!(cfg.group_size, 4);
        assert!(!cfg.use_mgas);
        assert_eq!(cfg.kl_coeff, 0.1);
        assert_eq!(cfg.seed, 12);
    }

    #[test]
    fn all_problems_reported() {
        let err = apply_config_text(
            &TrainConfig::default(),
            "grup_size = 4\nsigma = abc\nseed = 1\nseed = 2\nnonsense\n",
        )
        .unwrap_err();
        assert_eq!(err.len(), 4, "{err:?}");
        assert!(err[0].contains("unknown key `grup_size`"));

        let err = apply_config_text(&TrainConfig::default(), "sigma = -1\ngroup_size = 1").unwrap_err();
        assert_eq!(err.len(), 2);
    }

    #[test]
    fn render_round_trips() {
        let cfg = TrainConfig {
            sigma: 0.3,
            use_sdw: false,
            steps: 17,
            phi_minus: 0.123456789012345,
            ..Default::default()
        };
        assert_eq!(parse_config_text(&render_config(&cfg)).unwrap(), cfg);
    }
}
