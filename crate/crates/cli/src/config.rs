//! Flat `key = value` simulation configs.
//!
//! `#` starts a comment; lists are comma separated; `p_grid` also accepts
//! `start:stop:step` (inclusive). Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use designbench::{ErrorKind, EstimatorId, SimConfig, VarianceMethod};

use crate::error::{CliError, CliResult};

pub const REQUIRED_KEYS: [&str; 7] = ["n", "pi1", "p_grid", "df", "error_kind", "reps", "seed"];
pub const OPTIONAL_KEYS: [&str; 4] = ["estimators", "se_methods", "ci_level", "out_dir"];

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub config: SimConfig,
    pub out_dir: Option<PathBuf>,
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), message: message.into() }
}

fn scalar<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| config_err(key, format!("cannot parse `{raw}`: {e}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| scalar(key, s)).collect()
}

pub fn parse_grid(raw: &str) -> CliResult<Vec<usize>> {
    const KEY: &str = "p_grid";
    let parts: Vec<&str> = raw.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [_] => list(KEY, raw),
        [start, stop, step] => {
            let (start, stop, step): (usize, usize, usize) = (scalar(KEY, start)?, scalar(KEY, stop)?, scalar(KEY, step)?);
            if step == 0 || start > stop {
                return Err(config_err(KEY, format!("range `{raw}` needs step > 0 and start <= stop")));
            }
            Ok((start..=stop).step_by(step).collect())
        }
        _ => Err(config_err(KEY, format!("expected `a,b,c` or `start:stop:step`, got `{raw}`"))),
    }
}

/// Parses config text into a campaign; validation happens in the engine.
pub fn parse(text: &str) -> CliResult<Campaign> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Parse { line: k as u64 + 1, message: format!("expected `key = value`, got `{line}`") })?;
        let key = key.trim();
        if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(config_err(key, "unknown key"));
        }
        if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(config_err(key, "given more than once"));
        }
    }
    if let Some(missing) = REQUIRED_KEYS.iter().find(|k| !entries.contains_key(**k)) {
        return Err(config_err(missing, "missing required key"));
    }
    let get = |k: &str| entries.get(k).map(String::as_str);
    let defaults = SimConfig::default();
    let config = SimConfig {
        n: scalar("n", get("n").unwrap())?,
        pi1: scalar("pi1", get("pi1").unwrap())?,
        p_grid: parse_grid(get("p_grid").unwrap())?,
        df: scalar("df", get("df").unwrap())?,
        error_kind: scalar::<ErrorKind>("error_kind", get("error_kind").unwrap())?,
        reps: scalar("reps", get("reps").unwrap())?,
        master_seed: scalar("seed", get("seed").unwrap())?,
        estimators: get("estimators").map_or(Ok(defaults.estimators), |v| list::<EstimatorId>("estimators", v))?,
        se_methods: get("se_methods").map_or(Ok(defaults.se_methods), |v| list::<VarianceMethod>("se_methods", v))?,
        ci_level: get("ci_level").map_or(Ok(defaults.ci_level), |v| scalar("ci_level", v))?,
    };
    Ok(Campaign { config, out_dir: get("out_dir").map(PathBuf::from) })
}
