//! Flat `key = value` scenario files.
//!
//! Blank lines are ignored and `#` starts a comment. Every key is optional and
//! falls back to the default scenario; unknown keys are rejected. Overrides
//! given as `KEY=VALUE` strings are applied after the file.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::estimation::Estimator;
use crate::harness::{BfMode, ScenarioConfig};

/// All recognized keys.
pub const KEYS: &[&str] = &[
    "k",
    "n_bs",
    "n_ms",
    "n_bs_rf",
    "n_ms_rf",
    "m",
    "f0_ghz",
    "bw_mhz",
    "probe_power_w",
    "ms_power_w",
    "bs_data_power_w",
    "probe_len",
    "pilot_len",
    "dist_min_m",
    "dist_max_m",
    "noise_figure_db",
    "beta",
    "trials",
    "seed",
    "bf_mode",
    "estimators",
    "n_clusters",
    "n_rays",
    "angle_spread_deg",
    "path_loss_exponent",
    "ref_loss_db",
    "shadowing_std_db",
    "workers",
];

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    Default,
    /// 1-based line of the config file.
    Line(usize),
    /// 1-based index of a `--set` override.
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("defaults"),
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "override #{n}"),
        }
    }
}

fn config_error(origin: Origin, message: impl Into<String>) -> Error {
    Error::Config {
        origin,
        message: message.into(),
    }
}

fn parse_list<T, F>(value: &str, parse: F) -> std::result::Result<Vec<T>, String>
where
    T: PartialEq,
    F: Fn(&str) -> Result<T>,
{
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = parse(item).map_err(|e| e.to_string())?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// Set one key on `cfg`.
pub fn apply_setting(cfg: &mut ScenarioConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn count(v: &str) -> std::result::Result<usize, String> {
        v.parse().map_err(|_| format!("expected a nonnegative integer, got '{v}'"))
    }
    fn real(v: &str) -> std::result::Result<f64, String> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(format!("expected a finite number, got '{v}'")),
        }
    }
    match key {
        "k" => cfg.n_users = count(value)?,
        "n_bs" => cfg.n_bs = count(value)?,
        "n_ms" => cfg.n_ms = count(value)?,
        "n_bs_rf" => cfg.n_bs_rf = count(value)?,
        "n_ms_rf" => cfg.n_ms_rf = count(value)?,
        "m" => cfg.order = count(value)?,
        "f0_ghz" => cfg.channel.carrier_freq = real(value)? * 1e9,
        "bw_mhz" => cfg.bandwidth = real(value)? * 1e6,
        "probe_power_w" => cfg.probe_power = real(value)?,
        "ms_power_w" => cfg.ms_power = real(value)?,
        "bs_data_power_w" => cfg.bs_data_power = real(value)?,
        "probe_len" => cfg.probe_len = count(value)?,
        "pilot_len" => cfg.pilot_len = count(value)?,
        "dist_min_m" => cfg.dist_min = real(value)?,
        "dist_max_m" => cfg.dist_max = real(value)?,
        "noise_figure_db" => cfg.noise_figure_db = real(value)?,
        "beta" => cfg.beta = real(value)?,
        "trials" => cfg.n_trials = count(value)?,
        "seed" => {
            cfg.master_seed = value
                .parse()
                .map_err(|_| format!("expected an unsigned 64-bit seed, got '{value}'"))?
        }
        "bf_mode" => cfg.bf_modes = parse_list(value, str::parse::<BfMode>)?,
        "estimators" => cfg.estimators = parse_list(value, str::parse::<Estimator>)?,
        "n_clusters" => cfg.channel.n_clusters = count(value)?,
        "n_rays" => cfg.channel.n_rays_per_cluster = count(value)?,
        "angle_spread_deg" => cfg.channel.angle_spread = real(value)?.to_radians(),
        "path_loss_exponent" => cfg.channel.path_loss_exponent = real(value)?,
        "ref_loss_db" => cfg.channel.ref_loss_db = real(value)?,
        "shadowing_std_db" => cfg.channel.shadowing_std_db = real(value)?,
        "workers" => cfg.workers = count(value)?,
        other => return Err(format!("unknown key '{other}'")),
    }
    Ok(())
}

/// Parse a config file and apply `KEY=VALUE` overrides, then validate.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    let mut origins: HashMap<&'static str, Origin> = HashMap::new();
    let mut set = |cfg: &mut ScenarioConfig, key: &str, value: &str, origin: Origin| -> Result<()> {
        let key = key.trim();
        let canonical = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| config_error(origin, format!("unknown key '{key}'")))?;
        apply_setting(cfg, key, value.trim()).map_err(|m| config_error(origin, format!("{key}: {m}")))?;
        origins.insert(canonical, origin);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let origin = Origin::Line(idx + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(origin, format!("expected 'key = value', got '{line}'")))?;
        set(&mut cfg, key, value, origin)?;
    }
    for (idx, item) in overrides.iter().enumerate() {
        let origin = Origin::Override(idx + 1);
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| config_error(origin, format!("expected KEY=VALUE, got '{item}'")))?;
        set(&mut cfg, key, value, origin)?;
    }

    if let Err(issue) = cfg.check() {
        // blame the most recent setting among the keys involved
        let origin = issue
            .keys
            .iter()
            .filter_map(|k| origins.get(k).copied())
            .max()
            .unwrap_or(Origin::Default);
        return Err(config_error(origin, issue.message));
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with_overrides(text, &[])
}
