//! Flat `key = value` pipeline configuration.
//!
//! Keys use dotted sections (`detect.alpha`). Every key has a default, so
//! an empty file is a valid configuration; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

/// A configuration problem; reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

macro_rules! config_err {
    ($($arg:tt)*) => { anyhow::Error::new($crate::config::ConfigError(format!($($arg)*))) };
}
pub(crate) use config_err;

/// Known keys with their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("io.delimiter", ","),
    ("paths.work", "work"),
    ("paths.snapshots", ""),
    ("paths.events", ""),
    ("calendar.sessions", "09:30-11:30,13:00-15:00"),
    ("calendar.interval_secs", "300"),
    ("snapshot.depth", "5"),
    ("simulate.stocks", "2"),
    ("simulate.days", "560"),
    ("simulate.start", "2014-01-02"),
    ("simulate.snapshots_per_interval", "10"),
    ("simulate.sigma", "0.0025"),
    ("simulate.profile", "u"),
    ("simulate.jump_intensity", "0.5"),
    ("simulate.jump_multiple", "10"),
    ("simulate.jump_up_probability", "0.5"),
    ("simulate.spread", "0.001"),
    ("simulate.depth_median", "5000"),
    ("simulate.depth_log_sd", "0.6"),
    ("simulate.lot", "100"),
    ("simulate.trade_rate", "1.5"),
    ("simulate.buy_probability", "0.5"),
    ("simulate.trade_size_median", "800"),
    ("simulate.initial_price", "10"),
    ("simulate.emit_aggressor", "true"),
    ("detect.alpha", "0.05"),
    ("detect.lookback", "5"),
    ("detect.scale", "standardized"),
    ("detect.wsd_epsilon", "1e-4"),
    ("detect.wsd_by_weekday", "false"),
    ("features.window", "60"),
    ("features.lags", "5,10,20,30"),
    ("features.session_reset", "false"),
    ("filters.limit", "true"),
    ("filters.limit_fraction", "0.10"),
    ("filters.tick", "0.01"),
    ("filters.halts", "2016-01-04:2016-01-08"),
    ("filters.post_event_window", ""),
    ("filters.warm_up_days", "60"),
    ("signal.rule", "none"),
    ("signal.noise", "0"),
    ("split.train_end", "2015-12-31"),
    ("split.fraction", ""),
    ("replicates.count", "50"),
    ("replicates.smote_k", "5"),
    ("selection.bins", "100"),
    ("selection.interval_bins", "30"),
    ("selection.trials", "1000"),
    ("selection.max_features", ""),
    ("model.problem", "binary"),
    ("model.scope", "comp"),
    ("model.learner", "forest"),
    ("grid.forest", "10,30,50,100,200"),
    ("grid.knn", "5,10,30,50,100"),
    ("grid.count_step", "5"),
    ("grid.train_fraction", "0.7"),
    ("grid.replicates", ""),
    ("report.histogram_bins", "10"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
    /// Directory relative paths are resolved against.
    base: PathBuf,
}

impl PipelineConfig {
    pub fn defaults(base: &Path) -> Self {
        let values = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { values, base: base.to_path_buf() }
    }

    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg = Self::defaults(base);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`, got {raw:?}", n + 1))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| config_err!("line {}: {e}", n + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err!("cannot read config {}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(config_err!("unknown key `{key}`")),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` missing from KEYS"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e| config_err!("`{key}`: cannot parse {v:?}: {e}"))
    }

    /// `None` for an empty value.
    pub fn opt<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn flag(&self, key: &str) -> anyhow::Result<bool> {
        match self.raw(key) {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            v => Err(config_err!("`{key}`: expected a boolean, got {v:?}")),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> anyhow::Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| config_err!("`{key}`: cannot parse {s:?}: {e}")))
            .collect()
    }

    pub fn date(&self, key: &str) -> anyhow::Result<NaiveDate> {
        let v = self.raw(key);
        NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|e| config_err!("`{key}`: bad date {v:?}: {e}"))
    }

    pub fn delimiter(&self) -> anyhow::Result<u8> {
        match self.raw("io.delimiter") {
            "\\t" | "tab" => Ok(b'\t'),
            v if v.len() == 1 => Ok(v.as_bytes()[0]),
            v => Err(config_err!("`io.delimiter`: expected one character, got {v:?}")),
        }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        let p = Path::new(self.raw(key));
        if p.is_absolute() { p.to_path_buf() } else { self.base.join(p) }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.path("paths.work")
    }

    /// Entries whose key equals one of `keys` or lies under one of the
    /// `prefix.` sections among them.
    pub fn subset(&self, keys: &[&str]) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| {
                keys.iter().any(|s| k.as_str() == *s || (s.ends_with('.') && k.starts_with(s)))
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}
