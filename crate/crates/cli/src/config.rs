//! Flat `key=value` run configuration.
//!
//! One pair per line, `#` starts a comment. Every key has a default, and
//! keys outside the known set are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

/// `(key, default)` for every accepted key.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("train.dataset", "two_moons"),
    ("train.n_train", "1000"),
    ("train.n_test", "1000"),
    ("train.noise", "0.15"),
    ("train.hidden", "64,64"),
    ("train.activation", "relu"),
    ("train.epochs", "100"),
    ("train.batch_size", "128"),
    ("train.lr", "0.05"),
    ("train.lr_decay_epochs", "50,75"),
    ("train.momentum", "0.9"),
    ("train.method", "erm"),
    ("train.mu", "0.5"),
    ("train.gamma", "1.5"),
    ("train.schedule", "linear_ramp"),
    ("train.mixup_alpha", "1.0"),
    ("attack.model", ""),
    ("attack.epsilon", "0.1"),
    ("attack.pgd_steps", "10"),
    ("attack.trials", "20"),
    ("attack.k_prime", "128"),
    ("attack.n_prime", "192"),
    ("attack.attacks", "none,fgsm,pgd"),
    ("attack.modes", "standard,rci"),
    ("sim.K", "16"),
    ("sim.N", "32,64,128,256,512"),
    ("sim.S", "0,1,3,7"),
    ("sim.policy", "uniform_random"),
    ("sim.fn", "sin"),
    ("sim.num_seeds", "10"),
    ("lemma1.K", "16"),
    ("lemma1.N", "32,64,128,256,512"),
    ("lemma1.fn", "sin"),
    ("points.K", "4"),
    ("points.N", "5"),
    ("sweep.param", "mu"),
    ("sweep.values", "0.1,0.2,0.4,0.5,0.6,0.8,1.0"),
    ("sweep.num_seeds", "1"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the pairs in `text`. All problems are reported
    /// together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v.trim()) {
                        problems.push(format!("line {}: {}", n + 1, e));
                    }
                }
                None => problems.push(format!("line {}: expected key=value, got {line:?}", n + 1)),
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Validation(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(format!("unknown key {key:?}")),
        }
    }

    /// Applies `key=value` overrides, reporting every bad one.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        let mut problems = Vec::new();
        for p in pairs {
            let p = p.as_ref();
            match p.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v.trim()) {
                        problems.push(e);
                    }
                }
                None => problems.push(format!("override {p:?} is not key=value")),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems))
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    /// Every key, sorted, one `key=value` per line.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        crate::output::write_file(&dir.join("config.txt"), self.render().as_bytes())
    }
}

/// Typed reads that record failures instead of stopping at the first.
pub struct Reader<'a> {
    cfg: &'a RunConfig,
    pub problems: Vec<String>,
}

impl<'a> Reader<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            problems: Vec::new(),
        }
    }

    pub fn get<T>(&mut self, key: &str) -> Option<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.cfg.raw(key);
        match raw.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("{key}={raw:?}: {e}"));
                None
            }
        }
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.cfg.raw(key);
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.problems.push(format!("{key}: item {item:?}: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    pub fn non_empty_list<T>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let v = self.list(key)?;
        if v.is_empty() {
            self.problems.push(format!("{key} must not be empty"));
            return None;
        }
        Some(v)
    }

    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.problems.push(msg());
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(self.problems))
        }
    }
}
