//! Flat `key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    base: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{}`", idx + 1, raw.trim()))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", idx + 1);
            }
            if let Some((first, _)) = entries.insert(key.clone(), (idx + 1, v.trim().to_string())) {
                bail!("line {}: key `{key}` already set on line {first}", idx + 1);
            }
        }
        Ok(Self { base, entries })
    }

    /// Rejects any key outside `allowed`.
    pub fn check_keys(&self, allowed: &BTreeSet<&str>) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(key.as_str()) {
                bail!("line {line}: unknown key `{key}`");
            }
        }
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.text(key).ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("line {line}: bad value `{v}` for `{key}`: {e}")),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn need<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| anyhow!("line {line}: bad number `{}` in `{key}`: {e}", s.trim()))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.text(key).map(|p| self.resolve(p))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    /// Comma-separated list of paths, each resolved against the config file.
    pub fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.text(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|p| self.resolve(p))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text, PathBuf::from("/base")).unwrap()
    }

    #[test]
    fn parses_values_and_comments() {
        let c = cfg("# header\nop = tv # trailing\n\neta=2.5\nbasis = a.raw, /abs/b.raw\n");
        assert_eq!(c.text("op"), Some("tv"));
        assert_eq!(c.need::<f64>("eta").unwrap(), 2.5);
        assert_eq!(
            c.paths("basis"),
            vec![PathBuf::from("/base/a.raw"), PathBuf::from("/abs/b.raw")]
        );
        assert!(c.get::<usize>("missing").unwrap().is_none());
    }

    #[test]
    fn rejects_duplicates_and_malformed_lines() {
        assert!(RunConfig::parse("a=1\na=2", PathBuf::new()).is_err());
        assert!(RunConfig::parse("just words", PathBuf::new()).is_err());
        assert!(RunConfig::parse("=3", PathBuf::new()).is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let c = cfg("op=tv\nsigam=1");
        let err = c.check_keys(&["op", "sigma"].into_iter().collect()).unwrap_err();
        assert!(err.to_string().contains("sigam"));
    }

    #[test]
    fn bad_numbers_report_the_key() {
        let c = cfg("eta=fast\ndiag=1,x");
        assert!(c.need::<f64>("eta").unwrap_err().to_string().contains("eta"));
        assert!(c.list("diag").is_err());
    }
}
