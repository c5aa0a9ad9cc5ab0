//! Run directory and summary bookkeeping.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nlpi_core::image::io::{encode_pgm, encode_raw, PgmEncoding};
use nlpi_core::Image;

use crate::config::RunConfig;

/// Shortest round-trip form, switching to exponent notation for very small
/// or very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub struct Run {
    dir: PathBuf,
    command: &'static str,
    summary: Vec<(String, String)>,
}

impl Run {
    pub fn create(cfg: &RunConfig, command: &'static str) -> Result<Self> {
        let dir = cfg.require_path("run_dir")?;
        fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
        Ok(Self {
            dir,
            command,
            summary: vec![("command".into(), command.into())],
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Display) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn number(&mut self, key: impl Into<String>, value: f64) {
        self.note(key, num(value));
    }

    pub fn file(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    /// `<stem>.raw` at full precision and a stretched `<stem>.pgm` preview.
    pub fn image(&self, stem: &str, img: &Image) -> Result<()> {
        self.file(&format!("{stem}.raw"), encode_raw(img))?;
        self.file(&format!("{stem}.pgm"), encode_pgm(img, PgmEncoding::Binary))
    }

    /// Writes `summary.txt` and prints the summary on one line.
    pub fn finish(self) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.summary {
            text.push_str(&format!("{k}={v}\n"));
        }
        self.file("summary.txt", &text)?;
        let line: Vec<String> = self.summary.iter().skip(1).map(|(k, v)| format!("{k}={v}")).collect();
        println!("{}: {}", self.command, line.join(" "));
        Ok(())
    }
}
