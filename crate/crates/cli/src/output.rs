use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Collects the files of one invocation and writes `manifest.txt` next to
/// them.
pub struct Outputs {
    dir: Option<PathBuf>,
    command: String,
    settings: String,
    started: f64,
    files: Vec<String>,
    fields: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: Option<PathBuf>, command: &str, settings: &str) -> Self {
        Self {
            dir,
            command: command.to_string(),
            settings: settings.to_string(),
            started: now(),
            files: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    /// Writes `name` under the output directory; a no-op without one.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(name), bytes)?;
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut text = format!(
            "command = {}\nversion = {}\nstarted = {:.3}\nfinished = {:.3}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.started,
            now()
        );
        for (k, v) in &self.fields {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text.push_str(&format!("outputs = {}\n\n[settings]\n", self.files.join(",")));
        text.push_str(&self.settings);
        write_atomic(&dir.join("manifest.txt"), text.as_bytes())
    }
}
