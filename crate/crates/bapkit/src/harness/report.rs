//! Output plumbing: fingerprinted CSV files and the per-command run log.
//!
//! CSV dialect: comma separator, `.` decimal point, floats at 17 significant
//! digits, `#`-prefixed comment lines before the header row. Files are
//! accumulated in memory and written once, so a failed run leaves no
//! half-written tables behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvFile {
    lines: Vec<String>,
}

impl CsvFile {
    pub fn new(fingerprint: &str) -> CsvFile {
        CsvFile {
            lines: vec![format!("# fingerprint={fingerprint}")],
        }
    }

    pub fn comment(&mut self, text: &str) {
        self.lines.push(format!("# {text}"));
    }

    /// Header or label row, written verbatim.
    pub fn row_str<S: AsRef<str>>(&mut self, cells: &[S]) {
        let joined = cells
            .iter()
            .map(|c| c.as_ref().to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.lines.push(joined);
    }

    /// Data row with an optional leading label cell.
    pub fn row(&mut self, label: Option<&str>, values: &[f64]) {
        let mut cells: Vec<String> = Vec::with_capacity(values.len() + 1);
        if let Some(label) = label {
            cells.push(label.to_string());
        }
        cells.extend(values.iter().copied().map(format_float));
        self.lines.push(cells.join(","));
    }

    pub fn contents(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.contents())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Run log collecting phase annotations and integration-count accounting.
/// Wall-clock lines go here (not into CSV tables), so tables stay bitwise
/// reproducible.
pub struct RunLog {
    lines: Vec<String>,
    started: Instant,
}

impl RunLog {
    pub fn new(command: &str, fingerprint: &str, canonical_config: &str) -> RunLog {
        let mut lines = vec![
            format!("command: {command}"),
            format!("fingerprint: {fingerprint}"),
            "config:".to_string(),
        ];
        for line in canonical_config.lines() {
            lines.push(format!("  {line}"));
        }
        RunLog {
            lines,
            started: Instant::now(),
        }
    }

    pub fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    /// Records the model-integration counter after a named phase.
    pub fn count(&mut self, phase: &str, steps: u64) {
        self.lines.push(format!("integrations[{phase}]: {steps} steps"));
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let mut text = String::new();
        for line in &self.lines {
            writeln!(text, "{line}").expect("string write");
        }
        writeln!(text, "elapsed: {:.3}s", self.started.elapsed().as_secs_f64())
            .expect("string write");
        let path = dir.join("run.log");
        std::fs::write(&path, text)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

/// Creates the output directory if needed.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}
