//! Run manifests. Every command that writes an artifact drops a `key value`
//! provenance file next to it: the command name, tool version, wall-clock,
//! every resolved parameter, and a digest of each input file. Together with
//! the inputs, a manifest pins the outputs byte for byte; the wall-clock
//! line is the only field that varies between identical runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::fileio::atomic_write;
use crate::Failure;

pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.push("command", command);
        m.push("version", env!("CARGO_PKG_VERSION"));
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        m.push("wallclock_unix", stamp);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Records an input file as `input.<label>` with its digest.
    pub fn input(&mut self, label: &str, path: &Path) -> Result<(), Failure> {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            write!(hex, "{b:02x}").unwrap();
        }
        self.push(&format!("input.{label}"), path.display());
        self.push(&format!("digest.{label}"), format!("sha256:{hex}"));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push(' ');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Writes the manifest next to `output` as `<output>.manifest`.
    pub fn write_for(&self, output: &Path) -> Result<PathBuf, Failure> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest");
        let path = output.with_file_name(name);
        atomic_write(&path, self.to_text().as_bytes())?;
        Ok(path)
    }
}
