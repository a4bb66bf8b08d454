use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fso_relay::LinkConfig;
use serde::Serialize;
use tempfile::NamedTempFile;

/// Nine significant digits, scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

/// Builds CSV text in memory so nothing reaches disk until it is complete.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_string(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, renamed into place once fully written.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Everything needed to regenerate an output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: &'static str,
    pub params: LinkConfig,
    pub seed: u64,
    pub mode: String,
    pub arguments: serde_json::Value,
    pub outputs: Vec<String>,
    pub summary: Option<serde_json::Value>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn write_next_to(&self, out: &Path) -> io::Result<PathBuf> {
        let path = manifest_path(out);
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
