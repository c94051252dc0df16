use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Shortest round-trip decimal form, so identical floats give identical files.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(path: PathBuf, header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header.iter().map(AsRef::as_ref)).expect("in-memory write");
        Self { path, writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.writer.write_record(fields.iter().map(AsRef::as_ref)).expect("in-memory write");
    }

    pub fn finish(self) -> CliResult<()> {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        fs::write(&self.path, bytes).map_err(|source| CliError::Io { path: self.path, source })
    }
}
