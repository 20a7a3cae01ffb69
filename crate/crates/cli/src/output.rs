use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sessa_core::table::write_csv;
use sessa_core::{Error, Result};

use crate::Format;

/// Output directory plus the list of files written into it.
pub struct Output {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Records a file written directly by the caller.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    /// Writes `rows` as `<name>.csv` or `<name>.json` depending on the format.
    pub fn table<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let file = match self.format {
            Format::Csv => format!("{name}.csv"),
            Format::Json => format!("{name}.json"),
        };
        let mut w = BufWriter::new(File::create(self.path(&file))?);
        match self.format {
            Format::Csv => write_csv(&mut w, rows)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, rows)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        self.record(&file);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let file = format!("{name}.json");
        write_json(&self.path(&file), value)?;
        self.record(&file);
        Ok(())
    }

    pub fn manifest<T: Serialize>(&self, value: &T) -> Result<()> {
        write_json(&self.path("manifest.json"), value)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)
}
