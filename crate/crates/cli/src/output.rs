//! CSV and JSON writers for command results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

/// Directory that receives every file a command writes.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> CliResult<Table> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        Ok(Table { w })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> CliResult<()> {
        fs::write(self.path(name), text)?;
        Ok(())
    }
}

pub struct Table {
    w: csv::Writer<fs::File>,
}

impl Table {
    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Formats a value for a CSV cell; `{}` on `f64` is the shortest exact form.
pub fn cell<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}
