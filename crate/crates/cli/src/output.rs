use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use liouville_core::SCHEMA;
use serde::Serialize;

use crate::error::CliError;

/// Environment variable that overrides the default output directory.
pub const OUT_ENV: &str = "LIOUVILLE_LAB_OUT";
const DEFAULT_OUT: &str = "liouville-out";

/// Where and what to write.
#[derive(Debug, Clone)]
pub struct Output {
    dir: PathBuf,
    json: bool,
    csv: bool,
}

/// Top-level JSON document.
#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema: &'static str,
    command: &'a str,
    status: &'a str,
    config: &'a C,
    result: &'a R,
}

impl Output {
    /// `--out` wins over the environment, which wins over the default.
    pub fn resolve(flag: Option<PathBuf>, json: bool, csv: bool) -> Result<Self, CliError> {
        let dir = flag
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        fs::create_dir_all(&dir).map_err(|source| io_error(&dir, source))?;
        Ok(Self { dir, json, csv })
    }

    pub fn json<C: Serialize, R: Serialize>(
        &self,
        name: &str,
        command: &str,
        passed: bool,
        config: &C,
        result: &R,
    ) -> Result<Option<PathBuf>, CliError> {
        if !self.json {
            return Ok(None);
        }
        let status = if passed { "ok" } else { "validation-failure" };
        let doc = Envelope { schema: SCHEMA, command, status, config, result };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.write(&format!("{name}.json"), &text).map(Some)
    }

    pub fn csv(&self, name: &str, text: &str) -> Result<Option<PathBuf>, CliError> {
        if !self.csv {
            return Ok(None);
        }
        self.write(&format!("{name}.csv"), text).map(Some)
    }

    /// Write through a temporary file in the same directory and rename, so
    /// readers never observe a partial file.
    fn write(&self, file: &str, text: &str) -> Result<PathBuf, CliError> {
        let target = self.dir.join(file);
        let tmp = self.dir.join(format!(".{file}.{}.tmp", std::process::id()));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &target)
        })();
        if let Err(source) = result {
            let _ = fs::remove_file(&tmp);
            return Err(io_error(&target, source));
        }
        Ok(target)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}
