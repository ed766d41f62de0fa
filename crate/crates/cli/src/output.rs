//! Artifact writing: JSON with a metadata block, CSV tables and aligned
//! console summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliResult;

pub const TOOL: &str = "lowfreq";

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    config: &'a C,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Document<'a, C: Serialize, R: Serialize> {
    metadata: Metadata<'a, C>,
    result: &'a R,
}

pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `{metadata, result}` as pretty JSON.
    pub fn json<C: Serialize, R: Serialize>(
        &self,
        name: &str,
        command: &str,
        config: &C,
        seed: Option<u64>,
        result: &R,
    ) -> CliResult<PathBuf> {
        let doc = Document {
            metadata: Metadata {
                tool: TOOL,
                version: env!("CARGO_PKG_VERSION"),
                core_version: lowfreq::VERSION,
                command,
                config,
                seed,
            },
            result,
        };
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()?;
        Ok(path)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let path = self.path(name);
        write_csv(&path, header, rows)?;
        Ok(path)
    }

    pub fn text(&self, name: &str, body: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Prints rows as a right-aligned table under a header.
pub fn table(header: &[&str], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (k, c) in r.iter().enumerate() {
            width[k] = width[k].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == 0 {
                    format!("{c:<w$}", w = width[k])
                } else {
                    format!("{c:>w$}", w = width[k])
                }
            })
            .collect();
        println!("{}", parts.join("  "));
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
}

pub fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}
