//! Result rows in the fixed CSV schema, with a `#` metadata header and a
//! JSON mirror.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_COLUMNS: [&str; 11] = [
    "walk", "shape", "R", "N", "method", "value", "stderr", "seed", "tol", "runtime_ms", "notes",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResultRow {
    pub walk: String,
    pub shape: String,
    #[serde(rename = "R")]
    pub r: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub method: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Left empty unless timing is requested, so reruns stay byte-identical.
    pub runtime_ms: Option<u64>,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub walk: String,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Further `key=value` pairs, in insertion order.
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str, walk: &str) -> Self {
        Metadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            walk: walk.to_string(),
            seed: None,
            tol: None,
            extra: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tol(mut self, tol: Option<f64>) -> Self {
        self.tol = tol;
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    fn lines(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut out = vec![
            format!("# {} {}", self.tool, self.version),
            format!("# command={}", self.command),
            format!("# walk={}", self.walk),
            format!("# seed={}", opt(self.seed.map(|s| s.to_string()))),
            format!("# tol={}", opt(self.tol.map(|t| format!("{t:e}")))),
        ];
        out.extend(self.extra.iter().map(|(k, v)| format!("# {k}={v}")));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(crate::error::Error::Parse(format!("unknown output format {other:?}"))),
        }
    }
}

impl Report {
    pub fn new(metadata: Metadata) -> Self {
        Report {
            metadata,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for line in self.metadata.lines() {
            writeln!(out, "{line}")?;
        }
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        wtr.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn write<W: Write>(&self, format: OutputFormat, out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(out),
            OutputFormat::Json => self.write_json(out),
        }
    }

    /// Parses the output of [`Report::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Vec<ResultRow>> {
        let body: String = input
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l + "\n")
            .collect();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}
