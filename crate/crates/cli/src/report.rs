//! Deterministic CSV tables and the JSON provenance/summary block.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::I(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::I(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:.16e}"),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }
}

/// Column name and the (module, operation) that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub module: String,
    pub operation: String,
}

pub fn col(name: &str, module: &str, operation: &str) -> Column {
    Column {
        name: name.into(),
        module: module.into(),
        operation: operation.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub seed: u64,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, seed: u64, columns: Vec<Column>) -> Self {
        Table {
            name: name.into(),
            seed,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width of table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            writeln!(s, "{}", line.join(",")).unwrap();
        }
        s
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    fn provenance(&self) -> Value {
        json!({ "file": self.file_name(), "seed": self.seed, "columns": self.columns })
    }
}

/// Pre-rendered CSV emitted by a library type, with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub seed: u64,
    pub module: String,
    pub operation: String,
    pub csv: String,
}

impl RawTable {
    fn provenance(&self) -> Value {
        let header = self.csv.lines().next().unwrap_or("");
        let columns: Vec<Column> = header
            .split(',')
            .map(|c| col(c, &self.module, &self.operation))
            .collect();
        json!({ "file": format!("{}.csv", self.name), "seed": self.seed, "columns": columns })
    }
}

/// Everything a subcommand writes.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub command: String,
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub raw: Vec<RawTable>,
    pub summary: Value,
    pub passed: bool,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn summary_json(&self) -> Value {
        let provenance: Vec<Value> = self
            .tables
            .iter()
            .map(Table::provenance)
            .chain(self.raw.iter().map(RawTable::provenance))
            .collect();
        json!({
            "command": self.command,
            "seed": self.config.seed,
            "config": self.config,
            "passed": self.passed,
            "warnings": self.warnings,
            "summary": self.summary,
            "provenance": provenance,
        })
    }

    /// Writes every table and `summary.json` under `dir/command`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let dir = dir.join(&self.command);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &self.tables {
            std::fs::write(dir.join(t.file_name()), t.to_csv())?;
        }
        for t in &self.raw {
            std::fs::write(dir.join(format!("{}.csv", t.name)), &t.csv)?;
        }
        let mut text = serde_json::to_string_pretty(&self.summary_json())?;
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text)?;
        Ok(())
    }
}
