//! Tables, the invariant ledger and the on-disk formats.
//!
//! Files written by [`Report::write`]:
//! - `report.json`: format version, environment fingerprint, every table and
//!   the ledger;
//! - `<experiment>_<table>.csv`: one per table, reals as `{:.16e}`;
//! - `curves.csv`: long format `experiment,series,x,y` for plotting.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, LabResult};

/// Bumped whenever a CSV column or JSON key changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format!("{v:.16e}"),
        }
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; every cell must be finite.
    pub fn push(&mut self, row: Vec<Cell>) -> LabResult<()> {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        if let Some((i, _)) = row.iter().enumerate().find(|(_, c)| matches!(c, Cell::Real(v) if !v.is_finite())) {
            return Err(LabError::Config(format!(
                "non-finite value in table '{}', column '{}'",
                self.name, self.columns[i]
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// One evaluated invariant. `slack >= 0` exactly when the check passed;
/// errors carry no measurement and a `detail` message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub experiment: String,
    pub invariant: String,
    pub passed: bool,
    pub measured: Option<f64>,
    pub limit: Option<f64>,
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub kind: String,
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub curves: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub s_min: f64,
    pub s_max: f64,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub version: String,
    pub seed: u64,
    pub d: u32,
    pub reference: String,
    pub grid: GridInfo,
    pub tolerances: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub environment: Environment,
    pub experiments: Vec<ExperimentResult>,
    pub ledger: Vec<LedgerEntry>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.ledger.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.ledger.iter().filter(|e| !e.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("experiment,series,x,y\n");
        for e in &self.experiments {
            for c in &e.curves {
                let _ = writeln!(out, "{},{},{:.16e},{:.16e}", e.name, c.series, c.x, c.y);
            }
        }
        out
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> LabResult<Vec<String>> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| LabError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files = vec![
            ("report.json".to_string(), self.to_json()),
            ("curves.csv".to_string(), self.curves_csv()),
        ];
        for e in &self.experiments {
            for t in &e.tables {
                files.push((format!("{}_{}.csv", e.name, t.name), t.to_csv()));
            }
        }
        for (name, body) in &files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io(&p))?;
        }
        Ok(files.into_iter().map(|f| f.0).collect())
    }

    /// One line per ledger entry.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for e in &self.ledger {
            let status = if e.passed { "PASS" } else { "FAIL" };
            let _ = write!(out, "{status} {}.{}", e.experiment, e.invariant);
            if let (Some(m), Some(l)) = (e.measured, e.limit) {
                let _ = write!(out, "  measured {m:.6e}  limit {l:.6e}");
            } else if let Some(m) = e.measured {
                let _ = write!(out, "  measured {m:.6e}");
            }
            if let Some(d) = &e.detail {
                let _ = write!(out, "  ({d})");
            }
            out.push('\n');
        }
        out
    }
}
