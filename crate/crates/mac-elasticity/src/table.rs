//! Convergence tables as data: a shared CSV schema for tables produced by
//! [`crate::mms::ConvergenceReport::to_csv`] and for the reference tables
//! shipped with the crate, plus a cell-by-cell comparison.
//!
//! The schema is `level,nx,ny[,nz],component,norm,error,rate,residual` with
//! `rate` empty on the coarsest level and `residual` empty in reference
//! transcriptions. Comparison matches rows on mesh size and component, checks
//! error cells by relative difference and rate cells by absolute difference,
//! and names every offending cell.

use std::fmt;

use crate::error::{Error, Result};

/// One `(mesh, component)` cell group of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub level: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: Option<usize>,
    pub component: String,
    pub norm: String,
    pub error: f64,
    pub rate: Option<f64>,
    pub residual: Option<f64>,
}

impl TableRow {
    /// Mesh-size and component key used to align two tables.
    pub fn key(&self) -> (usize, usize, Option<usize>, &str) {
        (self.nx, self.ny, self.nz, self.component.as_str())
    }
}

/// A parsed convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub dims: usize,
    pub rows: Vec<TableRow>,
}

const HEADER_2D: &str = "level,nx,ny,component,norm,error,rate,residual";
const HEADER_3D: &str = "level,nx,ny,nz,component,norm,error,rate,residual";

fn parse_cell<T: std::str::FromStr>(line: usize, name: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {name} value {text:?}")))
}

fn parse_optional(line: usize, name: &str, text: &str) -> Result<Option<f64>> {
    let text = text.trim();
    if text.is_empty() {
        Ok(None)
    } else {
        parse_cell(line, name, text).map(Some)
    }
}

impl Table {
    /// Parses CSV text in the shared schema. The header row decides whether
    /// the table is 2D or 3D.
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty table".into()))?;
        let dims = match header.trim_end() {
            HEADER_2D => 2,
            HEADER_3D => 3,
            other => {
                return Err(Error::Parse(format!("unrecognized header {other:?}")))
            }
        };
        let columns = if dims == 2 { 8 } else { 9 };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected {columns} columns, got {}",
                    cells.len()
                )));
            }
            let nz = if dims == 3 {
                Some(parse_cell(lineno, "nz", cells[3])?)
            } else {
                None
            };
            let base = if dims == 3 { 4 } else { 3 };
            let error: f64 = parse_cell(lineno, "error", cells[base + 2])?;
            if !error.is_finite() || error < 0.0 {
                return Err(Error::Parse(format!(
                    "line {lineno}: error cell must be finite and nonnegative, got {error}"
                )));
            }
            rows.push(TableRow {
                level: parse_cell(lineno, "level", cells[0])?,
                nx: parse_cell(lineno, "nx", cells[1])?,
                ny: parse_cell(lineno, "ny", cells[2])?,
                nz,
                component: cells[base].trim().to_string(),
                norm: cells[base + 1].trim().to_string(),
                error,
                rate: parse_optional(lineno, "rate", cells[base + 3])?,
                residual: parse_optional(lineno, "residual", cells[base + 4])?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse("table has no data rows".into()));
        }
        Ok(Table { dims, rows })
    }

    /// Serializes back into the shared schema.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.dims == 2 { HEADER_2D } else { HEADER_3D });
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.level.to_string());
            out.push(',');
            out.push_str(&r.nx.to_string());
            out.push(',');
            out.push_str(&r.ny.to_string());
            if let Some(nz) = r.nz {
                out.push(',');
                out.push_str(&nz.to_string());
            }
            out.push(',');
            out.push_str(&r.component);
            out.push(',');
            out.push_str(&r.norm);
            out.push_str(&format!(",{:e}", r.error));
            out.push(',');
            if let Some(rate) = r.rate {
                out.push_str(&format!("{rate}"));
            }
            out.push(',');
            if let Some(res) = r.residual {
                out.push_str(&format!("{res:e}"));
            }
            out.push('\n');
        }
        out
    }

    /// A reference table shipped with the crate, by tag (for example "6.3").
    pub fn reference(tag: &str) -> Option<Table> {
        let text = reference_csv(tag)?;
        Some(Table::parse(text).expect("embedded reference tables parse"))
    }
}

macro_rules! reference_tables {
    ($($tag:literal => $file:literal),* $(,)?) => {
        /// Tags of the embedded reference tables.
        pub const REFERENCE_TAGS: &[&str] = &[$($tag),*];

        fn reference_csv(tag: &str) -> Option<&'static str> {
            match tag {
                $($tag => Some(include_str!(concat!("../data/", $file))),)*
                _ => None,
            }
        }
    };
}

reference_tables! {
    "6.3" => "table6_3.csv",
    "6.4" => "table6_4.csv",
    "6.7" => "table6_7.csv",
    "6.8" => "table6_8.csv",
    "6.17" => "table6_17.csv",
    "6.18" => "table6_18.csv",
    "6.19" => "table6_19.csv",
    "6.20" => "table6_20.csv",
    "6.21" => "table6_21.csv",
    "6.22" => "table6_22.csv",
}

/// Which cell of a row a difference refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Error,
    Rate,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Error => "error",
            CellKind::Rate => "rate",
        })
    }
}

/// One compared cell that exceeded its tolerance.
#[derive(Debug, Clone)]
pub struct CellDiff {
    pub nx: usize,
    pub ny: usize,
    pub nz: Option<usize>,
    pub component: String,
    pub kind: CellKind,
    pub produced: f64,
    pub reference: f64,
    /// Relative difference for error cells, absolute for rate cells.
    pub diff: f64,
}

impl fmt::Display for CellDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}x{}", self.nx, self.ny)?;
        if let Some(nz) = self.nz {
            write!(f, "x{nz}")?;
        }
        write!(
            f,
            " {} {}: produced {:.4e} vs reference {:.4e} (diff {:.3e})",
            self.component, self.kind, self.produced, self.reference, self.diff
        )
    }
}

/// Outcome of [`compare`]: counts of checked cells and every failing cell.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub error_cells: usize,
    pub rate_cells: usize,
    pub failures: Vec<CellDiff>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} error cells and {} rate cells compared: {}",
            self.error_cells,
            self.rate_cells,
            if self.passed() { "pass" } else { "fail" }
        )?;
        for d in &self.failures {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

/// Compares the cells both tables have, on the intersection of their
/// `(mesh, component)` keys. Error cells must agree to `error_tol` relative,
/// rate cells to `rate_tol` absolute; a rate is only compared when both
/// tables supply one.
pub fn compare(
    produced: &Table,
    reference: &Table,
    error_tol: f64,
    rate_tol: f64,
) -> Result<CompareReport> {
    if produced.dims != reference.dims {
        return Err(Error::InvalidArgument(format!(
            "schema mismatch: comparing a {}D table against a {}D table",
            produced.dims, reference.dims
        )));
    }
    let mut report = CompareReport {
        error_cells: 0,
        rate_cells: 0,
        failures: Vec::new(),
    };
    for p in &produced.rows {
        let Some(r) = reference.rows.iter().find(|r| r.key() == p.key()) else {
            continue;
        };
        report.error_cells += 1;
        let scale = r.error.abs().max(f64::MIN_POSITIVE);
        let rel = (p.error - r.error).abs() / scale;
        if rel > error_tol {
            report.failures.push(CellDiff {
                nx: p.nx,
                ny: p.ny,
                nz: p.nz,
                component: p.component.clone(),
                kind: CellKind::Error,
                produced: p.error,
                reference: r.error,
                diff: rel,
            });
        }
        if let (Some(pr), Some(rr)) = (p.rate, r.rate) {
            report.rate_cells += 1;
            let diff = (pr - rr).abs();
            if diff > rate_tol {
                report.failures.push(CellDiff {
                    nx: p.nx,
                    ny: p.ny,
                    nz: p.nz,
                    component: p.component.clone(),
                    kind: CellKind::Rate,
                    produced: pr,
                    reference: rr,
                    diff,
                });
            }
        }
    }
    if report.error_cells == 0 {
        return Err(Error::InvalidArgument(
            "the tables share no (mesh, component) cells".into(),
        ));
    }
    Ok(report)
}
