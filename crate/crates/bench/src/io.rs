//! Delimited-text matrices: comma or tab separated (detected from the first
//! line), rows are categories or covariates, columns are samples. A header
//! row of sample names and a leading column of row names are both optional
//! and detected from whether those cells parse as numbers.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use mlnltp::CountMatrix;
use nalgebra::DMatrix;

use crate::error::{BenchError, Result, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    pub values: DMatrix<T>,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
}

impl<T> Table<T> {
    pub fn new(values: DMatrix<T>) -> Self {
        Table { values, row_names: None, col_names: None }
    }

    /// Row names, or `prefix1, prefix2, …` when the file had none.
    pub fn row_labels(&self, prefix: &str) -> Vec<String> {
        self.row_names.clone().unwrap_or_else(|| (1..=self.values.nrows()).map(|i| format!("{prefix}{i}")).collect())
    }

    pub fn col_labels(&self, prefix: &str) -> Vec<String> {
        self.col_names.clone().unwrap_or_else(|| (1..=self.values.ncols()).map(|i| format!("{prefix}{i}")).collect())
    }
}

struct RawTable {
    /// Cells with their 1-based file row, 1-based file column.
    rows: Vec<(usize, Vec<String>)>,
    header: Option<Vec<String>>,
    row_names: Option<Vec<String>>,
    first_col: usize,
}

fn is_number(cell: &str) -> bool {
    cell.parse::<f64>().is_ok()
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::file(path, e))?;
    let delimiter = if text.lines().next().is_some_and(|l| l.contains('\t')) { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| BenchError::Parse {
            path: path.display().to_string(),
            row: e.position().map_or(i + 1, |p| p.line() as usize),
            col: 0,
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push((line, record.iter().map(str::to_owned).collect::<Vec<_>>()));
    }
    if rows.is_empty() {
        return Err(BenchError::file(path, "no data rows"));
    }

    let first = &rows[0].1;
    let header = if first.iter().skip(1).all(|c| !is_number(c)) && (first.len() > 1 || !is_number(&first[0])) {
        Some(rows.remove(0).1)
    } else {
        None
    };
    if rows.is_empty() {
        return Err(BenchError::file(path, "header row but no data rows"));
    }
    let has_row_names = !is_number(&rows[0].1[0]);
    let first_col = usize::from(has_row_names);
    let width = rows[0].1.len();
    for (line, cells) in &rows {
        if cells.len() != width {
            return Err(BenchError::Parse {
                path: path.display().to_string(),
                row: *line,
                col: cells.len().min(width) + 1,
                reason: format!("expected {width} cells, found {}", cells.len()),
            });
        }
    }
    let row_names = has_row_names.then(|| rows.iter().map(|(_, c)| c[0].clone()).collect());
    let header = match header {
        Some(h) if h.len() == width => Some(h[first_col..].to_vec()),
        Some(h) if h.len() + first_col == width => Some(h),
        Some(h) => {
            return Err(BenchError::Parse {
                path: path.display().to_string(),
                row: 1,
                col: h.len(),
                reason: format!("header has {} names for {} data columns", h.len(), width - first_col),
            })
        }
        None => None,
    };
    Ok(RawTable { rows, header, row_names, first_col })
}

fn parse_table<T: nalgebra::Scalar + Default>(
    path: &Path,
    parse: impl Fn(&str) -> std::result::Result<T, (bool, String)>,
) -> Result<Table<T>> {
    let raw = read_raw(path)?;
    let (nrows, ncols) = (raw.rows.len(), raw.rows[0].1.len() - raw.first_col);
    if ncols == 0 {
        return Err(BenchError::file(path, "no numeric columns"));
    }
    let mut values = DMatrix::from_element(nrows, ncols, T::default());
    for (i, (line, cells)) in raw.rows.iter().enumerate() {
        for j in 0..ncols {
            let cell = &cells[j + raw.first_col];
            values[(i, j)] = parse(cell).map_err(|(domain, reason)| {
                let (path, row, col) = (path.display().to_string(), *line, j + raw.first_col + 1);
                if domain {
                    BenchError::Parse { path, row, col, reason: format!("domain error: {reason}") }
                } else {
                    BenchError::Parse { path, row, col, reason }
                }
            })?;
        }
    }
    Ok(Table { values, row_names: raw.row_names, col_names: raw.header })
}

fn parse_count(cell: &str) -> std::result::Result<u64, (bool, String)> {
    if let Ok(v) = cell.parse::<u64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v < 0.0 => Err((true, format!("negative count {cell:?}"))),
        Ok(v) if v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err((false, format!("{cell:?} is not a nonnegative integer count"))),
    }
}

fn parse_real(cell: &str) -> std::result::Result<f64, (bool, String)> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err((false, format!("{cell:?} is not a finite number"))),
    }
}

pub fn load_count_table(path: &Path) -> Result<Table<u64>> {
    parse_table(path, parse_count)
}

pub fn load_covariate_table(path: &Path) -> Result<Table<f64>> {
    parse_table(path, parse_real)
}

pub fn load_counts(path: &Path) -> Result<CountMatrix> {
    CountMatrix::new(load_count_table(path)?.values).stage("counts")
}

pub fn load_covariates(path: &Path) -> Result<DMatrix<f64>> {
    Ok(load_covariate_table(path)?.values)
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| BenchError::file(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BenchError::file(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| BenchError::file(path, e))?;
    tmp.persist(path).map_err(|e| BenchError::file(path, e.error))?;
    Ok(())
}

/// Shortest text that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

fn render<T: nalgebra::Scalar>(table: &Table<T>, fmt: impl Fn(&T) -> String) -> String {
    let mut out = String::new();
    if let Some(names) = &table.col_names {
        if table.row_names.is_some() {
            out.push(',');
        }
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for i in 0..table.values.nrows() {
        if let Some(names) = &table.row_names {
            out.push_str(&names[i]);
            out.push(',');
        }
        let cells: Vec<String> = table.values.row(i).iter().map(&fmt).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_count_table(path: &Path, table: &Table<u64>) -> Result<()> {
    write_atomic(path, &render(table, |v| v.to_string()))
}

pub fn write_real_table(path: &Path, table: &Table<f64>) -> Result<()> {
    write_atomic(path, &render(table, |v| format_real(*v)))
}

/// A delimited output table: one header line naming the columns, then rows.
#[derive(Debug, Clone, Default)]
pub struct OutputTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl OutputTable {
    pub fn new(columns: &[&str]) -> Self {
        OutputTable { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.render())
    }
}
