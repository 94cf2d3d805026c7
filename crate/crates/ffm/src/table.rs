//! CSV input and output for function batches.
//!
//! Input is comma separated with `.` decimals. A first row with any
//! non-numeric, non-empty cell is taken as a header and skipped. Cells that
//! are empty, `NA` or `NaN` count as missing. Rows holding a missing cell are
//! an error unless `drop_missing` is set, in which case they are removed and
//! the count is recorded in the dataset provenance.

use std::io::Read;
use std::path::Path;

use ffm_core::batch::FunctionBatch;
use ffm_core::data::{Dataset, Provenance};
use ffm_core::gaussian::{Grid, GridKind};

use crate::config::Layout;
use crate::error::{CliError, CliResult};

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// One function per row after applying the layout.
    pub rows: Vec<Vec<f64>>,
    pub dropped: usize,
}

/// Parses CSV text into functions, one per row (or per column for `Cols`).
pub fn parse<R: Read>(input: R, layout: Layout, drop_missing: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("csv record {}: {e}", i + 1)))?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let numeric = |c: &str| is_missing(c) || c.parse::<f64>().is_ok();
    if records.first().is_some_and(|r| r.iter().any(|c| !numeric(c))) {
        records.remove(0);
    }
    let width = records.first().map(Vec::len).unwrap_or(0);
    if records.is_empty() || width == 0 {
        return Err(CliError::Data("csv holds no data rows".into()));
    }
    let mut cells: Vec<Vec<Option<f64>>> = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.len() != width {
            return Err(CliError::Data(format!(
                "ragged csv: data row {} has {} cells, expected {width}",
                i + 1,
                r.len()
            )));
        }
        let row = r
            .iter()
            .map(|c| {
                if is_missing(c) {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| CliError::Data(format!("non-numeric cell `{c}` in data row {}", i + 1)))
                }
            })
            .collect::<CliResult<Vec<_>>>()?;
        cells.push(row);
    }
    if layout == Layout::Cols {
        cells = (0..width).map(|j| cells.iter().map(|r| r[j]).collect()).collect();
    }
    let total = cells.len();
    let rows: Vec<Vec<f64>> = cells
        .into_iter()
        .filter_map(|r| r.into_iter().collect::<Option<Vec<f64>>>())
        .collect();
    let dropped = total - rows.len();
    if dropped > 0 && !drop_missing {
        return Err(CliError::Data(format!(
            "{dropped} function(s) have missing values; pass --drop-missing to remove them"
        )));
    }
    if rows.is_empty() {
        return Err(CliError::Data("every function had missing values".into()));
    }
    Ok(Table { rows, dropped })
}

/// Loads a CSV file as a dataset on a grid over `[0, 1]`.
pub fn load_dataset(path: &Path, layout: Layout, drop_missing: bool, kind: GridKind) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let table = parse(file, layout, drop_missing)?;
    let n = table.rows[0].len();
    let grid = Grid::new(0.0, 1.0, n, kind).map_err(|e| CliError::Data(e.to_string()))?;
    let batch = FunctionBatch::from_rows(&table.rows)?;
    let mut d = Dataset::new(path.display().to_string(), grid, batch, Provenance::Loaded(path.display().to_string()))?;
    if table.dropped > 0 {
        d.provenance.push(Provenance::DroppedMissing { rows: table.dropped });
    }
    Ok(d)
}

/// Reads a row-layout CSV of functions.
pub fn load_batch(path: &Path) -> CliResult<FunctionBatch> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    let table = parse(file, Layout::Rows, false)?;
    Ok(FunctionBatch::from_rows(&table.rows)?)
}

/// Writes one function per row with a `x=<coordinate>` header row.
pub fn write_batch(path: &Path, batch: &FunctionBatch, grid: &Grid) -> CliResult<()> {
    let mut out = String::with_capacity(batch.as_slice().len() * 20);
    let header: Vec<String> = grid.points().iter().map(|x| format!("x={x}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in batch.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

/// Writes named columns of equal length.
pub fn write_columns(path: &Path, columns: &[(&str, &[f64])]) -> CliResult<()> {
    let mut out = columns.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
    out.push('\n');
    let len = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    for i in 0..len {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| c.1.get(i).map_or(String::new(), f64::to_string))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_five_loads() {
        let t = parse("1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n".as_bytes(), Layout::Rows, false).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0].len(), 5);
        assert_eq!(t.rows[2], vec![11.0, 12.0, 13.0, 14.0, 15.0]);
    }

    #[test]
    fn header_is_detected_only_when_non_numeric() {
        let t = parse("a,b\n1,2\n".as_bytes(), Layout::Rows, false).unwrap();
        assert_eq!(t.rows, vec![vec![1.0, 2.0]]);
        let t = parse("0,1\n1,2\n".as_bytes(), Layout::Rows, false).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn column_layout_transposes() {
        let t = parse("1,2\n3,4\n5,6\n".as_bytes(), Layout::Cols, false).unwrap();
        assert_eq!(t.rows, vec![vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]);
    }

    #[test]
    fn bad_input_is_a_data_error() {
        for text in ["1,2\n3\n", "1,2\n3,x\n", ""] {
            let e = parse(text.as_bytes(), Layout::Rows, false).unwrap_err();
            assert_eq!(e.exit_code(), 3, "{text:?}: {e}");
        }
    }

    #[test]
    fn missing_rows_are_counted_and_optionally_dropped() {
        let text = "1,2\n,3\nNA,4\n5,6\n";
        let e = parse(text.as_bytes(), Layout::Rows, false).unwrap_err();
        assert!(e.to_string().contains("2 function"), "{e}");
        let t = parse(text.as_bytes(), Layout::Rows, true).unwrap();
        assert_eq!(t.dropped, 2);
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
    }

    #[test]
    fn written_batches_read_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let b = FunctionBatch::from_rows(&[vec![0.1, -2.5e-17, 3.0], vec![1.0 / 3.0, 7.0, -0.0]]).unwrap();
        write_batch(&p, &b, &Grid::unit(3).unwrap()).unwrap();
        assert_eq!(load_batch(&p).unwrap(), b);
        let d = load_dataset(&p, Layout::Rows, false, GridKind::HalfOpen).unwrap();
        assert_eq!(d.grid, Grid::unit(3).unwrap());
    }
}
