//! CSV files: comma separated, one header row, `.` decimals, LF endings.
//!
//! Numbers are written with `f64`'s `Display`, the shortest decimal that
//! reads back to the same value.

use std::io::{Read, Write};
use std::path::Path;

use noon_core::analysis::ScanCurve;
use noon_core::source::TvScan;

use crate::error::CliError;

pub const SCAN_HEADER: [&str; 4] = ["tv_um", "rate", "stderr", "r2x2"];
pub const TWO_FOLD_HEADER: [&str; 4] = ["tv_um", "r_ab", "r_ac", "r_bc"];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_error(what: &str, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(what, io),
        other => CliError::Config(format!("{what}: {other:?}")),
    }
}

/// Writes rows of numbers under `header`.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = writer(out);
    w.write_record(header).map_err(|e| csv_error("csv", e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error("csv", e))?;
    }
    w.flush().map_err(|e| CliError::io("csv", e))
}

/// Scan rows `tv_um, rate, stderr, r2x2`. `rate` and `stderr` come from
/// `fourfold`, which may carry injected noise.
pub fn write_scan<W: Write>(out: W, fourfold: &ScanCurve, accidental: &ScanCurve) -> Result<(), CliError> {
    let zeros = vec![0.0; fourfold.len()];
    let err = fourfold.yerr().unwrap_or(&zeros);
    let rows: Vec<Vec<f64>> = (0..fourfold.len())
        .map(|i| vec![fourfold.x()[i], fourfold.y()[i], err[i], accidental.y()[i]])
        .collect();
    write_table(out, &SCAN_HEADER, &rows)
}

pub fn write_two_fold<W: Write>(out: W, scan: &TvScan) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = scan
        .points
        .iter()
        .map(|p| vec![p.t_v, p.two_fold.ab, p.two_fold.ac, p.two_fold.bc])
        .collect();
    write_table(out, &TWO_FOLD_HEADER, &rows)
}

/// A parsed CSV: header names and numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Curve from the first column (delays), the `rate` column (else the
    /// second) and the `stderr` column when present.
    pub fn curve(&self) -> Result<ScanCurve, CliError> {
        if self.columns.len() < 2 {
            return Err(CliError::Config("curve CSV needs at least two columns".into()));
        }
        let y = self.column("rate").unwrap_or(&self.columns[1]).to_vec();
        let yerr = self.column("stderr").map(<[f64]>::to_vec);
        ScanCurve::new(self.columns[0].clone(), y, yerr).map_err(CliError::from)
    }

    /// Curve of `column` against the first column.
    pub fn curve_of(&self, column: &str) -> Result<ScanCurve, CliError> {
        let y = self
            .column(column)
            .ok_or_else(|| CliError::Config(format!("CSV has no {column:?} column")))?;
        ScanCurve::new(self.columns[0].clone(), y.to_vec(), None).map_err(CliError::from)
    }
}

pub fn read_table<R: Read>(input: R, origin: &str) -> Result<Table, CliError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(origin, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(field.parse::<f64>().map_err(|_| {
                CliError::Config(format!("{origin}: row {}: {field:?} is not a number", i + 2))
            })?);
        }
    }
    Ok(Table { header, columns })
}

pub fn read_table_file(path: &Path) -> Result<Table, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    read_table(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_round_trip_is_exact() {
        let x = vec![-40.0, 0.0, 40.0];
        let curve = ScanCurve::new(
            x.clone(),
            vec![1.0 / 3.0, 2.5e-17, 0.1 + 0.2],
            Some(vec![1e-300, 0.0, 7.0]),
        )
        .unwrap();
        let acc = ScanCurve::new(x, vec![0.5, std::f64::consts::PI, 1e10], None).unwrap();
        let mut buf = Vec::new();
        write_scan(&mut buf, &curve, &acc).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tv_um,rate,stderr,r2x2\n"));
        assert!(!text.contains('\r'));
        let table = read_table(buf.as_slice(), "mem").unwrap();
        assert_eq!(table.curve().unwrap(), curve);
        assert_eq!(table.curve_of("r2x2").unwrap().y(), acc.y());
    }

    #[test]
    fn bad_numbers_are_config_errors() {
        let err = read_table("a,b\n1,x\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }
}
