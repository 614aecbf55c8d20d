//! Delimited text input and output.
//!
//! Input is comma-separated with a header row of column names. Lines
//! starting with `#` are comments; output files use them to record the
//! configuration that produced them.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use lgpc_core::DataMatrix;

use crate::error::{CliError, CliResult};

/// Opens `path` for reading, `-` meaning standard input.
fn open_input(path: &Path) -> CliResult<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin()));
    }
    File::open(path)
        .map(|f| Box::new(f) as Box<dyn Read>)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Parses a numeric table. Errors name the line and column of the first
/// offending cell.
pub fn read_table_from<R: Read>(reader: R, source: &str) -> CliResult<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{source}: cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(CliError::input(format!("{source}: header has empty column names")));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::input(format!("{source}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(CliError::input(format!(
                "{source}: line {line}: expected {} fields, found {}",
                names.len(),
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::input(format!(
                    "{source}: line {line}, column {} ('{}'): cannot parse '{cell}' as a finite number",
                    j + 1,
                    names[j]
                ))
            })?;
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::input(format!("{source}: no data rows")));
    }
    Ok(DataMatrix::new(names, columns)?)
}

pub fn read_table(path: &Path) -> CliResult<DataMatrix> {
    read_table_from(open_input(path)?, &path.display().to_string())
}

/// Formats `x` with at most `digits` significant digits, without an
/// exponent for ordinary magnitudes.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x);
    format!("{rounded}")
}

/// Destination that is either a file or standard output (`None` or `-`).
pub struct Output {
    inner: Box<dyn Write>,
    path: Option<PathBuf>,
}

impl Output {
    pub fn create(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) if p != Path::new("-") => {
                let f = File::create(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })?;
                Ok(Output { inner: Box::new(BufWriter::new(f)), path: Some(p.to_path_buf()) })
            }
            _ => Ok(Output { inner: Box::new(BufWriter::new(io::stdout())), path: None }),
        }
    }

    fn wrap(&self, source: io::Error) -> CliError {
        CliError::Io { path: self.path.clone().unwrap_or_else(|| PathBuf::from("<stdout>")), source }
    }

    pub fn write_str(&mut self, s: &str) -> CliResult<()> {
        self.inner.write_all(s.as_bytes()).map_err(|e| self.wrap(e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner.flush().map_err(|e| self.wrap(e))
    }
}

/// `# key=value` lines.
pub fn header_lines(config: &[(String, String)]) -> String {
    config.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

/// Writes a table of pre-formatted cells.
pub fn write_rows(out: &mut Output, names: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::input(format!("cannot format output: {e}"));
    w.write_record(names).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(format!("cannot format output: {e}")))?;
    out.write_str(&String::from_utf8_lossy(&bytes))
}

/// Writes numeric columns with 15 significant digits.
pub fn write_columns(out: &mut Output, names: &[String], columns: &[Vec<f64>]) -> CliResult<()> {
    let n = columns.first().map_or(0, Vec::len);
    let rows: Vec<Vec<String>> =
        (0..n).map(|i| columns.iter().map(|c| format_sig(c[i], 15)).collect()).collect();
    write_rows(out, names, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_reports_bad_cells() {
        let text = "# note\na,b\n1,2\n3, 4\n";
        let d = read_table_from(text.as_bytes(), "t").unwrap();
        assert_eq!(d.columns, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
        let err = read_table_from("a,b\n1,2\n3,x\n".as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("column 2") && err.contains("'b'"), "{err}");
        let err = read_table_from("a,b\n1,2\n3\n".as_bytes(), "t").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.1234567890123456789, 15), "0.123456789012346");
        assert_eq!(format_sig(-2.0, 15), "-2");
        assert_eq!(format_sig(1.0 / 3.0, 3), "0.333");
    }
}
