//! Delimited text input and output for expression matrices.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, ScreenError};
use crate::matrix::ExpressionMatrix;
use crate::scalar::Scalar;

/// Tab for `.tsv`/`.tab`/`.txt`, comma otherwise.
pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "tsv" || ext == "tab" || ext == "txt" => b'\t',
        _ => b',',
    }
}

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|source| ScreenError::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

/// Reads a delimited matrix: a header row of variable names, then one row
/// per sample. The file is scanned twice so the values can be written
/// straight into column-major storage.
pub fn load_matrix<T: Scalar>(path: &Path, delimiter: Option<u8>) -> Result<ExpressionMatrix<T>> {
    let delimiter = delimiter.unwrap_or_else(|| delimiter_for(path));
    let display = path.display().to_string();
    let parse_err = |line: u64, column: usize, message: String| ScreenError::Parse {
        path: display.clone(),
        line,
        column,
        message,
    };

    let mut rdr = reader(path, delimiter)?;
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let p = names.len();
    let mut seen = HashSet::with_capacity(p);
    for (c, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(parse_err(1, c + 1, "empty variable name".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(parse_err(1, c + 1, format!("duplicate variable name `{name}`")));
        }
    }
    let mut record = csv::ByteRecord::new();
    let mut n = 0usize;
    while rdr.read_byte_record(&mut record)? {
        n += 1;
    }

    let mut values = vec![T::zero(); n * p];
    let mut rdr = reader(path, delimiter)?;
    let mut row = 0usize;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(row as u64 + 2, |pos| pos.line());
        if record.len() != p {
            return Err(parse_err(line, record.len().min(p) + 1, format!("expected {p} fields, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("cannot parse `{field}` as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("non-finite value `{field}`")));
            }
            values[c * n + row] = T::of_f64(v);
        }
        row += 1;
    }
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    Ok(ExpressionMatrix::from_columns(n, p, values, Some(names))?.with_label(label))
}

/// Errors with the first variable whose name differs between the inputs.
pub fn check_same_variables<T: Scalar>(x1: &ExpressionMatrix<T>, x2: &ExpressionMatrix<T>) -> Result<()> {
    let (a, b) = (x1.variable_names(), x2.variable_names());
    if let Some(pos) = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i)) {
        return Err(ScreenError::Dimension(format!(
            "variable headers differ at column {}: `{}` vs `{}`",
            pos + 1,
            a.get(pos).map_or("<missing>", String::as_str),
            b.get(pos).map_or("<missing>", String::as_str)
        )));
    }
    Ok(())
}

pub fn write_matrix<T: Scalar>(path: &Path, x: &ExpressionMatrix<T>, delimiter: Option<u8>) -> Result<()> {
    let delimiter = delimiter.unwrap_or_else(|| delimiter_for(path)) as char;
    let file = File::create(path).map_err(|source| ScreenError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let sep = delimiter.to_string();
    writeln!(w, "{}", x.variable_names().join(&sep))?;
    let mut line = String::new();
    for r in 0..x.n_samples() {
        line.clear();
        for j in 0..x.n_variables() {
            if j > 0 {
                line.push(delimiter);
            }
            line.push_str(&format!("{:.10}", x.get(r, j).as_f64()));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
