//! File formats.
//!
//! A sample file is a CSV table whose first row holds the grid locations and
//! whose remaining rows are trajectories. Numbers are written with 17
//! significant digits so that parsing a written file gives back the same
//! floats. Provenance goes into a JSON sidecar ([`SampleMetadata`]).
//!
//! Query strings select a tail copula evaluation point, e.g. `t=0,3;x=1,1.5`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimate::TailCopulaQuery;
use crate::grid::Grid;
use crate::sample::{FunctionalSample, SampleMetadata};

/// Locale-independent scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_error(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column,
        message: message.into(),
    }
}

fn parse_number(field: &str, row: usize, column: usize) -> Result<f64> {
    let field = field.trim();
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(row, column, format!("'{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(row, column, format!("'{field}' is not finite")));
    }
    Ok(v)
}

pub fn write_sample_csv<W: Write>(sample: &FunctionalSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(sample.grid().locations().iter().map(|&t| format_f64(t)))
        .map_err(csv_err)?;
    for row in sample.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a sample file. Rows and columns in errors are 1-based, with the
/// header on row 1.
pub fn read_sample_csv<R: Read>(input: R) -> Result<FunctionalSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut records = reader.records();
    let mut next = |row: usize| -> Result<Option<csv::StringRecord>> {
        match records.next() {
            None => Ok(None),
            Some(Ok(r)) => Ok(Some(r)),
            Some(Err(e)) => {
                let row = e.position().map_or(row, |p| p.record() as usize + 1);
                Err(parse_error(row, 0, e.to_string()))
            }
        }
    };
    let header = next(1)?.ok_or_else(|| parse_error(1, 0, "empty file"))?;
    let locations = header
        .iter()
        .enumerate()
        .map(|(j, f)| parse_number(f, 1, j + 1))
        .collect::<Result<Vec<f64>>>()?;
    let grid = Grid::new(locations).map_err(|e| parse_error(1, 0, e.to_string()))?;
    let m = grid.len();
    let mut values = Vec::new();
    let mut row = 1;
    while let Some(record) = next(row + 1)? {
        row += 1;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != m {
            return Err(parse_error(
                row,
                record.len().min(m) + 1,
                format!("expected {m} fields, found {}", record.len()),
            ));
        }
        for (j, f) in record.iter().enumerate() {
            values.push(parse_number(f, row, j + 1)?);
        }
    }
    if values.is_empty() {
        return Err(parse_error(row + 1, 0, "no observations after the header"));
    }
    FunctionalSample::new(values, grid)
}

/// [`read_sample_csv`] on an in-memory string.
pub fn parse_sample_csv(text: &str) -> Result<FunctionalSample> {
    read_sample_csv(text.as_bytes())
}

pub fn write_metadata<W: Write>(meta: &SampleMetadata, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, meta)?;
    Ok(())
}

pub fn parse_metadata(text: &str) -> Result<SampleMetadata> {
    let meta: SampleMetadata = serde_json::from_str(text)?;
    if meta.n == 0 {
        return Err(Error::Validation(
            "metadata declares an empty sample".into(),
        ));
    }
    Ok(meta)
}

/// Locations and levels of a tail copula query, before `k` is known.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub t_indices: Vec<usize>,
    pub x: Vec<f64>,
}

impl QuerySpec {
    pub fn with_k(&self, k: f64) -> Result<TailCopulaQuery> {
        TailCopulaQuery::new(self.t_indices.clone(), self.x.clone(), k)
    }
}

/// Parses `t=<indices>;x=<levels>` (comma-separated, in either order). When
/// `x` is omitted every level is 1.
pub fn parse_query(text: &str) -> Result<QuerySpec> {
    let bad = |msg: String| Error::Validation(format!("query '{text}': {msg}"));
    let mut t_indices = None;
    let mut x = None;
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, list) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("'{part}' is not key=value")))?;
        let items = list.split(',').map(str::trim);
        match key.trim() {
            "t" if t_indices.is_none() => {
                let v = items
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| bad(format!("bad index '{s}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                t_indices = Some(v);
            }
            "x" if x.is_none() => {
                let v = items
                    .map(|s| match s.parse::<f64>() {
                        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                        _ => Err(bad(format!("bad level '{s}'"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                x = Some(v);
            }
            k => return Err(bad(format!("unexpected or repeated key '{k}'"))),
        }
    }
    let t_indices = t_indices.ok_or_else(|| bad("missing t=".into()))?;
    let x = x.unwrap_or_else(|| vec![1.0; t_indices.len()]);
    if x.len() != t_indices.len() {
        return Err(bad(format!(
            "{} indices but {} levels",
            t_indices.len(),
            x.len()
        )));
    }
    for (a, t) in t_indices.iter().enumerate() {
        if t_indices[..a].contains(t) {
            return Err(bad(format!("index {t} repeated")));
        }
    }
    Ok(QuerySpec { t_indices, x })
}
