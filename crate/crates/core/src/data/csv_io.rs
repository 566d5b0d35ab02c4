//! `label,f0,f1,...` CSV files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mapping::LabeledDataset;
use crate::nn::Matrix;

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Read a labelled CSV; `name` is used in diagnostics.
///
/// Labels are remapped to `[0, C)` in ascending order of their integer value.
pub fn read_csv<R: Read>(reader: R, name: &str) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(parse_err(name, 1, "empty file")),
        Some(r) => r.map_err(|e| parse_err(name, 1, e.to_string()))?,
    };
    if header.get(0).map(str::trim) != Some("label") {
        return Err(parse_err(name, 1, "header must start with 'label'"));
    }
    let width = header.len();
    if width < 2 {
        return Err(parse_err(name, 1, "header has no feature columns"));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(
                name,
                line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let label = rec[0]
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(name, line, format!("label '{}' is not an integer", &rec[0])))?;
        labels.push(label);
        for (k, field) in rec.iter().enumerate().skip(1) {
            let v = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(name, line, format!("column {k}: '{field}' is not a finite number"))
                })?;
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(name, 2, "no data rows"));
    }
    let x = Matrix::from_vec(labels.len(), width - 1, data)?;
    LabeledDataset::from_raw_labels(x, &labels)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string())
}

/// Write with the original label values and shortest round-trip float formatting.
pub fn write_csv<W: Write>(dataset: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    let mut header = vec!["label".to_string()];
    header.extend((0..dataset.dim()).map(|k| format!("f{k}")));
    let wrap = |e: csv::Error| Error::io("<csv>", to_io(e));
    w.write_record(&header).map_err(wrap)?;
    for (row, &y) in dataset.x().row_iter().zip(dataset.y()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(dataset.label_names()[y].to_string());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn remaps_labels() {
        let ds = read_csv("label,f0\n5,0.1\n9,0.2\n5,0.3\n".as_bytes(), "t").unwrap();
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.y(), &[0, 1, 0]);
        assert_eq!(ds.label_names(), &[5, 9]);
    }

    #[test]
    fn empty_and_header_only_fail() {
        assert!(matches!(read_csv("".as_bytes(), "t"), Err(Error::Parse { .. })));
        assert!(matches!(read_csv("label,f0\n".as_bytes(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = read_csv("label,f0,f1\n1,0.5,0.2\n2,0.1\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_csv("label,f0\n1,0.5\n2,abc\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_csv("label,f0\nx,0.5\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            rows in prop::collection::vec(
                (-3i64..40, prop::collection::vec(-1e6f64..1e6, 3)), 1..30)
        ) {
            let labels: Vec<i64> = rows.iter().map(|r| r.0).collect();
            let data: Vec<f64> = rows.iter().flat_map(|r| r.1.clone()).collect();
            let ds = LabeledDataset::from_raw_labels(
                Matrix::from_vec(rows.len(), 3, data).unwrap(), &labels).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
