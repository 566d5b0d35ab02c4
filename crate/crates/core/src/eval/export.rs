//! `id,label,z0..` embedding files and `id,label,u,v` projection files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::Matrix;

fn csv_err(e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io("<csv>", io)
}

fn retag(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

pub fn write_embeddings_csv<W: Write>(table: &EmbeddingTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..table.dim()).map(|k| format!("z{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in table.z().row_iter().enumerate() {
        let mut rec = vec![
            table.ids()[i].to_string(),
            table.label_names()[table.labels()[i]].to_string(),
        ];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_embeddings_csv(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings_csv(table, BufWriter::new(f)).map_err(retag(path))
}

/// Read an embedding export; labels are remapped to `[0, C)` in ascending order.
pub fn read_embeddings_csv<R: Read>(reader: R, name: &str) -> Result<EmbeddingTable> {
    let parse = |line: u64, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(parse(1, "empty file".into())),
        Some(r) => r.map_err(|e| parse(1, e.to_string()))?,
    };
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(parse(1, "header must be id,label,z0,...".into()));
    }
    let width = header.len();
    let (mut ids, mut raw, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for rec in records {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse(line, format!("expected {width} columns, found {}", rec.len())));
        }
        ids.push(rec[0].parse::<u64>().map_err(|_| parse(line, format!("bad id '{}'", &rec[0])))?);
        raw.push(rec[1].parse::<i64>().map_err(|_| parse(line, format!("bad label '{}'", &rec[1])))?);
        for f in rec.iter().skip(2) {
            data.push(
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse(line, format!("bad value '{f}'")))?,
            );
        }
    }
    if ids.is_empty() {
        return Err(parse(2, "no data rows".into()));
    }
    let mut names = raw.clone();
    names.sort_unstable();
    names.dedup();
    let labels = raw
        .iter()
        .map(|v| names.binary_search(v).expect("name present"))
        .collect();
    let z = Matrix::from_vec(ids.len(), width - 2, data)?;
    EmbeddingTable::new(ids, z, labels, names)
}

pub fn load_embeddings_csv(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings_csv(f, &path.display().to_string())
}

pub fn write_projection_csv<W: Write>(table: &EmbeddingTable, coords: &Matrix, writer: W) -> Result<()> {
    if coords.rows() != table.len() || coords.cols() != 2 {
        return Err(Error::contract(format!(
            "projection of shape {:?} for {} samples",
            coords.shape(),
            table.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label", "u", "v"]).map_err(csv_err)?;
    for i in 0..table.len() {
        w.write_record([
            table.ids()[i].to_string(),
            table.label_names()[table.labels()[i]].to_string(),
            coords.get(i, 0).to_string(),
            coords.get(i, 1).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_projection_csv(table: &EmbeddingTable, coords: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_projection_csv(table, coords, BufWriter::new(f)).map_err(retag(path))
}
