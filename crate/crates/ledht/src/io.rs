//! Binary container and CSV interchange.
//!
//! Container layout, all integers little-endian:
//!
//! | bytes        | field                                    |
//! |--------------|------------------------------------------|
//! | 4            | magic `LDHT`                             |
//! | 4            | format version (u32)                     |
//! | 4            | kind: 1 = spectra, 2 = matrix (u32)      |
//! | 8            | rows (u64)                               |
//! | 8            | cols (u64)                               |
//! | rows·cols·8  | row-major IEEE-754 f64 payload           |
//! | 8            | metadata length (u64)                    |
//! | variable     | UTF-8 JSON metadata                      |
//!
//! A training set is stored as spectra with its inputs stacked above its
//! targets and `"object": "training_set"` in the metadata.

use std::io::{Read, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::learn::{LedhtMatrix, MatrixMeta};
use crate::matrix::Matrix;
use crate::synth::{Provenance, TrainingSet};

pub const MAGIC: &[u8; 4] = b"LDHT";
pub const CONTAINER_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ContainerKind {
    Spectra = 1,
    Matrix = 2,
}

/// A decoded container before interpretation of its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub data: Matrix,
    pub meta: Value,
}

pub fn encode(kind: ContainerKind, data: &Matrix, meta: &Value) -> Result<Vec<u8>> {
    let meta_bytes = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.as_slice().len() * 8 + 8 + meta_bytes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(data.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(data.cols() as u64).to_le_bytes());
    for v in data.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    Ok(out)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Validates magic, version, kind and dimensions before touching the payload.
pub fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing LDHT magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!("header truncated at {} bytes", bytes.len())));
    }
    let version = u32_at(bytes, 4);
    if version > CONTAINER_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CONTAINER_VERSION,
        });
    }
    if version == 0 {
        return Err(Error::Format("container version 0 is not defined".into()));
    }
    let kind = match u32_at(bytes, 8) {
        1 => ContainerKind::Spectra,
        2 => ContainerKind::Matrix,
        k => return Err(Error::Format(format!("unknown container kind {k}"))),
    };
    let rows = u64_at(bytes, 12);
    let cols = u64_at(bytes, 20);
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= (bytes.len() - HEADER_LEN) as u64)
        .ok_or_else(|| {
            Error::Corruption(format!(
                "payload of {rows}x{cols} values does not fit in {} bytes",
                bytes.len()
            ))
        })? as usize;
    let meta_at = HEADER_LEN + payload;
    if bytes.len() < meta_at + 8 {
        return Err(Error::Corruption("metadata length missing".into()));
    }
    let meta_len = u64_at(bytes, meta_at);
    if meta_len != (bytes.len() - meta_at - 8) as u64 {
        return Err(Error::Corruption(format!(
            "metadata declares {meta_len} bytes, {} present",
            bytes.len() - meta_at - 8
        )));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..meta_at]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let meta: Value = serde_json::from_slice(&bytes[meta_at + 8..])
        .map_err(|e| Error::Corruption(format!("metadata is not valid JSON: {e}")))?;
    Ok(Container {
        kind,
        data: Matrix::from_vec(rows as usize, cols as usize, data)?,
        meta,
    })
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn save_spectra(path: &Path, data: &Matrix, meta: &Value) -> Result<()> {
    write_atomic(path, &encode(ContainerKind::Spectra, data, meta)?)
}

fn matrix_meta_value(m: &LedhtMatrix) -> Result<Value> {
    let mut meta = serde_json::to_value(&m.meta)?;
    meta["object"] = json!("ledht_matrix");
    meta["bias"] = json!(m.bias());
    Ok(meta)
}

pub fn save_matrix(path: &Path, m: &LedhtMatrix) -> Result<()> {
    write_atomic(path, &encode(ContainerKind::Matrix, m.h(), &matrix_meta_value(m)?)?)
}

pub fn training_set_bytes(set: &TrainingSet) -> Result<Vec<u8>> {
    training_set_bytes_with(set, &Value::Null)
}

/// As [`training_set_bytes`], merging the keys of `extra` into the metadata.
pub fn training_set_bytes_with(set: &TrainingSet, extra: &Value) -> Result<Vec<u8>> {
    let stacked = set.inputs.vstack(&set.targets)?;
    let mut meta = json!({
        "object": "training_set",
        "rows": set.len(),
        "provenance": set.provenance,
        "params": set.params,
    });
    merge(&mut meta, extra);
    encode(ContainerKind::Spectra, &stacked, &meta)
}

fn merge(meta: &mut Value, extra: &Value) {
    if let (Some(m), Some(e)) = (meta.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            m.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
}

pub fn save_training_set(path: &Path, set: &TrainingSet) -> Result<()> {
    write_atomic(path, &training_set_bytes(set)?)
}

pub fn save_training_set_with(path: &Path, set: &TrainingSet, extra: &Value) -> Result<()> {
    write_atomic(path, &training_set_bytes_with(set, extra)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Spectra { data: Matrix, meta: Value },
    Matrix(LedhtMatrix),
    TrainingSet(TrainingSet),
}

fn interpret(c: Container) -> Result<Loaded> {
    match c.kind {
        ContainerKind::Matrix => {
            let bias: Option<Vec<f64>> = serde_json::from_value(c.meta.get("bias").cloned().unwrap_or(Value::Null))?;
            let meta: MatrixMeta = serde_json::from_value(c.meta)?;
            Ok(Loaded::Matrix(LedhtMatrix::new(c.data, bias, meta)?))
        }
        ContainerKind::Spectra if c.meta.get("object").and_then(Value::as_str) == Some("training_set") => {
            let rows = c.meta.get("rows").and_then(Value::as_u64).ok_or_else(|| Error::Format("training set metadata lacks rows".into()))? as usize;
            if c.data.rows() != 2 * rows {
                return Err(Error::Corruption(format!(
                    "training set declares {rows} rows but stores {}",
                    c.data.rows()
                )));
            }
            let provenance: Provenance = serde_json::from_value(c.meta["provenance"].clone())?;
            let params = serde_json::from_value(c.meta.get("params").cloned().unwrap_or(json!([])))?;
            let n = c.data.cols();
            let all = c.data.into_vec();
            let (fi, ft) = all.split_at(rows * n);
            Ok(Loaded::TrainingSet(TrainingSet::new(
                Matrix::from_vec(rows, n, fi.to_vec())?,
                Matrix::from_vec(rows, n, ft.to_vec())?,
                params,
                provenance,
            )?))
        }
        ContainerKind::Spectra => Ok(Loaded::Spectra { data: c.data, meta: c.meta }),
    }
}

pub fn load_bytes(bytes: &[u8]) -> Result<Loaded> {
    interpret(decode(bytes)?)
}

pub fn load(path: &Path) -> Result<Loaded> {
    load_bytes(&read_all(path)?)
}

pub fn load_matrix(path: &Path) -> Result<LedhtMatrix> {
    match load(path)? {
        Loaded::Matrix(m) => Ok(m),
        _ => Err(Error::Format(format!("{} does not hold a learned matrix", path.display()))),
    }
}

pub fn load_training_set(path: &Path) -> Result<TrainingSet> {
    match load(path)? {
        Loaded::TrainingSet(s) => Ok(s),
        _ => Err(Error::Format(format!("{} does not hold a training set", path.display()))),
    }
}

/// Spectra rows from any container kind; training sets yield their inputs.
pub fn load_spectra(path: &Path) -> Result<Matrix> {
    match load(path)? {
        Loaded::Spectra { data, .. } => Ok(data),
        Loaded::TrainingSet(s) => Ok(s.inputs),
        Loaded::Matrix(_) => Err(Error::Format(format!("{} holds a matrix, not spectra", path.display()))),
    }
}

/// One spectrum per row. An optional first row starting with `axis` holds
/// the physical axis. Values use shortest round-trip exponent notation.
pub fn spectra_to_csv(data: &Matrix, axis: Option<&[f64]>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    if let Some(a) = axis {
        if a.len() != data.cols() {
            return Err(Error::InvalidInput(format!(
                "axis has {} values for {} columns",
                a.len(),
                data.cols()
            )));
        }
        let mut rec = vec!["axis".to_string()];
        rec.extend(a.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(err)?;
    }
    for row in data.iter_rows() {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn parse_spectra_csv<R: Read>(reader: R) -> Result<(Matrix, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut axis = None;
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let is_axis = rec.get(0) == Some("axis");
        let fields: Vec<&str> = rec.iter().skip(usize::from(is_axis)).collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {c} values, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid number {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if is_axis {
            if axis.is_some() || !data.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "axis row must come first and only once".into(),
                });
            }
            axis = Some(values);
        } else {
            data.extend(values);
        }
    }
    let c = cols.unwrap_or(0);
    let rows = data.len().checked_div(c).unwrap_or(0);
    Ok((Matrix::from_vec(rows, c, data)?, axis))
}

pub fn write_spectra_csv(path: &Path, data: &Matrix, axis: Option<&[f64]>) -> Result<()> {
    write_atomic(path, spectra_to_csv(data, axis)?.as_bytes())
}

pub fn read_spectra_csv(path: &Path) -> Result<(Matrix, Option<Vec<f64>>)> {
    parse_spectra_csv(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
