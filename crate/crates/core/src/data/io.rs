//! CSV and `TPE1` binary feature files.
//!
//! Inline CSV: `record_id,subject,media_id,template_id,split,f0,...,f{N-1}`.
//!
//! Binary: `<stem>.bin` holds the magic `TPE1`, little-endian `u32` count and
//! dim, then `count * dim` little-endian `f32` values. Labels live in the
//! companion manifest `<stem>.csv` with header
//! `record_id,subject,media_id,template_id,split,row`, where `row` indexes
//! into the binary file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{Dataset, FeatureRecord, Split};
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"TPE1";
const LABEL_COLUMNS: [&str; 5] = ["record_id", "subject", "media_id", "template_id", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Scale every record to unit length after parsing.
    pub normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { normalize: true }
    }
}

/// Loads a feature file with default options (normalization on).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    load_manifest_with(path, LoadOptions::default())
}

/// Loads either an inline CSV or a binary file with its label manifest.
///
/// `path` may name the `.bin` file, its manifest, or an inline CSV; the
/// header decides which layout a CSV uses.
pub fn load_manifest_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = if path.extension().is_some_and(|e| e == "bin") {
        path.with_extension("csv")
    } else {
        path.to_path_buf()
    };
    let mut reader = csv_reader(&manifest)?;
    let header = reader
        .headers()
        .map_err(|e| parse_error(&manifest, 1, e.to_string()))?
        .clone();
    for (k, expected) in LABEL_COLUMNS.iter().enumerate() {
        if header.get(k) != Some(*expected) {
            return Err(parse_error(
                &manifest,
                1,
                format!("column {k} must be `{expected}`"),
            ));
        }
    }
    let records = if header.len() == 6 && header.get(5) == Some("row") {
        let binary = manifest.with_extension("bin");
        let (count, dim, values) = read_binary_features(&binary)?;
        read_manifest_rows(&manifest, reader, count, dim, &values)?
    } else {
        read_inline_rows(&manifest, reader, &header)?
    };
    check_unique(&manifest, &records)?;
    let ds = Dataset::new(records.into_iter().map(|(_, r)| r).collect())?;
    if opts.normalize {
        ds.normalized()
    } else {
        Ok(ds)
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn labels_from(path: &Path, rec: &csv::StringRecord) -> Result<FeatureRecord> {
    let line = line_of(rec);
    let field = |k: usize| rec.get(k).unwrap_or("");
    let record_id = field(0);
    if record_id.is_empty() {
        return Err(parse_error(path, line, "empty record_id"));
    }
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let split = match field(4) {
        "" => None,
        s => Some(s.parse::<Split>().map_err(|m| parse_error(path, line, m))?),
    };
    Ok(FeatureRecord {
        record_id: record_id.to_string(),
        subject: field(1).to_string(),
        media_id: field(2).to_string(),
        template_id: opt(field(3)),
        split,
        values: Vec::new(),
    })
}

fn read_inline_rows(
    path: &Path,
    mut reader: csv::Reader<File>,
    header: &csv::StringRecord,
) -> Result<Vec<(u64, FeatureRecord)>> {
    let dim = header.len().saturating_sub(LABEL_COLUMNS.len());
    if dim == 0 {
        return Err(parse_error(path, 1, "header declares no feature columns"));
    }
    for k in 0..dim {
        let expected = format!("f{k}");
        if header.get(LABEL_COLUMNS.len() + k) != Some(expected.as_str()) {
            return Err(parse_error(
                path,
                1,
                format!("feature column {k} must be `{expected}`"),
            ));
        }
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = line_of(&row);
        if row.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!(
                    "expected {dim} feature values, found {}",
                    row.len().saturating_sub(LABEL_COLUMNS.len())
                ),
            ));
        }
        let mut rec = labels_from(path, &row)?;
        rec.values =
            row.iter()
                .skip(LABEL_COLUMNS.len())
                .enumerate()
                .map(|(k, s)| {
                    let v: f64 = s.trim().parse().map_err(|_| {
                        parse_error(path, line, format!("f{k}: `{s}` is not a number"))
                    })?;
                    if !v.is_finite() {
                        return Err(parse_error(path, line, format!("f{k} is not finite")));
                    }
                    Ok(v)
                })
                .collect::<Result<_>>()?;
        out.push((line, rec));
    }
    Ok(out)
}

fn read_manifest_rows(
    path: &Path,
    mut reader: csv::Reader<File>,
    count: usize,
    dim: usize,
    values: &[f32],
) -> Result<Vec<(u64, FeatureRecord)>> {
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = line_of(&row);
        if row.len() != 6 {
            return Err(parse_error(
                path,
                line,
                format!("expected 6 fields, found {}", row.len()),
            ));
        }
        let mut rec = labels_from(path, &row)?;
        let idx: usize = row[5]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line, format!("row `{}` is not an index", &row[5])))?;
        if idx >= count {
            return Err(parse_error(
                path,
                line,
                format!("row {idx} out of range for {count} stored vectors"),
            ));
        }
        let slice = &values[idx * dim..(idx + 1) * dim];
        if let Some(k) = slice.iter().position(|x| !x.is_finite()) {
            return Err(parse_error(path, line, format!("f{k} is not finite")));
        }
        rec.values = slice.iter().map(|&x| f64::from(x)).collect();
        out.push((line, rec));
    }
    Ok(out)
}

fn check_unique(path: &Path, records: &[(u64, FeatureRecord)]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (line, r) in records {
        if !seen.insert(r.record_id.as_str()) {
            return Err(parse_error(
                path,
                *line,
                format!("duplicate record_id `{}`", r.record_id),
            ));
        }
    }
    Ok(())
}

/// Reads a raw `TPE1` file: `(count, dim, values)`.
pub fn read_binary_features(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut head = [0u8; 12];
    reader
        .read_exact(&mut head)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &head[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "bad magic (expected TPE1)"));
    }
    let count = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * dim * 4 {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes of data for {count}x{dim}, found {}",
                count * dim * 4,
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((count, dim, values))
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn label_fields(r: &FeatureRecord) -> [String; 5] {
    [
        r.record_id.clone(),
        r.subject.clone(),
        r.media_id.clone(),
        opt_str(&r.template_id),
        opt_str(&r.split),
    ]
}

/// Writes an inline CSV feature file. Values use the shortest exact decimal form.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = LABEL_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..ds.dim()).map(|k| format!("f{k}")));
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in ds.records() {
        let mut fields: Vec<String> = label_fields(r).into();
        fields.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `<stem>.bin` plus its label manifest `<stem>.csv`; returns the manifest path.
///
/// Values are stored as `f32`.
pub fn save_binary(ds: &Dataset, path: impl AsRef<Path>) -> Result<PathBuf> {
    let bin = path.as_ref().with_extension("bin");
    let manifest = bin.with_extension("csv");
    let to_u32 = |x: usize, what: &str| {
        u32::try_from(x).map_err(|_| Error::format(&bin, format!("{what} exceeds u32")))
    };
    let file = File::create(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(&bin, e);
    out.write_all(FEATURE_MAGIC).map_err(io)?;
    out.write_all(&to_u32(ds.len(), "count")?.to_le_bytes())
        .map_err(io)?;
    out.write_all(&to_u32(ds.dim(), "dim")?.to_le_bytes())
        .map_err(io)?;
    for r in ds.records() {
        for &v in &r.values {
            out.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;

    let file = File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::format(&manifest, e.to_string());
    let mut header: Vec<&str> = LABEL_COLUMNS.to_vec();
    header.push("row");
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in ds.records().iter().enumerate() {
        let mut fields: Vec<String> = label_fields(r).into();
        fields.push(i.to_string());
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
