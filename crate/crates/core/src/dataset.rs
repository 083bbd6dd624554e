//! Solubility records and CSV ingestion/emission.
//!
//! Values are log10 mol/L throughout. Rows that cannot become a record are
//! returned as rejections (and can be written to `<name>.rejected.csv`);
//! they are never dropped silently.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::standardize::StructureKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolubilityRecord {
    pub raw_smiles: String,
    pub key: Option<StructureKey>,
    pub value: f64,
    pub weight: f64,
    pub set_id: String,
    pub source_id: Option<String>,
    pub temperature_c: Option<f64>,
    pub ph: Option<f64>,
}

impl SolubilityRecord {
    pub fn new(raw_smiles: impl Into<String>, value: f64, set_id: impl Into<String>) -> Self {
        SolubilityRecord {
            raw_smiles: raw_smiles.into(),
            key: None,
            value,
            weight: 1.0,
            set_id: set_id.into(),
            source_id: None,
            temperature_c: None,
            ph: None,
        }
    }

    pub fn plain_key(&self) -> Option<&str> {
        self.key.as_ref().map(|k| k.plain_key.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataTable {
    pub name: String,
    pub records: Vec<SolubilityRecord>,
}

impl DataTable {
    pub fn new(name: impl Into<String>, records: Vec<SolubilityRecord>) -> Self {
        DataTable {
            name: name.into(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),
    #[error("row {row}: {message}")]
    UnreadableRow { row: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Column names to read. Optional columns that are `None` are not read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMapping {
    pub smiles: String,
    pub value: String,
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub set_id: Option<String>,
    #[serde(default)]
    pub source_id: Option<String>,
    #[serde(default)]
    pub temperature_c: Option<String>,
    #[serde(default)]
    pub ph: Option<String>,
    #[serde(default)]
    pub stereo_key: Option<String>,
    #[serde(default)]
    pub plain_key: Option<String>,
}

/// Column order written by [`emit_csv`].
pub const NATIVE_COLUMNS: [&str; 9] = [
    "smiles",
    "value",
    "weight",
    "set_id",
    "source_id",
    "temperature_c",
    "ph",
    "stereo_key",
    "plain_key",
];

const SMILES_ALIASES: &[&str] = &[
    "smiles",
    "canonical_smiles",
    "smiles_std",
    "mol",
    "molecule",
];
const VALUE_ALIASES: &[&str] = &[
    "value",
    "logs",
    "log_s",
    "logsol",
    "log_sol",
    "solubility",
    "measured log solubility in mols per litre",
    "y",
    "target",
];
const WEIGHT_ALIASES: &[&str] = &["weight", "w"];
const SET_ALIASES: &[&str] = &["set_id", "set", "dataset"];
const SOURCE_ALIASES: &[&str] = &["source_id", "source", "reference", "ref"];
const TEMP_ALIASES: &[&str] = &["temperature_c", "temperature", "temp", "t"];
const PH_ALIASES: &[&str] = &["ph"];

impl SchemaMapping {
    pub fn new(smiles: impl Into<String>, value: impl Into<String>) -> Self {
        SchemaMapping {
            smiles: smiles.into(),
            value: value.into(),
            weight: None,
            set_id: None,
            source_id: None,
            temperature_c: None,
            ph: None,
            stereo_key: None,
            plain_key: None,
        }
    }

    /// Mapping for files written by [`emit_csv`].
    pub fn native() -> Self {
        let c = |s: &str| Some(s.to_string());
        SchemaMapping {
            smiles: "smiles".into(),
            value: "value".into(),
            weight: c("weight"),
            set_id: c("set_id"),
            source_id: c("source_id"),
            temperature_c: c("temperature_c"),
            ph: c("ph"),
            stereo_key: c("stereo_key"),
            plain_key: c("plain_key"),
        }
    }

    /// Guesses a mapping from header names (case-insensitive, common
    /// aliases). Only the SMILES and value columns are mandatory.
    pub fn detect(headers: &[String]) -> Result<Self, DatasetError> {
        let find = |aliases: &[&str]| -> Option<String> {
            aliases.iter().find_map(|a| {
                headers
                    .iter()
                    .find(|h| h.trim().eq_ignore_ascii_case(a))
                    .cloned()
            })
        };
        let smiles =
            find(SMILES_ALIASES).ok_or_else(|| DatasetError::MissingColumn("smiles".into()))?;
        let value =
            find(VALUE_ALIASES).ok_or_else(|| DatasetError::MissingColumn("value".into()))?;
        Ok(SchemaMapping {
            smiles,
            value,
            weight: find(WEIGHT_ALIASES),
            set_id: find(SET_ALIASES),
            source_id: find(SOURCE_ALIASES),
            temperature_c: find(TEMP_ALIASES),
            ph: find(PH_ALIASES),
            stereo_key: find(&["stereo_key"]),
            plain_key: find(&["plain_key"]),
        })
    }
}

/// Why a row did not become a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectKind {
    EmptySmiles,
    MissingValue,
    BadNumber,
    NonFinite,
    WeightOutOfRange,
}

impl RejectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectKind::EmptySmiles => "empty-smiles",
            RejectKind::MissingValue => "missing-value",
            RejectKind::BadNumber => "bad-number",
            RejectKind::NonFinite => "non-finite",
            RejectKind::WeightOutOfRange => "weight-out-of-range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub kind: RejectKind,
    pub column: String,
    pub smiles: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: DataTable,
    pub rejections: Vec<Rejection>,
    pub rows_read: usize,
}

struct Columns {
    smiles: usize,
    value: usize,
    weight: Option<usize>,
    set_id: Option<usize>,
    source_id: Option<usize>,
    temperature_c: Option<usize>,
    ph: Option<usize>,
    stereo_key: Option<usize>,
    plain_key: Option<usize>,
}

fn resolve(mapping: &SchemaMapping, headers: &[String]) -> Result<Columns, DatasetError> {
    let idx = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let opt = |name: &Option<String>| name.as_deref().map(idx).transpose();
    Ok(Columns {
        smiles: idx(&mapping.smiles)?,
        value: idx(&mapping.value)?,
        weight: opt(&mapping.weight)?,
        set_id: opt(&mapping.set_id)?,
        source_id: opt(&mapping.source_id)?,
        temperature_c: opt(&mapping.temperature_c)?,
        ph: opt(&mapping.ph)?,
        stereo_key: opt(&mapping.stereo_key)?,
        plain_key: opt(&mapping.plain_key)?,
    })
}

/// Table name used for a file: its stem.
pub fn table_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let text = String::from_utf8(bytes).map_err(|e| DatasetError::UnreadableRow {
        row: 0,
        message: format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()),
    })?;
    if text.trim().is_empty() {
        return Err(DatasetError::EmptyFile(path.to_path_buf()));
    }
    Ok(text
        .strip_prefix('\u{feff}')
        .map(str::to_string)
        .unwrap_or(text))
}

fn headers_of(text: &str) -> Result<Vec<String>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| DatasetError::UnreadableRow {
        row: 0,
        message: e.to_string(),
    })?;
    Ok(headers.iter().map(str::to_string).collect())
}

/// Reads a CSV using a mapping detected from its header.
pub fn ingest_csv_auto(path: &Path) -> Result<Ingested, DatasetError> {
    let text = read_text(path)?;
    let mapping = SchemaMapping::detect(&headers_of(&text)?)?;
    ingest_text(&text, &table_name(path), &mapping)
}

pub fn ingest_csv(path: &Path, mapping: &SchemaMapping) -> Result<Ingested, DatasetError> {
    let text = read_text(path)?;
    ingest_text(&text, &table_name(path), mapping)
}

/// Parses CSV text. `name` becomes the table name and the default `set_id`.
pub fn ingest_text(
    text: &str,
    name: &str,
    mapping: &SchemaMapping,
) -> Result<Ingested, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::UnreadableRow {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let cols = resolve(mapping, &headers)?;

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut rows_read = 0;
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DatasetError::UnreadableRow {
            row: row_no,
            message: e.to_string(),
        })?;
        rows_read += 1;
        let field = |c: usize| row.get(c).unwrap_or("").trim();
        let opt_field = |c: Option<usize>| c.map(field).filter(|s| !s.is_empty());
        let smiles = field(cols.smiles);
        let reject = |kind, column: &str, raw: &str| Rejection {
            row: row_no,
            kind,
            column: column.to_string(),
            smiles: smiles.to_string(),
            raw: raw.to_string(),
        };
        if smiles.is_empty() {
            rejections.push(reject(RejectKind::EmptySmiles, &mapping.smiles, ""));
            continue;
        }
        let raw_value = field(cols.value);
        if raw_value.is_empty() {
            rejections.push(reject(RejectKind::MissingValue, &mapping.value, ""));
            continue;
        }

        // Numeric fields: value (required) then the optional ones.
        let numeric = [
            (Some(cols.value), mapping.value.as_str()),
            (cols.weight, mapping.weight.as_deref().unwrap_or("")),
            (
                cols.temperature_c,
                mapping.temperature_c.as_deref().unwrap_or(""),
            ),
            (cols.ph, mapping.ph.as_deref().unwrap_or("")),
        ];
        let mut parsed = [None; 4];
        let mut failed = None;
        for (slot, &(col, col_name)) in numeric.iter().enumerate() {
            let Some(raw) = opt_field(col) else { continue };
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed[slot] = Some(v),
                Ok(_) => failed = Some(reject(RejectKind::NonFinite, col_name, raw)),
                Err(_) => failed = Some(reject(RejectKind::BadNumber, col_name, raw)),
            }
            if failed.is_some() {
                break;
            }
        }
        if let Some(r) = failed {
            rejections.push(r);
            continue;
        }
        let weight = parsed[1].unwrap_or(1.0);
        if !(weight > 0.0 && weight <= 1.0) {
            let raw = opt_field(cols.weight).unwrap_or("");
            rejections.push(reject(
                RejectKind::WeightOutOfRange,
                mapping.weight.as_deref().unwrap_or(""),
                raw,
            ));
            continue;
        }
        let key = match (opt_field(cols.stereo_key), opt_field(cols.plain_key)) {
            (Some(s), Some(p)) => Some(StructureKey {
                stereo_key: s.to_string(),
                plain_key: p.to_string(),
            }),
            _ => None,
        };
        records.push(SolubilityRecord {
            raw_smiles: smiles.to_string(),
            key,
            value: parsed[0].expect("value checked above"),
            weight,
            set_id: opt_field(cols.set_id).unwrap_or(name).to_string(),
            source_id: opt_field(cols.source_id).map(str::to_string),
            temperature_c: parsed[2],
            ph: parsed[3],
        });
    }
    log::info!(
        "{name}: {rows_read} rows read, {} records, {} rejected",
        records.len(),
        rejections.len()
    );
    Ok(Ingested {
        table: DataTable::new(name, records),
        rejections,
        rows_read,
    })
}

/// Keeps records measured at 25 ± 5 °C and pH 7 ± 1. Missing metadata passes.
pub fn protocol_filter(t: &DataTable) -> DataTable {
    let keep = |r: &SolubilityRecord| {
        r.temperature_c.is_none_or(|x| (20.0..=30.0).contains(&x))
            && r.ph.is_none_or(|x| (6.0..=8.0).contains(&x))
    };
    DataTable::new(
        t.name.clone(),
        t.records.iter().filter(|r| keep(r)).cloned().collect(),
    )
}

fn opt_num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the table with [`NATIVE_COLUMNS`]. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_table<W: Write>(t: &DataTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NATIVE_COLUMNS)?;
    for r in &t.records {
        let (stereo, plain) = r
            .key
            .as_ref()
            .map(|k| (k.stereo_key.as_str(), k.plain_key.as_str()))
            .unwrap_or(("", ""));
        w.write_record([
            r.raw_smiles.as_str(),
            &r.value.to_string(),
            &r.weight.to_string(),
            &r.set_id,
            r.source_id.as_deref().unwrap_or(""),
            &opt_num(r.temperature_c),
            &opt_num(r.ph),
            stereo,
            plain,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

pub fn emit_csv(t: &DataTable, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_table(t, std::io::BufWriter::new(file))
        .map_err(csv_to_io)
        .map_err(io_err(path))
}

/// `<dir>/<name>.rejected.csv`
pub fn sidecar_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.rejected.csv"))
}

pub fn write_rejections<W: Write>(rejections: &[Rejection], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "reason", "column", "smiles", "raw"])?;
    for r in rejections {
        w.write_record([
            &r.row.to_string(),
            r.kind.as_str(),
            &r.column,
            &r.smiles,
            &r.raw,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_rejections(rejections: &[Rejection], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_rejections(rejections, std::io::BufWriter::new(file))
        .map_err(csv_to_io)
        .map_err(io_err(path))
}
