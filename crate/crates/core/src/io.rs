//! CSV input/output and metadata sidecars.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simgen::SyntheticDataset;

pub const GIT_DESCRIBE: &str = env!("SDFOREST_GIT_DESCRIBE");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Numeric table read from CSV, split into predictors and optional columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub predictor_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub response_name: Option<String>,
    pub y: Option<Vec<f64>>,
}

/// Parses a headered numeric CSV. `response` names the response column;
/// columns listed in `ignore` are dropped; everything else is a predictor.
pub fn read_table<R: Read>(reader: R, response: Option<&str>, ignore: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(Error::Input("CSV has no columns".into()));
    }
    let response_col = match response {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Input(format!("response column '{name}' not found; available columns: {}", header.join(", ")))
        })?),
        None => None,
    };
    let predictor_cols: Vec<usize> =
        (0..header.len()).filter(|&c| Some(c) != response_col && !ignore.contains(&header[c].as_str())).collect();
    if predictor_cols.is_empty() {
        return Err(Error::Input("CSV has no predictor columns".into()));
    }

    let mut values: Vec<Vec<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // Data rows are numbered from 2 because line 1 is the header.
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Input(format!("line {line}: expected {} fields, found {}", header.len(), record.len())));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Input(format!("line {line}, column '{}': '{cell}' is not a finite number", header[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }
    let n = values.len();
    let x = DMatrix::from_fn(n, predictor_cols.len(), |i, j| values[i][predictor_cols[j]]);
    let y = response_col.map(|c| values.iter().map(|row| row[c]).collect());
    Ok(Table {
        predictor_names: predictor_cols.iter().map(|&c| header[c].clone()).collect(),
        x,
        response_name: response_col.map(|c| header[c].clone()),
        y,
    })
}

pub fn read_table_file(path: &Path, response: Option<&str>, ignore: &[&str]) -> Result<Table> {
    let file = fs::File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_table(file, response, ignore)
}

/// Formats a float so that it parses back to the identical value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Writes rows of already formatted fields.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| Error::Parse(e.to_string()))?;
    for row in rows {
        wtr.write_record(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Header `x1..xp,y,f0` and one row per observation.
pub fn dataset_csv(data: &SyntheticDataset) -> Result<String> {
    let p = data.x.ncols();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("f0".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..data.x.nrows())
        .map(|i| {
            let mut row: Vec<String> = (0..p).map(|j| fmt_f64(data.x[(i, j)])).collect();
            row.push(fmt_f64(data.y[i]));
            row.push(fmt_f64(data.f0_values[i]));
            row
        })
        .collect();
    csv_string(&header_refs, &rows)
}

/// Provenance written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar<'a, C: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub git_describe: &'a str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
}

impl<'a, C: Serialize> Sidecar<'a, C> {
    pub fn new(command: &'a str, seed: u64, config: &'a C) -> Self {
        Sidecar { tool: "sdforest", version: VERSION, git_describe: GIT_DESCRIBE, command, seed, config }
    }
}

/// `out.csv` -> `out.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes `contents` to `path` and the sidecar next to it.
pub fn write_with_sidecar<C: Serialize>(path: &Path, contents: &str, sidecar: &Sidecar<C>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}
