//! File formats: ROI and phase CSVs, subject manifests, tensor CSV/binary
//! containers and simulation summaries. Every writer goes through
//! [`write_atomic`].
//!
//! Binary tensor layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `PSTN` |
//! | 4     | u32 format version (1) |
//! | 4     | u32 regions R |
//! | 4     | u32 columns T' |
//! | 4     | u32 metric id |
//! | 4     | u32 window length (0 = instantaneous) |
//! | 4     | u32 first sample index |
//! | 8     | f64 TR in seconds |
//! | 8·P·T' | f64 values, row-major by pair (`NaN` = missing) |
//! | ⌈P·T'/8⌉ | validity bitmask, LSB first, 1 = valid |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psmetrics::{Metric, PsTensor, WindowSpec};
use crate::signals::{PhaseMatrix, RoiDataset};
use crate::simharness::SummaryCell;

pub const TENSOR_MAGIC: &[u8; 4] = b"PSTN";
pub const TENSOR_VERSION: u32 = 1;

/// 17 significant digits; round-trips every finite `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("line {line}: '{field}' is not a number")))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.iter().map(|f| parse_f64(path, n + 2, f)).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn transpose(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

/// Reads an ROI CSV: one row per time point, one column per region, header
/// row of region labels.
pub fn read_roi_csv(path: &Path, tr_seconds: f64) -> Result<RoiDataset> {
    let (labels, rows) = read_table(path)?;
    if rows.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    let data = transpose(&rows, labels.len());
    RoiDataset::new(data, tr_seconds, labels).map_err(|e| Error::format(path, e.to_string()))
}

fn time_major(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n).map(|t| rows.iter().map(|r| r[t]).collect()).collect()
}

fn table_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|r| format!("R{r}")).collect()
}

pub fn write_roi_csv(path: &Path, data: &RoiDataset) -> Result<()> {
    let rows = time_major(data.rows()).into_iter().map(|r| r.into_iter().map(format_f64).collect());
    write_atomic(path, &table_bytes(data.region_labels(), rows)?)
}

/// Phases in the same orientation as ROI CSVs (rows = time).
pub fn write_phase_csv(path: &Path, phases: &PhaseMatrix, labels: Option<&[String]>) -> Result<()> {
    let header = labels.map_or_else(|| default_labels(phases.n_regions()), <[String]>::to_vec);
    if header.len() != phases.n_regions() {
        return Err(Error::LengthMismatch { left: header.len(), right: phases.n_regions() });
    }
    let rows = time_major(phases.rows()).into_iter().map(|r| r.into_iter().map(format_f64).collect());
    write_atomic(path, &table_bytes(&header, rows)?)
}

pub fn read_phase_csv(path: &Path, tr_seconds: f64) -> Result<PhaseMatrix> {
    let (labels, rows) = read_table(path)?;
    PhaseMatrix::new(transpose(&rows, labels.len()), tr_seconds).map_err(|e| Error::format(path, e.to_string()))
}

/// One subject entry of a manifest; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectManifest {
    pub tr_seconds: f64,
    pub subjects: Vec<SubjectEntry>,
}

impl SubjectManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if manifest.subjects.is_empty() {
            return Err(Error::format(path, "manifest lists no subjects"));
        }
        if !(manifest.tr_seconds.is_finite() && manifest.tr_seconds > 0.0) {
            return Err(Error::format(path, format!("tr_seconds must be positive, got {}", manifest.tr_seconds)));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut manifest.subjects {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        Ok(manifest)
    }

    /// Reads every subject, requiring a common region count and length.
    pub fn read_all(&self) -> Result<Vec<RoiDataset>> {
        let mut out: Vec<RoiDataset> = Vec::with_capacity(self.subjects.len());
        for s in &self.subjects {
            let d = read_roi_csv(&s.path, self.tr_seconds)?;
            if let Some(first) = out.first() {
                if (d.n_regions(), d.n_samples()) != (first.n_regions(), first.n_samples()) {
                    return Err(Error::format(
                        &s.path,
                        format!(
                            "{} regions x {} samples, expected {} x {}",
                            d.n_regions(),
                            d.n_samples(),
                            first.n_regions(),
                            first.n_samples()
                        ),
                    ));
                }
            }
            out.push(d);
        }
        Ok(out)
    }
}

fn tensor_meta(t: &PsTensor) -> String {
    format!(
        "# metric={} window={} start={} n_regions={} tr_seconds={} window_end=inclusive\n",
        t.metric.name(),
        t.window.map_or(0, |w| w.length),
        t.start,
        t.n_regions,
        format_f64(t.tr_seconds)
    )
}

/// Tensor as CSV: one row per pair, prefixed by the 1-based lower-triangle
/// position `i,j` (`i > j`); one column per time point, headed by its time in
/// seconds; missing entries are empty.
pub fn write_tensor_csv(path: &Path, t: &PsTensor) -> Result<()> {
    let mut header = vec!["i".to_string(), "j".to_string()];
    header.extend((0..t.n_times).map(|c| format_f64(t.time_seconds(c))));
    let rows = t.pairs.iter().enumerate().map(|(p, &(a, b))| {
        let mut r = vec![(b + 1).to_string(), (a + 1).to_string()];
        r.extend((0..t.n_times).map(|c| t.get(p, c).map_or(String::new(), format_f64)));
        r
    });
    let mut bytes = tensor_meta(t).into_bytes();
    bytes.extend(table_bytes(&header, rows)?);
    write_atomic(path, &bytes)
}

fn meta_value<'a>(path: &Path, line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::format(path, format!("tensor header lacks '{key}'")))
}

fn meta_parse<T: std::str::FromStr>(path: &Path, line: &str, key: &str) -> Result<T> {
    let v = meta_value(path, line, key)?;
    v.parse().map_err(|_| Error::format(path, format!("bad {key} value '{v}'")))
}

pub fn read_tensor_csv(path: &Path) -> Result<PsTensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = text
        .lines()
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| Error::format(path, "missing tensor header line"))?;
    let metric: Metric = meta_value(path, meta, "metric")?
        .parse()
        .map_err(|e: Error| Error::format(path, e.to_string()))?;
    let window: usize = meta_parse(path, meta, "window")?;
    let start: usize = meta_parse(path, meta, "start")?;
    let n_regions: usize = meta_parse(path, meta, "n_regions")?;
    let tr: f64 = meta_parse(path, meta, "tr_seconds")?;

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let n_times = reader.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(2);
    let mut values = Vec::new();
    let mut valid = Vec::new();
    let pairs = crate::psmetrics::pair_index(n_regions);
    for (p, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = p + 3;
        let expected = pairs.get(p).map(|&(a, b)| ((b + 1).to_string(), (a + 1).to_string()));
        let found = (record.get(0).unwrap_or("").to_string(), record.get(1).unwrap_or("").to_string());
        if expected.as_ref() != Some(&found) {
            return Err(Error::format(path, format!("line {line}: unexpected pair ({}, {})", found.0, found.1)));
        }
        for field in record.iter().skip(2) {
            if field.is_empty() {
                values.push(f64::NAN);
                valid.push(false);
            } else {
                values.push(parse_f64(path, line, field)?);
                valid.push(true);
            }
        }
    }
    let window = (window > 0).then_some(WindowSpec { length: window });
    PsTensor::from_parts(metric, window, n_regions, start, n_times, tr, values, valid)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn tensor_to_bytes(t: &PsTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 9 * t.values.len());
    out.extend_from_slice(TENSOR_MAGIC);
    for v in [
        TENSOR_VERSION,
        t.n_regions as u32,
        t.n_times as u32,
        t.metric.id(),
        t.window.map_or(0, |w| w.length as u32),
        t.start as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&t.tr_seconds.to_le_bytes());
    for (v, ok) in t.values.iter().zip(&t.valid) {
        let v = if *ok { *v } else { f64::NAN };
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut mask = vec![0u8; t.valid.len().div_ceil(8)];
    for (k, _) in t.valid.iter().enumerate().filter(|(_, ok)| **ok) {
        mask[k / 8] |= 1 << (k % 8);
    }
    out.extend(mask);
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<PsTensor> {
    let bad = |m: &str| Error::InvalidInput(format!("tensor container: {m}"));
    if bytes.len() < 36 || &bytes[..4] != TENSOR_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    if u32_at(0) as u32 != TENSOR_VERSION {
        return Err(bad("unsupported version"));
    }
    let (n_regions, n_times, window, start) = (u32_at(1), u32_at(2), u32_at(4), u32_at(5));
    let metric = Metric::from_id(u32_at(3) as u32).ok_or_else(|| bad("unknown metric id"))?;
    let tr = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let cells = n_regions.saturating_sub(1) * n_regions / 2 * n_times;
    if bytes.len() != 36 + 8 * cells + cells.div_ceil(8) {
        return Err(bad("length does not match header"));
    }
    let body = &bytes[36..];
    let values: Vec<f64> = body[..8 * cells]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mask = &body[8 * cells..];
    let valid = (0..cells).map(|k| mask[k / 8] >> (k % 8) & 1 == 1).collect();
    let window = (window > 0).then_some(WindowSpec { length: window });
    PsTensor::from_parts(metric, window, n_regions, start, n_times, tr, values, valid)
}

pub fn write_tensor_bin(path: &Path, t: &PsTensor) -> Result<()> {
    write_atomic(path, &tensor_to_bytes(t))
}

pub fn read_tensor_bin(path: &Path) -> Result<PsTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    tensor_from_bytes(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a tensor by extension: `.bin` binary, anything else CSV.
pub fn read_tensor(path: &Path) -> Result<PsTensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_tensor_bin(path),
        _ => read_tensor_csv(path),
    }
}

/// Columns time_s, mean, lower95, upper95, n_valid.
pub fn write_summary_csv(path: &Path, cell: &SummaryCell) -> Result<()> {
    let header: Vec<String> = ["time_s", "mean", "lower95", "upper95", "n_valid"].map(String::from).to_vec();
    let rows = (0..cell.len()).map(|k| {
        vec![
            format_f64(cell.time_s[k]),
            format_f64(cell.mean[k]),
            format_f64(cell.lower95[k]),
            format_f64(cell.upper95[k]),
            cell.n_valid[k].to_string(),
        ]
    });
    write_atomic(path, &table_bytes(&header, rows)?)
}

/// Square matrix with region labels on both axes.
pub fn write_matrix_csv(path: &Path, matrix: &[Vec<f64>], labels: &[String]) -> Result<()> {
    if matrix.len() != labels.len() || matrix.iter().any(|r| r.len() != labels.len()) {
        return Err(Error::LengthMismatch { left: matrix.len(), right: labels.len() });
    }
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    let rows = matrix.iter().zip(labels).map(|(r, l)| {
        let mut row = vec![l.clone()];
        row.extend(r.iter().map(|&v| format_f64(v)));
        row
    });
    write_atomic(path, &table_bytes(&header, rows)?)
}

/// Columns subject, time_index, state.
pub fn write_labels_csv(path: &Path, rows: &[(String, usize, usize)]) -> Result<()> {
    let header: Vec<String> = ["subject", "time_index", "state"].map(String::from).to_vec();
    let rows = rows.iter().map(|(s, t, k)| vec![s.clone(), t.to_string(), k.to_string()]);
    write_atomic(path, &table_bytes(&header, rows)?)
}

pub fn region_labels_or_default(labels: Option<&[String]>, n: usize) -> Vec<String> {
    labels.map_or_else(|| default_labels(n), <[String]>::to_vec)
}
