//! On-disk formats: stream CSV, plant registry, monitor map, event ledger and
//! the JSONL event/estimate records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, SecondsFormat, Utc};
use inertia_core::analytics::{EventLedger, LedgerRecord};
use inertia_core::detector::{ConfirmedEvent, MonitorMap};
use inertia_core::estimator::{InertiaEstimate, PlantSignature};
use inertia_core::{SensorStream, TimedSample};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },
    #[error("{}:{line}: timestamp is not greater than the previous one", path.display())]
    NonMonotonicTime { path: PathBuf, line: u64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    fn parse(path: &Path, line: u64, reason: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The 1-based line a parse diagnostic points at.
    pub fn line(&self) -> Option<u64> {
        match self {
            FormatError::Parse { line, .. } | FormatError::NonMonotonicTime { line, .. } => Some(*line),
            FormatError::Io { .. } => None,
        }
    }
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

fn read_file(path: &Path) -> FormatResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> FormatResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FormatError::io(path, e))
}

/// Tracks the physical 1-based line of csv records. The reader's own line counter
/// ignores comment and blank lines, and a record's byte position can point at
/// skipped lines that precede it, so both are corrected here.
struct LineCursor<'a> {
    bytes: &'a [u8],
    byte: usize,
    line: u64,
}

impl<'a> LineCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, byte: 0, line: 1 }
    }

    /// 1-based line of the first non-blank, non-comment line at or after
    /// `pos`. Positions must not move backwards between calls.
    fn line_at(&mut self, pos: Option<&csv::Position>) -> u64 {
        let Some(pos) = pos else { return 0 };
        let mut start = (pos.byte() as usize).clamp(self.byte, self.bytes.len());
        loop {
            let rest = &self.bytes[start..];
            let end = rest.iter().position(|&b| b == b'\n');
            let text = String::from_utf8_lossy(&rest[..end.unwrap_or(rest.len())]);
            let text = text.trim();
            match end {
                Some(e) if text.is_empty() || text.starts_with('#') => start += e + 1,
                _ => break,
            }
        }
        self.line += self.bytes[self.byte..start].iter().filter(|&&b| b == b'\n').count() as u64;
        self.byte = start;
        self.line
    }
}

fn csv_error(path: &Path, e: csv::Error, bytes: &[u8], base: u64) -> FormatError {
    let line = base + LineCursor::new(bytes).line_at(e.position());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::io(path, io),
        csv::ErrorKind::Deserialize { err, .. } => FormatError::parse(path, line, err.to_string()),
        other => FormatError::parse(path, line, format!("{other:?}")),
    }
}

/// Monitor id implied by a stream file name (`north.csv` → `north`).
pub fn monitor_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Incremental parser for the stream CSV format.
///
/// Input is fed in chunks made of whole lines, so a file can be parsed in one
/// call or tailed as it grows; both paths produce the same samples and the
/// same line-numbered diagnostics.
#[derive(Debug, Clone)]
pub struct StreamCsvParser {
    path: PathBuf,
    /// Set once the header has been read: whether a `v_pu` column exists.
    voltage_column: Option<bool>,
    lines_consumed: u64,
    last_t: Option<f64>,
}

impl StreamCsvParser {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            voltage_column: None,
            lines_consumed: 0,
            last_t: None,
        }
    }

    pub fn header_seen(&self) -> bool {
        self.voltage_column.is_some()
    }

    pub fn has_voltage_column(&self) -> bool {
        self.voltage_column == Some(true)
    }

    fn check_header(&mut self, record: &csv::StringRecord, line: u64) -> FormatResult<()> {
        let cols: Vec<&str> = record.iter().collect();
        match cols.as_slice() {
            ["t", "f_hz"] => self.voltage_column = Some(false),
            ["t", "f_hz", "v_pu"] => self.voltage_column = Some(true),
            _ => {
                return Err(FormatError::parse(
                    &self.path,
                    line,
                    format!("expected header `t,f_hz` or `t,f_hz,v_pu`, found `{}`", cols.join(",")),
                ))
            }
        }
        Ok(())
    }

    fn number(&self, field: &str, name: &str, line: u64) -> FormatResult<f64> {
        let x: f64 = field
            .parse()
            .map_err(|_| FormatError::parse(&self.path, line, format!("{name}: `{field}` is not a number")))?;
        if !x.is_finite() {
            return Err(FormatError::parse(&self.path, line, format!("{name} is not finite")));
        }
        Ok(x)
    }

    /// Parses `chunk`, which must end on a line boundary unless it is the
    /// final piece of the file.
    pub fn feed(&mut self, chunk: &[u8]) -> FormatResult<Vec<TimedSample>> {
        let base = self.lines_consumed;
        self.lines_consumed += chunk.iter().filter(|&&b| b == b'\n').count() as u64;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(chunk);
        let mut out = Vec::new();
        let mut cursor = LineCursor::new(chunk);
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&self.path, e, chunk, base))?;
            let line = base + cursor.line_at(record.position());
            let Some(voltage_column) = self.voltage_column else {
                self.check_header(&record, line)?;
                continue;
            };
            let width = if voltage_column { 3 } else { 2 };
            if record.len() != width {
                return Err(FormatError::parse(
                    &self.path,
                    line,
                    format!("expected {width} fields, found {}", record.len()),
                ));
            }
            let t = self.number(&record[0], "t", line)?;
            let f = self.number(&record[1], "f_hz", line)?;
            let v = if voltage_column && !record[2].is_empty() {
                Some(self.number(&record[2], "v_pu", line)?)
            } else {
                None
            };
            if matches!(self.last_t, Some(prev) if t <= prev) {
                return Err(FormatError::NonMonotonicTime {
                    path: self.path.clone(),
                    line,
                });
            }
            self.last_t = Some(t);
            out.push(TimedSample::new(t, f, v));
        }
        Ok(out)
    }

    /// Call after the last chunk: a file without a header is an error.
    pub fn finish(&self) -> FormatResult<()> {
        if self.header_seen() {
            Ok(())
        } else {
            Err(FormatError::parse(&self.path, 1, "missing header line"))
        }
    }
}

/// Reads a stream CSV with columns `t,f_hz[,v_pu]`.
pub fn parse_stream_csv(path: &Path, monitor_id: &str) -> FormatResult<SensorStream> {
    let bytes = read_file(path)?;
    let mut parser = StreamCsvParser::new(path);
    let samples = parser.feed(&bytes)?;
    parser.finish()?;
    SensorStream::new(monitor_id, samples).map_err(|e| FormatError::parse(path, 0, e.to_string()))
}

/// Writes a stream in the format [`parse_stream_csv`] reads. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_stream_csv(path: &Path, stream: &SensorStream) -> FormatResult<()> {
    let mut w = create(path)?;
    let voltage = stream.has_voltage();
    let io = |e| FormatError::io(path, e);
    writeln!(w, "{}", if voltage { "t,f_hz,v_pu" } else { "t,f_hz" }).map_err(io)?;
    for s in stream.samples() {
        match (voltage, s.v) {
            (true, Some(v)) => writeln!(w, "{},{},{}", s.t, s.f, v),
            (true, None) => writeln!(w, "{},{},", s.t, s.f),
            (false, _) => writeln!(w, "{},{}", s.t, s.f),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_table<T: DeserializeOwned>(path: &Path) -> FormatResult<Vec<(u64, T)>> {
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| csv_error(path, e, &bytes, 0))?.clone();
    let mut rows = Vec::new();
    let mut cursor = LineCursor::new(&bytes);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e, &bytes, 0))?;
        let line = cursor.line_at(record.position());
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| FormatError::parse(path, line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(rows)
}

/// Reads the plant registry: `plant_id,region,unit_capacity_mw,mw_step_mean_mw,mw_step_tolerance`.
pub fn read_registry(path: &Path) -> FormatResult<Vec<PlantSignature>> {
    let rows: Vec<(u64, PlantSignature)> = read_table(path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, sig) in rows {
        sig.validate()
            .map_err(|e| FormatError::parse(path, line, e.to_string()))?;
        if !seen.insert(sig.plant_id.clone()) {
            return Err(FormatError::parse(
                path,
                line,
                format!("duplicate plant_id {}", sig.plant_id),
            ));
        }
        out.push(sig);
    }
    Ok(out)
}

pub fn write_registry(path: &Path, registry: &[PlantSignature]) -> FormatResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for sig in registry {
        w.serialize(sig).map_err(|e| csv_error(path, e, &[], 0))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct MonitorRow {
    monitor_id: String,
    plant_id: Option<String>,
}

/// Reads `monitor_id,plant_id`; an empty plant means the monitor is not near
/// any registered plant.
pub fn read_monitor_map(path: &Path) -> FormatResult<MonitorMap> {
    let rows: Vec<(u64, MonitorRow)> = read_table(path)?;
    let mut map = MonitorMap::new();
    for (line, row) in rows {
        if map.insert(row.monitor_id.clone(), row.plant_id).is_some() {
            return Err(FormatError::parse(
                path,
                line,
                format!("duplicate monitor_id {}", row.monitor_id),
            ));
        }
    }
    Ok(map)
}

pub fn write_monitor_map(path: &Path, map: &MonitorMap) -> FormatResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (monitor_id, plant_id) in map {
        w.serialize(MonitorRow {
            monitor_id: monitor_id.clone(),
            plant_id: plant_id.clone(),
        })
        .map_err(|e| csv_error(path, e, &[], 0))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

const OFFSET_DIRECTIVE: &str = "# utc_offset=";

#[derive(Debug, Serialize, Deserialize)]
struct LedgerRow {
    t_utc: String,
    plant_id: String,
    mw_observed: Option<f64>,
    h_estimate_mw_s: Option<f64>,
}

/// Reads an event ledger.
///
/// ```text
/// # utc_offset=-05:00
/// t_utc,plant_id,mw_observed,h_estimate_mw_s
/// 2021-03-01T14:02:11Z,bath_county,477.2,
/// ```
///
/// The optional offset line sets the display timezone used for calendar
/// grouping; it defaults to UTC.
pub fn read_ledger(path: &Path) -> FormatResult<EventLedger> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut offset = FixedOffset::east_opt(0).expect("zero offset");
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let line = line.trim();
        if let Some(value) = line.strip_prefix(OFFSET_DIRECTIVE) {
            offset = value.trim().parse().map_err(|_| {
                FormatError::parse(path, i as u64 + 1, format!("bad utc_offset `{}`", value.trim()))
            })?;
        } else if !line.starts_with('#') && !line.is_empty() {
            break;
        }
    }
    let rows: Vec<(u64, LedgerRow)> = read_table(path)?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let t_event = DateTime::parse_from_rfc3339(&row.t_utc)
            .map_err(|e| FormatError::parse(path, line, format!("t_utc `{}`: {e}", row.t_utc)))?
            .with_timezone(&Utc);
        for (name, value) in [("mw_observed", row.mw_observed), ("h_estimate_mw_s", row.h_estimate_mw_s)] {
            if matches!(value, Some(x) if !x.is_finite()) {
                return Err(FormatError::parse(path, line, format!("{name} is not finite")));
            }
        }
        records.push(LedgerRecord {
            t_event,
            plant_id: row.plant_id,
            mw_observed: row.mw_observed,
            h_estimate_mw_s: row.h_estimate_mw_s,
        });
    }
    Ok(EventLedger::new(offset, records))
}

pub fn write_ledger(path: &Path, ledger: &EventLedger) -> FormatResult<()> {
    let mut file = create(path)?;
    writeln!(file, "{OFFSET_DIRECTIVE}{}", ledger.utc_offset).map_err(|e| FormatError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &ledger.records {
        w.serialize(LedgerRow {
            t_utc: r.t_event.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            plant_id: r.plant_id.clone(),
            mw_observed: r.mw_observed,
            h_estimate_mw_s: r.h_estimate_mw_s,
        })
        .map_err(|e| csv_error(path, e, &[], 0))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// One line of `estimates.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EstimateRecord {
    Estimated(InertiaEstimate),
    Skipped {
        t_event_s: f64,
        monitor_ids: Vec<String>,
        plant_id: Option<String>,
        reason: String,
    },
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> FormatResult<()> {
    let mut w = create(path)?;
    for item in items {
        append_jsonl(&mut w, item).map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn append_jsonl<T: Serialize>(w: &mut impl Write, item: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, item)?;
    w.write_all(b"\n")
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> FormatResult<Vec<T>> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| FormatError::parse(path, i as u64 + 1, e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> FormatResult<Vec<ConfirmedEvent>> {
    read_jsonl(path)
}
