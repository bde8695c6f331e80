//! Live detection over stream files that are still being appended to.
//!
//! Each file is tailed by polling. New whole lines go through the same CSV
//! parser as replay, Step 1 runs incrementally, and Step 2 runs once a
//! candidate has enough data after it. A fused event is written as soon as no
//! monitor can still contribute to its group, so the emitted set matches a
//! replay of the finished files.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use inertia_core::detector::{
    attribute_plant, fuse_monitors, step2_filter, CandidateEvent, ConfirmedEvent, DetectorConfig,
    MonitorMap, Step1Scanner, Step2Outcome,
};
use inertia_core::estimator::PlantSignature;
use inertia_core::stream::TIME_EPS;
use inertia_core::{Error as CoreError, SensorStream};
use log::{debug, info, warn};

use crate::commands::{ensure_parent, load_monitor_map, load_registry, DetectSummary};
use crate::config::RunConfig;
use crate::formats::{append_jsonl, StreamCsvParser};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowOptions {
    pub poll_interval: Duration,
    /// Stop once no file has grown for this long.
    pub idle_exit: Option<Duration>,
}

impl FollowOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            poll_interval: Duration::from_millis(cfg.input.poll_interval_ms),
            idle_exit: cfg.input.idle_exit_s.map(Duration::from_secs_f64),
        }
    }
}

struct Tail {
    path: PathBuf,
    offset: u64,
    partial: Vec<u8>,
    parser: StreamCsvParser,
    stream: SensorStream,
    scanner: Step1Scanner,
    awaiting: Vec<CandidateEvent>,
    skipped: Option<String>,
}

impl Tail {
    fn new(path: PathBuf, monitor_id: String, cfg: &DetectorConfig) -> Self {
        Self {
            parser: StreamCsvParser::new(&path),
            path,
            offset: 0,
            partial: Vec::new(),
            stream: SensorStream::new(monitor_id, Vec::new()).expect("empty stream is valid"),
            scanner: Step1Scanner::new(cfg.clone()),
            awaiting: Vec::new(),
            skipped: None,
        }
    }

    /// Reads whatever was appended since the last poll. Returns whether the
    /// file grew.
    fn poll(&mut self, last: bool) -> Result<bool> {
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
            Err(e) => return Err(e).with_context(|| format!("opening {}", self.path.display())),
        };
        let len = file.metadata()?.len();
        if len < self.offset {
            bail!("{} shrank while being followed", self.path.display());
        }
        let grew = len > self.offset;
        if grew {
            file.seek(SeekFrom::Start(self.offset))?;
            let mut buf = Vec::with_capacity((len - self.offset) as usize);
            Read::by_ref(&mut file).take(len - self.offset).read_to_end(&mut buf)?;
            self.offset += buf.len() as u64;
            self.partial.extend_from_slice(&buf);
        }
        let cut = if last {
            self.partial.len()
        } else {
            self.partial.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1)
        };
        if cut > 0 {
            let whole: Vec<u8> = self.partial.drain(..cut).collect();
            let samples = self.parser.feed(&whole)?;
            self.stream.extend(samples)?;
        }
        Ok(grew)
    }

    fn step(
        &mut self,
        cfg: &DetectorConfig,
        last: bool,
        summary: &mut DetectSummary,
        confirmed: &mut Vec<ConfirmedEvent>,
    ) -> Result<()> {
        if self.skipped.is_some() || self.stream.is_empty() {
            return Ok(());
        }
        let complete_until = if last {
            f64::INFINITY
        } else {
            self.stream.last_t().unwrap_or(f64::NEG_INFINITY)
        };
        match self.scanner.advance(&self.stream, complete_until) {
            Ok(found) => {
                summary.candidates += found.len();
                self.awaiting.extend(found);
            }
            Err(e @ CoreError::MissingVoltage { .. }) => {
                if last || (self.parser.header_seen() && !self.parser.has_voltage_column()) {
                    warn!("skipping monitor {}: {e}", self.stream.monitor_id());
                    self.skipped = Some(e.to_string());
                    summary.skipped += 1;
                }
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        }
        let have_until = self.stream.last_t().unwrap_or(f64::NEG_INFINITY);
        let lookahead = cfg.step2_lookahead();
        let mut still = Vec::new();
        for c in self.awaiting.drain(..) {
            if !last && have_until < c.t_event_s + lookahead {
                still.push(c);
                continue;
            }
            match step2_filter(&c, &self.stream, cfg) {
                Step2Outcome::Confirmed(ev) => confirmed.push(ev),
                Step2Outcome::Rejected { reason, .. } => {
                    *summary.rejected.entry(reason.to_string()).or_default() += 1;
                }
            }
        }
        self.awaiting = still;
        Ok(())
    }

    /// No event this monitor confirms later can be earlier than this.
    fn frontier(&self) -> f64 {
        if self.skipped.is_some() {
            return f64::INFINITY;
        }
        let samples = self.stream.samples();
        let scan = samples
            .get(self.scanner.position())
            .map(|s| s.t)
            .or(self.stream.last_t())
            .unwrap_or(f64::NEG_INFINITY);
        self.awaiting.iter().map(|c| c.t_event_s).fold(scan, f64::min)
    }
}

struct Emitter<'a> {
    cfg: &'a DetectorConfig,
    registry: &'a [PlantSignature],
    map: &'a MonitorMap,
    out: BufWriter<File>,
    pending: Vec<ConfirmedEvent>,
    written: usize,
}

impl Emitter<'_> {
    /// Writes every fusion group that can no longer gain members.
    fn release(&mut self, watermark: f64) -> Result<()> {
        self.pending.sort_by(|a, b| {
            a.t_event_s
                .total_cmp(&b.t_event_s)
                .then_with(|| a.monitor_ids.cmp(&b.monitor_ids))
        });
        let reach = self.cfg.fusion_window_s + TIME_EPS;
        while let Some(anchor) = self.pending.first().map(|e| e.t_event_s) {
            if anchor + reach >= watermark {
                break;
            }
            let n = self.pending.partition_point(|e| e.t_event_s - anchor <= reach);
            let group: Vec<ConfirmedEvent> = self.pending.drain(..n).collect();
            for ev in fuse_monitors(group, self.cfg) {
                let ev = attribute_plant(ev, self.registry, self.map);
                debug!("follow: event at {:.3} s from {:?}", ev.t_event_s, ev.monitor_ids);
                append_jsonl(&mut self.out, &ev)?;
                self.written += 1;
            }
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Follows the configured stream files, appending events to the events
/// output as they become final. Returns when the idle timeout expires, after
/// flushing everything still pending.
pub fn run_follow(cfg: &RunConfig, opts: FollowOptions) -> Result<DetectSummary> {
    cfg.validate()?;
    if cfg.input.streams.is_empty() {
        bail!("no input streams configured");
    }
    let registry = load_registry(cfg)?;
    let map = load_monitor_map(cfg)?;
    ensure_parent(&cfg.output.events)?;
    let out = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&cfg.output.events)
        .with_context(|| format!("creating {}", cfg.output.events.display()))?;
    let mut emitter = Emitter {
        cfg: &cfg.detector,
        registry: &registry,
        map: &map,
        out: BufWriter::new(out),
        pending: Vec::new(),
        written: 0,
    };
    let mut tails: Vec<Tail> = cfg
        .input
        .streams
        .iter()
        .map(|s| Tail::new(s.path.clone(), s.monitor_id(), &cfg.detector))
        .collect();
    let mut summary = DetectSummary {
        streams: tails.len(),
        ..Default::default()
    };
    info!("following {} stream files", tails.len());
    let mut last_growth = Instant::now();
    loop {
        let mut grew = false;
        for t in &mut tails {
            grew |= t.poll(false)?;
            t.step(&cfg.detector, false, &mut summary, &mut emitter.pending)?;
        }
        let watermark = tails.iter().map(Tail::frontier).fold(f64::INFINITY, f64::min);
        emitter.release(watermark)?;
        if grew {
            last_growth = Instant::now();
        } else if opts.idle_exit.is_some_and(|d| last_growth.elapsed() >= d) {
            break;
        }
        std::thread::sleep(opts.poll_interval);
    }
    for t in &mut tails {
        t.poll(true)?;
        t.step(&cfg.detector, true, &mut summary, &mut emitter.pending)?;
    }
    emitter.release(f64::INFINITY)?;
    summary.confirmed = emitter.written;
    Ok(summary)
}
