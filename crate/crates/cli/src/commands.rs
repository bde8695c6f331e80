//! Subcommand implementations. Each takes already-parsed configuration and
//! returns a summary; printing is left to the binary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inertia_core::analytics::{
    daily_event_counts, monthly_mw_profile, mw_step_stats, time_of_day_profile, EventLedger,
};
use inertia_core::campaign::{evaluate_campaign, summarize, sweep_campaign, CaseResult, DirectionSummary, SweepSummary};
use inertia_core::detector::{detect, ConfirmedEvent, DetectionReport, MonitorMap};
use inertia_core::estimator::{estimate, PlantSignature};
use inertia_core::sim::{run_campaign, simulate, SimScenario};
use inertia_core::{Error as CoreError, SensorStream};
use log::{info, warn};
use serde::Serialize;

use crate::config::{AnalyticsConfig, CampaignSpec, RunConfig};
use crate::formats::{
    parse_stream_csv, read_events, read_monitor_map, read_registry, write_jsonl, write_stream_csv,
    EstimateRecord,
};

/// Counts reported by `detect` on the diagnostics channel.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectSummary {
    pub streams: usize,
    pub skipped: usize,
    pub candidates: usize,
    pub confirmed: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl DetectSummary {
    pub fn from_report(report: &DetectionReport) -> Self {
        Self {
            streams: report.streams,
            skipped: report.skipped.len(),
            candidates: report.candidates,
            confirmed: report.events.len(),
            rejected: report.rejected.clone(),
        }
    }
}

impl fmt::Display for DetectSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "streams={} skipped={} candidates={} confirmed={} rejected:",
            self.streams, self.skipped, self.candidates, self.confirmed
        )?;
        if self.rejected.is_empty() {
            write!(f, " none")
        } else {
            self.rejected.iter().try_for_each(|(k, v)| write!(f, " {k}={v}"))
        }
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Reads every configured stream, one reader thread per file.
pub fn load_streams(cfg: &RunConfig) -> Result<Vec<SensorStream>> {
    if cfg.input.streams.is_empty() {
        bail!("no input streams configured");
    }
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .input
            .streams
            .iter()
            .map(|s| scope.spawn(move || parse_stream_csv(&s.path, &s.monitor_id())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reader thread panicked"))
            .collect()
    });
    results.into_iter().map(|r| r.map_err(Into::into)).collect()
}

pub fn load_registry(cfg: &RunConfig) -> Result<Vec<PlantSignature>> {
    match &cfg.registry_path {
        Some(p) => Ok(read_registry(p)?),
        None => Ok(Vec::new()),
    }
}

pub fn load_monitor_map(cfg: &RunConfig) -> Result<MonitorMap> {
    match &cfg.monitor_map_path {
        Some(p) => Ok(read_monitor_map(p)?),
        None => Ok(MonitorMap::new()),
    }
}

/// Replay detection over complete files; writes `events.jsonl`.
pub fn cmd_detect(cfg: &RunConfig) -> Result<DetectSummary> {
    cfg.validate()?;
    let registry = load_registry(cfg)?;
    let map = load_monitor_map(cfg)?;
    let streams = load_streams(cfg)?;
    let report = detect(&streams, &cfg.detector, &registry, &map)?;
    ensure_parent(&cfg.output.events)?;
    write_jsonl(&cfg.output.events, &report.events)?;
    let summary = DetectSummary::from_report(&report);
    info!("wrote {} events to {}", summary.confirmed, cfg.output.events.display());
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub events: usize,
    pub estimated: usize,
    pub skipped: usize,
}

fn skip(ev: &ConfirmedEvent, reason: String) -> EstimateRecord {
    EstimateRecord::Skipped {
        t_event_s: ev.t_event_s,
        monitor_ids: ev.monitor_ids.clone(),
        plant_id: ev.plant_id.clone(),
        reason,
    }
}

/// One record per event: the estimate from the first contributing monitor
/// (in id order) whose data supports it, or a skip record saying why not.
pub fn estimate_events(
    events: &[ConfirmedEvent],
    streams: &[SensorStream],
    registry: &[PlantSignature],
    cfg: &RunConfig,
) -> Vec<EstimateRecord> {
    let by_id: BTreeMap<&str, &SensorStream> = streams.iter().map(|s| (s.monitor_id(), s)).collect();
    events
        .iter()
        .map(|ev| {
            let Some(plant) = &ev.plant_id else {
                let why = ev.diagnostic.clone().unwrap_or_else(|| "no plant attributed".into());
                return skip(ev, why);
            };
            let Some(sig) = registry.iter().find(|s| &s.plant_id == plant) else {
                return skip(ev, format!("plant {plant} is not in the registry"));
            };
            let mut failures = Vec::new();
            for id in &ev.monitor_ids {
                let Some(stream) = by_id.get(id.as_str()) else {
                    failures.push(format!("{id}: stream not loaded"));
                    continue;
                };
                match estimate(ev, stream, sig, &cfg.estimator) {
                    Ok(est) => return EstimateRecord::Estimated(est),
                    Err(e) => failures.push(format!("{id}: {e}")),
                }
            }
            if failures.is_empty() {
                failures.push("event has no contributing monitor".into());
            }
            skip(ev, failures.join("; "))
        })
        .collect()
}

/// Estimates inertia for every event in `events_path`; writes `estimates.jsonl`.
pub fn cmd_estimate(cfg: &RunConfig, events_path: &Path) -> Result<EstimateSummary> {
    if cfg.registry_path.is_none() {
        bail!("estimate needs registry_path in the config");
    }
    cfg.validate()?;
    let registry = load_registry(cfg)?;
    let streams = load_streams(cfg)?;
    let events = read_events(events_path)?;
    let records = estimate_events(&events, &streams, &registry, cfg);
    ensure_parent(&cfg.output.estimates)?;
    write_jsonl(&cfg.output.estimates, &records)?;
    let estimated = records
        .iter()
        .filter(|r| matches!(r, EstimateRecord::Estimated(_)))
        .count();
    Ok(EstimateSummary {
        events: events.len(),
        estimated,
        skipped: records.len() - estimated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignOutput {
    pub cases: Vec<CaseResult>,
    pub summary: Vec<DirectionSummary>,
    pub sweep: Vec<SweepSummary>,
}

/// Runs the campaign in memory.
pub fn run_campaign_spec(spec: &CampaignSpec) -> Result<CampaignOutput> {
    spec.validate()?;
    let cases = run_campaign(&spec.scenario, &spec.variations)?;
    let results = evaluate_campaign(&cases, &spec.estimator);
    let summary = summarize(&results);
    let sweep = sweep_campaign(&cases, &spec.estimator, &spec.sweep_windows_s);
    Ok(CampaignOutput {
        cases: results,
        summary,
        sweep,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Files written by [`cmd_campaign`], relative to the output directory.
pub const CAMPAIGN_FILES: [&str; 6] = [
    "cases.csv",
    "cases.json",
    "summary.csv",
    "summary.json",
    "sweep.csv",
    "sweep.json",
];

/// Runs a campaign and writes per-case, per-direction and sweep tables.
pub fn cmd_campaign(spec: &CampaignSpec, out_dir: &Path) -> Result<CampaignOutput> {
    let out = run_campaign_spec(spec)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_csv(&out_dir.join("cases.csv"), &out.cases)?;
    write_json(&out_dir.join("cases.json"), &out.cases)?;
    write_csv(&out_dir.join("summary.csv"), &out.summary)?;
    write_json(&out_dir.join("summary.json"), &out.summary)?;
    write_csv(&out_dir.join("sweep.csv"), &out.sweep)?;
    write_json(&out_dir.join("sweep.json"), &out.sweep)?;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalyzeSummary {
    pub plants: Vec<String>,
    /// Reports that could not be produced, e.g. too few records.
    pub skipped: Vec<String>,
}

#[derive(Serialize)]
struct HistogramRow {
    bin_lo_mw: f64,
    bin_hi_mw: f64,
    count: usize,
}

#[derive(Serialize)]
struct DayRow {
    date: String,
    count: usize,
}

#[derive(Serialize)]
struct HourRow {
    hour: usize,
    count: usize,
}

fn or_skip<T>(
    result: inertia_core::Result<T>,
    what: &str,
    plant: &str,
    skipped: &mut Vec<String>,
) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e @ CoreError::InsufficientRecords { .. }) => {
            warn!("{plant}: no {what} report: {e}");
            skipped.push(format!("{plant}/{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes per-plant reports under `reports_dir/<plant_id>/`.
pub fn cmd_analyze(ledger: &EventLedger, reports_dir: &Path, opts: &AnalyticsConfig) -> Result<AnalyzeSummary> {
    opts.validate()?;
    let plants: std::collections::BTreeSet<&str> =
        ledger.records.iter().map(|r| r.plant_id.as_str()).collect();
    let mut summary = AnalyzeSummary::default();
    for plant in plants {
        let dir = reports_dir.join(plant);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let skipped = &mut summary.skipped;
        if let Some(stats) = or_skip(mw_step_stats(ledger, plant, opts.bin_width_mw), "mw_step_stats", plant, skipped)? {
            write_json(&dir.join("mw_step_stats.json"), &stats)?;
            let h = &stats.histogram;
            let rows: Vec<HistogramRow> = h
                .counts
                .iter()
                .enumerate()
                .map(|(i, &count)| HistogramRow {
                    bin_lo_mw: h.edges_mw[i],
                    bin_hi_mw: h.edges_mw[i + 1],
                    count,
                })
                .collect();
            write_csv(&dir.join("mw_histogram.csv"), &rows)?;
        }
        if let Some(months) = or_skip(monthly_mw_profile(ledger, plant), "monthly_profile", plant, skipped)? {
            write_json(&dir.join("monthly_profile.json"), &months)?;
            write_csv(&dir.join("monthly_profile.csv"), &months)?;
        }
        if let Some(daily) = or_skip(daily_event_counts(ledger, plant), "daily_counts", plant, skipped)? {
            write_json(&dir.join("daily_counts.json"), &daily)?;
            let rows: Vec<DayRow> = daily
                .days
                .iter()
                .map(|d| DayRow {
                    date: d.date.to_string(),
                    count: d.count,
                })
                .collect();
            write_csv(&dir.join("daily_counts.csv"), &rows)?;
        }
        if let Some(tod) = or_skip(time_of_day_profile(ledger, plant, opts.reference()), "time_of_day", plant, skipped)? {
            write_json(&dir.join("time_of_day.json"), &tod)?;
            let rows: Vec<HourRow> = tod
                .hourly_counts
                .iter()
                .enumerate()
                .map(|(hour, &count)| HourRow { hour, count })
                .collect();
            write_csv(&dir.join("time_of_day.csv"), &rows)?;
        }
        summary.plants.push(plant.to_string());
    }
    write_json(&reports_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Simulates a scenario and exports one stream CSV per monitor plus
/// `truth.json`. Returns the written stream paths.
pub fn cmd_simulate(scenario: &SimScenario, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let trace = simulate(scenario)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut paths = Vec::new();
    for s in &trace.streams {
        let p = out_dir.join(format!("{}.csv", s.monitor_id()));
        write_stream_csv(&p, s)?;
        paths.push(p);
    }
    write_json(&out_dir.join("truth.json"), &trace.truth)?;
    Ok(paths)
}
