//! Two-step pump switching-off trigger.
//!
//! Step 1 flags a monitor sample when three local features all clear their
//! thresholds: a short-window RoCoF spike, a voltage step, and a system
//! frequency deviation. After each candidate the monitor is held off for a
//! fixed interval. Step 2 rejects candidates whose post-event detrended
//! frequency looks like a sustained oscillation. Confirmed events from several
//! monitors are then fused and attributed to a nearby plant.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PlantSignature;
use crate::signal::{detrend, max_frequency_deviation, rocof_samples, voltage_step};
use crate::stream::{SensorStream, Window, TIME_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub rocof_spike_threshold_hz_per_s: f64,
    pub spike_window_s: f64,
    pub voltage_step_threshold_pu: f64,
    /// Gap between the event and each voltage median span.
    pub v_settle_s: f64,
    pub v_span_s: f64,
    pub deviation_threshold_hz: f64,
    pub deviation_window_s: f64,
    pub holdoff_s: f64,
    /// Minimum number of sign-alternating residual half-cycles for an oscillation.
    pub osc_cycle_min: usize,
    pub osc_band_hz: (f64, f64),
    /// Length of the post-event span inspected by the oscillation rule.
    pub osc_window_s: f64,
    /// Residuals smaller than this do not change sign.
    pub osc_deadband_hz: f64,
    pub fusion_window_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            rocof_spike_threshold_hz_per_s: 0.05,
            spike_window_s: 0.2,
            voltage_step_threshold_pu: 0.005,
            v_settle_s: 0.2,
            v_span_s: 0.5,
            deviation_threshold_hz: 0.008,
            deviation_window_s: 10.0,
            holdoff_s: 30.0,
            osc_cycle_min: 6,
            osc_band_hz: (0.1, 2.0),
            osc_window_s: 8.0,
            osc_deadband_hz: 0.001,
            fusion_window_s: 2.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rocof_spike_threshold_hz_per_s", self.rocof_spike_threshold_hz_per_s),
            ("spike_window_s", self.spike_window_s),
            ("voltage_step_threshold_pu", self.voltage_step_threshold_pu),
            ("v_span_s", self.v_span_s),
            ("deviation_threshold_hz", self.deviation_threshold_hz),
            ("deviation_window_s", self.deviation_window_s),
            ("holdoff_s", self.holdoff_s),
            ("osc_window_s", self.osc_window_s),
            ("fusion_window_s", self.fusion_window_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::InvalidConfig(format!("detector.{name} must be > 0, got {value}")));
            }
        }
        if !(self.v_settle_s >= 0.0) || !(self.osc_deadband_hz >= 0.0) {
            return Err(Error::InvalidConfig(
                "detector.v_settle_s and detector.osc_deadband_hz must be >= 0".into(),
            ));
        }
        if self.holdoff_s <= self.spike_window_s {
            return Err(Error::InvalidConfig("detector.holdoff_s must exceed spike_window_s".into()));
        }
        if self.osc_cycle_min == 0 {
            return Err(Error::InvalidConfig("detector.osc_cycle_min must be >= 1".into()));
        }
        if !(self.osc_band_hz.0 < self.osc_band_hz.1) {
            return Err(Error::InvalidConfig("detector.osc_band_hz low must be < high".into()));
        }
        Ok(())
    }

    /// How far past a sample the Step-1 features look.
    pub fn step1_lookahead(&self) -> f64 {
        (0.5 * self.spike_window_s)
            .max(self.v_settle_s + self.v_span_s)
            .max(0.75 * self.deviation_window_s)
    }

    /// How far past a candidate Step 2 needs data.
    pub fn step2_lookahead(&self) -> f64 {
        self.spike_window_s + self.osc_window_s
    }

    fn deviation_window(&self, t: f64) -> Window {
        // A quarter of the window leads the sample so the reference median
        // (leading 20%) is taken before the event.
        Window::new(t - 0.25 * self.deviation_window_s, self.deviation_window_s)
    }

    fn spike_window(&self, t: f64) -> Window {
        Window::new(t - 0.5 * self.spike_window_s, self.spike_window_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvent {
    pub t_event_s: f64,
    pub monitor_id: String,
    pub spike_rocof_hz_per_s: f64,
    pub v_step_pu: f64,
    pub f_deviation_hz: f64,
}

impl CandidateEvent {
    /// True when every stored feature clears its threshold in `cfg`.
    pub fn exceeds(&self, cfg: &DetectorConfig) -> bool {
        self.spike_rocof_hz_per_s.abs() >= cfg.rocof_spike_threshold_hz_per_s
            && self.v_step_pu.abs() >= cfg.voltage_step_threshold_pu
            && self.f_deviation_hz >= cfg.deviation_threshold_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmedEvent {
    /// Earliest contributing candidate time, seconds since stream epoch.
    pub t_event_s: f64,
    /// Sorted, unique.
    pub monitor_ids: Vec<String>,
    pub plant_id: Option<String>,
    /// Contributing candidates sorted by time then monitor.
    pub features: Vec<CandidateEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ConfirmedEvent {
    pub fn from_candidate(candidate: CandidateEvent) -> Self {
        Self {
            t_event_s: candidate.t_event_s,
            monitor_ids: vec![candidate.monitor_id.clone()],
            plant_id: None,
            features: vec![candidate],
            diagnostic: None,
        }
    }

    /// An event with no detector provenance, e.g. a known event time from
    /// simulator truth.
    pub fn at(t_event_s: f64) -> Self {
        Self {
            t_event_s,
            monitor_ids: Vec::new(),
            plant_id: None,
            features: Vec::new(),
            diagnostic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Oscillation,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Oscillation => "oscillation",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step2Outcome {
    Confirmed(ConfirmedEvent),
    Rejected {
        candidate: CandidateEvent,
        reason: RejectReason,
    },
}

#[derive(Debug, Clone, Copy)]
struct Features {
    spike: f64,
    v_step: f64,
    deviation: f64,
}

/// Incremental Step-1 scan over one monitor.
///
/// `advance` only evaluates samples whose feature windows lie entirely at or
/// before `complete_until`, so feeding a growing stream in chunks yields the
/// same candidates as one pass over the finished stream.
#[derive(Debug, Clone)]
pub struct Step1Scanner {
    cfg: DetectorConfig,
    next_idx: usize,
    holdoff_until: f64,
}

impl Step1Scanner {
    pub fn new(cfg: DetectorConfig) -> Self {
        Self {
            cfg,
            next_idx: 0,
            holdoff_until: f64::NEG_INFINITY,
        }
    }

    fn spike_at(&self, stream: &SensorStream, t: f64) -> Option<f64> {
        let w = self.cfg.spike_window(t);
        rocof_samples(stream.select(&w), &w).ok().map(|r| r.slope)
    }

    fn features_at(&self, stream: &SensorStream, t: f64) -> Result<Option<Features>> {
        let cfg = &self.cfg;
        let Some(spike) = self.spike_at(stream, t) else {
            return Ok(None);
        };
        if spike.abs() < cfg.rocof_spike_threshold_hz_per_s {
            return Ok(None);
        }
        let v_step = match voltage_step(stream, t, cfg.v_settle_s, cfg.v_span_s) {
            Ok(v) => v,
            Err(e @ Error::MissingVoltage { .. }) => return Err(e),
            Err(_) => return Ok(None),
        };
        if v_step.abs() < cfg.voltage_step_threshold_pu {
            return Ok(None);
        }
        let Ok(deviation) = max_frequency_deviation(stream, &cfg.deviation_window(t)) else {
            return Ok(None);
        };
        if deviation < cfg.deviation_threshold_hz {
            return Ok(None);
        }
        Ok(Some(Features {
            spike,
            v_step,
            deviation,
        }))
    }

    /// Index of the next sample the scanner will examine. No later candidate
    /// can be earlier than this sample.
    pub fn position(&self) -> usize {
        self.next_idx
    }

    pub fn advance(
        &mut self,
        stream: &SensorStream,
        complete_until: f64,
    ) -> Result<Vec<CandidateEvent>> {
        if !stream.has_voltage() {
            return Err(Error::MissingVoltage {
                monitor_id: stream.monitor_id().to_string(),
            });
        }
        let lookahead = self.cfg.step1_lookahead();
        let ready = |t: f64| t + lookahead <= complete_until;
        let samples = stream.samples();
        let mut out = Vec::new();
        while self.next_idx < samples.len() {
            let i = self.next_idx;
            let t = samples[i].t;
            if !ready(t) {
                break;
            }
            if t < self.holdoff_until - TIME_EPS {
                self.next_idx += 1;
                continue;
            }
            let Some(first) = self.features_at(stream, t)? else {
                self.next_idx += 1;
                continue;
            };
            // Extend over the run of spike-passing samples and keep the
            // sharpest fully-triggering one.
            let mut best = (i, first);
            let mut j = i;
            let mut run_closed = false;
            while j + 1 < samples.len() {
                let tn = samples[j + 1].t;
                if !ready(tn) {
                    break;
                }
                let spike_ok = self
                    .spike_at(stream, tn)
                    .is_some_and(|s| s.abs() >= self.cfg.rocof_spike_threshold_hz_per_s);
                if !spike_ok {
                    run_closed = true;
                    break;
                }
                if let Some(f) = self.features_at(stream, tn)? {
                    if f.spike.abs() > best.1.spike.abs() {
                        best = (j + 1, f);
                    }
                }
                j += 1;
            }
            if !run_closed && j + 1 >= samples.len() && complete_until.is_finite() {
                // The run may continue into data that has not arrived yet.
                break;
            }
            if !run_closed && j + 1 < samples.len() {
                break;
            }
            let (k, f) = best;
            let t_event = samples[k].t;
            out.push(CandidateEvent {
                t_event_s: t_event,
                monitor_id: stream.monitor_id().to_string(),
                spike_rocof_hz_per_s: f.spike,
                v_step_pu: f.v_step,
                f_deviation_hz: f.deviation,
            });
            debug!("{}: step-1 candidate at {t_event:.3} s", stream.monitor_id());
            self.holdoff_until = t_event + self.cfg.holdoff_s;
            self.next_idx = j + 1;
        }
        Ok(out)
    }
}

/// Step 1 over a complete stream.
pub fn step1_scan(stream: &SensorStream, cfg: &DetectorConfig) -> Result<Vec<CandidateEvent>> {
    cfg.validate()?;
    Step1Scanner::new(cfg.clone()).advance(stream, f64::INFINITY)
}

/// Sign-change statistics of residuals with a deadband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alternation {
    /// Number of same-sign runs (half-cycles), including partial end runs.
    pub half_cycles: usize,
    /// Frequency implied by the spacing of sign changes, when ≥ 2 changes.
    pub implied_hz: Option<f64>,
}

pub fn sign_alternation(residuals: &[(f64, f64)], deadband: f64) -> Alternation {
    let mut sign = 0i8;
    let mut changes: Vec<f64> = Vec::new();
    for &(t, r) in residuals {
        let s = if r > deadband {
            1
        } else if r < -deadband {
            -1
        } else {
            continue;
        };
        if sign != 0 && s != sign {
            changes.push(t);
        }
        sign = s;
    }
    let half_cycles = if sign == 0 { 0 } else { changes.len() + 1 };
    let implied_hz = match (changes.first(), changes.last()) {
        (Some(a), Some(b)) if changes.len() >= 2 && b > a => {
            Some((changes.len() - 1) as f64 / (2.0 * (b - a)))
        }
        _ => None,
    };
    Alternation {
        half_cycles,
        implied_hz,
    }
}

/// Step 2: reject candidates followed by a sustained in-band oscillation.
pub fn step2_filter(
    candidate: &CandidateEvent,
    stream: &SensorStream,
    cfg: &DetectorConfig,
) -> Step2Outcome {
    let window = Window::right_closed(candidate.t_event_s + cfg.spike_window_s, cfg.osc_window_s);
    if let Ok(residuals) = detrend(stream, &window) {
        let alt = sign_alternation(&residuals, cfg.osc_deadband_hz);
        let in_band = alt
            .implied_hz
            .is_some_and(|f| f >= cfg.osc_band_hz.0 && f <= cfg.osc_band_hz.1);
        if alt.half_cycles >= cfg.osc_cycle_min && in_band {
            debug!(
                "{}: rejecting {:.3} s as oscillation ({} half-cycles, {:.3} Hz)",
                candidate.monitor_id,
                candidate.t_event_s,
                alt.half_cycles,
                alt.implied_hz.unwrap_or(f64::NAN)
            );
            return Step2Outcome::Rejected {
                candidate: candidate.clone(),
                reason: RejectReason::Oscillation,
            };
        }
    }
    Step2Outcome::Confirmed(ConfirmedEvent::from_candidate(candidate.clone()))
}

fn merge_into(acc: &mut ConfirmedEvent, ev: ConfirmedEvent) {
    acc.t_event_s = acc.t_event_s.min(ev.t_event_s);
    let ids: BTreeSet<String> = acc.monitor_ids.drain(..).chain(ev.monitor_ids).collect();
    acc.monitor_ids = ids.into_iter().collect();
    acc.features.extend(ev.features);
    acc.plant_id = match (acc.plant_id.take(), ev.plant_id) {
        (Some(a), Some(b)) if a != b => None,
        (a, b) => a.or(b),
    };
    if acc.diagnostic.is_none() {
        acc.diagnostic = ev.diagnostic;
    }
}

fn sort_features(features: &mut Vec<CandidateEvent>) {
    features.sort_by(|a, b| {
        a.t_event_s
            .total_cmp(&b.t_event_s)
            .then_with(|| a.monitor_id.cmp(&b.monitor_id))
            .then_with(|| a.spike_rocof_hz_per_s.total_cmp(&b.spike_rocof_hz_per_s))
            .then_with(|| a.v_step_pu.total_cmp(&b.v_step_pu))
            .then_with(|| a.f_deviation_hz.total_cmp(&b.f_deviation_hz))
    });
    features.dedup();
}

/// Merge events from any monitors that fall within `fusion_window_s` of the
/// first event of a group. Single-monitor events survive unchanged.
pub fn fuse_monitors(events: Vec<ConfirmedEvent>, cfg: &DetectorConfig) -> Vec<ConfirmedEvent> {
    let mut events = events;
    events.sort_by(|a, b| {
        a.t_event_s
            .total_cmp(&b.t_event_s)
            .then_with(|| a.monitor_ids.cmp(&b.monitor_ids))
    });
    let mut fused: Vec<ConfirmedEvent> = Vec::new();
    for ev in events {
        match fused.last_mut() {
            Some(group) if ev.t_event_s - group.t_event_s <= cfg.fusion_window_s + TIME_EPS => {
                merge_into(group, ev);
            }
            _ => fused.push(ev),
        }
    }
    for ev in &mut fused {
        sort_features(&mut ev.features);
    }
    fused
}

/// Monitor → nearby plant table.
pub type MonitorMap = BTreeMap<String, Option<String>>;

/// Attach the plant that the contributing monitors sit near. Conflicting
/// claims leave the plant unset with a diagnostic.
pub fn attribute_plant(
    mut event: ConfirmedEvent,
    registry: &[PlantSignature],
    monitor_map: &MonitorMap,
) -> ConfirmedEvent {
    let claimed: BTreeSet<&str> = event
        .monitor_ids
        .iter()
        .filter_map(|m| monitor_map.get(m).and_then(|p| p.as_deref()))
        .collect();
    match claimed.len() {
        0 => event.plant_id = None,
        1 => {
            let plant = claimed.into_iter().next().unwrap_or_default();
            if registry.iter().any(|s| s.plant_id == plant) {
                event.plant_id = Some(plant.to_string());
            } else {
                event.plant_id = None;
                event.diagnostic = Some(format!("plant {plant} is not in the registry"));
            }
        }
        _ => {
            let names: Vec<&str> = claimed.into_iter().collect();
            event.plant_id = None;
            event.diagnostic = Some(format!("ambiguous plant: {}", names.join(", ")));
        }
    }
    event
}

/// Per-monitor output of Step 1 and Step 2.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorOutcome {
    pub monitor_id: String,
    pub candidates: Vec<CandidateEvent>,
    pub confirmed: Vec<ConfirmedEvent>,
    pub rejected: Vec<(CandidateEvent, RejectReason)>,
}

pub fn detect_monitor(stream: &SensorStream, cfg: &DetectorConfig) -> Result<MonitorOutcome> {
    let candidates = step1_scan(stream, cfg)?;
    let mut outcome = MonitorOutcome {
        monitor_id: stream.monitor_id().to_string(),
        ..Default::default()
    };
    for c in &candidates {
        match step2_filter(c, stream, cfg) {
            Step2Outcome::Confirmed(ev) => outcome.confirmed.push(ev),
            Step2Outcome::Rejected { candidate, reason } => outcome.rejected.push((candidate, reason)),
        }
    }
    outcome.candidates = candidates;
    Ok(outcome)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionReport {
    pub events: Vec<ConfirmedEvent>,
    pub streams: usize,
    pub candidates: usize,
    pub rejected: BTreeMap<String, usize>,
    /// Monitors excluded from Step 1, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl DetectionReport {
    pub fn confirmed_before_fusion(&self) -> usize {
        self.candidates - self.rejected.values().sum::<usize>()
    }
}

/// Full trigger: per-monitor Step 1/Step 2 run concurrently, then fusion and
/// plant attribution.
pub fn detect(
    streams: &[SensorStream],
    cfg: &DetectorConfig,
    registry: &[PlantSignature],
    monitor_map: &MonitorMap,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<MonitorOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = streams
            .iter()
            .map(|s| scope.spawn(move || detect_monitor(s, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("detector worker panicked"))
            .collect()
    });
    let mut outcomes_ok = Vec::new();
    let mut report = DetectionReport {
        streams: streams.len(),
        ..Default::default()
    };
    for (stream, outcome) in streams.iter().zip(outcomes) {
        match outcome {
            Ok(o) => outcomes_ok.push(o),
            Err(e @ Error::MissingVoltage { .. }) => {
                warn!("skipping monitor {}: {e}", stream.monitor_id());
                report.skipped.push((stream.monitor_id().to_string(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    report.events = combine(outcomes_ok, &mut report, cfg, registry, monitor_map);
    Ok(report)
}

/// Fuse and attribute per-monitor outcomes, updating the report counters.
pub fn combine(
    outcomes: Vec<MonitorOutcome>,
    report: &mut DetectionReport,
    cfg: &DetectorConfig,
    registry: &[PlantSignature],
    monitor_map: &MonitorMap,
) -> Vec<ConfirmedEvent> {
    let mut confirmed = Vec::new();
    for o in outcomes {
        report.candidates += o.candidates.len();
        for (_, reason) in &o.rejected {
            *report.rejected.entry(reason.to_string()).or_default() += 1;
        }
        confirmed.extend(o.confirmed);
    }
    fuse_monitors(confirmed, cfg)
        .into_iter()
        .map(|ev| attribute_plant(ev, registry, monitor_map))
        .collect()
}
