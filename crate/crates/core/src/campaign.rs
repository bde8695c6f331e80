//! Scoring simulator campaigns: improved vs traditional estimates against the
//! known inertia, per ramp direction, and the RoCoF window-size sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::ConfirmedEvent;
use crate::error::{Error, Result};
use crate::estimator::{
    error_rate, estimate, traditional_estimate, window_sweep, EstimatorConfig, PlantSignature,
};
use crate::sim::{CampaignCase, RampDirection, SimTrace};
use crate::stream::SensorStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub direction: RampDirection,
    pub seed: u64,
    pub h_true_mw_s: f64,
    pub delta_p_mw: f64,
    pub t_event_s: f64,
    pub truth_pre_rocof_hz_per_s: f64,
    pub truth_event_rocof_hz_per_s: f64,
    pub improved_h_mw_s: Option<f64>,
    pub traditional_h_mw_s: Option<f64>,
    pub improved_error: Option<f64>,
    pub traditional_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Signature whose MW step is the simulated event size.
pub fn truth_signature(plant_id: &str, delta_p_mw: f64) -> PlantSignature {
    PlantSignature {
        plant_id: plant_id.to_string(),
        region: "sim".into(),
        unit_capacity_mw: delta_p_mw.abs(),
        mw_step_mean_mw: delta_p_mw.abs(),
        mw_step_tolerance: 0.0,
    }
}

/// Event time as a detector would report it: the first sample at or after
/// the true step.
pub fn observed_event(stream: &SensorStream, t_true: f64, plant_id: &str) -> Result<ConfirmedEvent> {
    let idx = stream.index_at_or_after(t_true);
    let sample = stream
        .samples()
        .get(idx)
        .ok_or_else(|| Error::InsufficientData(format!("no sample after t = {t_true}")))?;
    let mut ev = ConfirmedEvent::at(sample.t);
    ev.monitor_ids = vec![stream.monitor_id().to_string()];
    ev.plant_id = Some(plant_id.to_string());
    Ok(ev)
}

fn first_event(trace: &SimTrace) -> Result<(&SensorStream, ConfirmedEvent, PlantSignature)> {
    let truth = trace
        .truth
        .events
        .first()
        .ok_or_else(|| Error::InvalidScenario(vec!["campaign scenario has no event".into()]))?;
    let stream = trace
        .streams
        .first()
        .ok_or_else(|| Error::InvalidScenario(vec!["campaign scenario has no monitor".into()]))?;
    let ev = observed_event(stream, truth.t_s, &truth.plant_id)?;
    Ok((stream, ev, truth_signature(&truth.plant_id, truth.delta_p_mw)))
}

/// Score the first event of one campaign case with both methods.
pub fn evaluate_case(case: &CampaignCase, cfg: &EstimatorConfig) -> CaseResult {
    let trace = &case.trace;
    let truth = trace.truth.events.first();
    let mut result = CaseResult {
        case: case.index,
        direction: case.direction,
        seed: case.scenario.noise.seed,
        h_true_mw_s: trace.truth.h_true_mw_s,
        delta_p_mw: truth.map_or(f64::NAN, |t| t.delta_p_mw),
        t_event_s: f64::NAN,
        truth_pre_rocof_hz_per_s: truth.map_or(f64::NAN, |t| t.pre_event_rocof_hz_per_s),
        truth_event_rocof_hz_per_s: truth.map_or(f64::NAN, |t| t.event_rocof_hz_per_s),
        improved_h_mw_s: None,
        traditional_h_mw_s: None,
        improved_error: None,
        traditional_error: None,
        failure: None,
    };
    let (stream, ev, sig) = match first_event(trace) {
        Ok(x) => x,
        Err(e) => {
            result.failure = Some(e.to_string());
            return result;
        }
    };
    result.t_event_s = ev.t_event_s;
    let h_true = trace.truth.h_true_mw_s;
    let mut failures = Vec::new();
    match estimate(&ev, stream, &sig, cfg) {
        Ok(est) => {
            result.improved_h_mw_s = Some(est.h_mw_s);
            result.improved_error = error_rate(est.h_mw_s, h_true).ok();
        }
        Err(e) => failures.push(format!("improved: {e}")),
    }
    match traditional_estimate(&ev, stream, &sig, cfg) {
        Ok(est) => {
            result.traditional_h_mw_s = Some(est.h_mw_s);
            result.traditional_error = error_rate(est.h_mw_s, h_true).ok();
        }
        Err(e) => failures.push(format!("traditional: {e}")),
    }
    if !failures.is_empty() {
        result.failure = Some(failures.join("; "));
    }
    result
}

pub fn evaluate_campaign(cases: &[CampaignCase], cfg: &EstimatorConfig) -> Vec<CaseResult> {
    cases.iter().map(|c| evaluate_case(c, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub direction: RampDirection,
    pub cases: usize,
    pub improved_mean_abs_error: f64,
    pub traditional_mean_abs_error: f64,
    pub improved_failures: usize,
    pub traditional_failures: usize,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean absolute error rates per ramp direction, over cases where the method
/// produced an estimate.
pub fn summarize(results: &[CaseResult]) -> Vec<DirectionSummary> {
    let mut groups: BTreeMap<RampDirection, Vec<&CaseResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.direction).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(direction, rows)| {
            let imp: Vec<f64> = rows.iter().filter_map(|r| r.improved_error).collect();
            let trad: Vec<f64> = rows.iter().filter_map(|r| r.traditional_error).collect();
            DirectionSummary {
                direction,
                cases: rows.len(),
                improved_failures: rows.len() - imp.len(),
                traditional_failures: rows.len() - trad.len(),
                improved_mean_abs_error: mean(&imp),
                traditional_mean_abs_error: mean(&trad),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub window_length_s: f64,
    pub cases_ok: usize,
    pub cases_failed: usize,
    pub mean_abs_error: f64,
}

/// Window-size sweep of the improved estimate over every case.
pub fn sweep_campaign(
    cases: &[CampaignCase],
    cfg: &EstimatorConfig,
    windows: &[f64],
) -> Vec<SweepSummary> {
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); windows.len()];
    let mut failed = vec![0usize; windows.len()];
    for case in cases {
        let Ok((stream, ev, sig)) = first_event(&case.trace) else {
            failed.iter_mut().for_each(|f| *f += 1);
            continue;
        };
        let rows = window_sweep(&ev, stream, &sig, cfg, windows);
        for (i, row) in rows.iter().enumerate() {
            match &row.outcome {
                Ok(est) => errors[i].push(error_rate(est.h_mw_s, case.trace.truth.h_true_mw_s).unwrap_or(f64::NAN)),
                Err(_) => failed[i] += 1,
            }
        }
    }
    windows
        .iter()
        .enumerate()
        .map(|(i, &w)| SweepSummary {
            window_length_s: w,
            cases_ok: errors[i].len(),
            cases_failed: failed[i],
            mean_abs_error: mean(&errors[i]),
        })
        .collect()
}
