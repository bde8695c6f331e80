//! Offline statistics over a ledger of pump switching-off events.
//!
//! Timestamps are stored in UTC; calendar grouping (months, days, hours) uses
//! the ledger's display offset. Sums are taken over sorted values so every
//! statistic is exactly invariant to record order.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub t_event: DateTime<Utc>,
    pub plant_id: String,
    pub mw_observed: Option<f64>,
    pub h_estimate_mw_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLedger {
    /// Display timezone used for calendar grouping.
    pub utc_offset: FixedOffset,
    pub records: Vec<LedgerRecord>,
}

impl EventLedger {
    pub fn new(utc_offset: FixedOffset, records: Vec<LedgerRecord>) -> Self {
        Self {
            utc_offset,
            records,
        }
    }

    fn for_plant<'a>(&'a self, plant_id: &'a str) -> impl Iterator<Item = &'a LedgerRecord> + 'a {
        self.records.iter().filter(move |r| r.plant_id == plant_id)
    }

    fn local(&self, t: &DateTime<Utc>) -> DateTime<FixedOffset> {
        t.with_timezone(&self.utc_offset)
    }

    fn observed_mw(&self, plant_id: &str, needed: usize) -> Result<Vec<f64>> {
        let mut mw: Vec<f64> = self.for_plant(plant_id).filter_map(|r| r.mw_observed).collect();
        if mw.len() < needed {
            return Err(Error::InsufficientRecords {
                plant_id: plant_id.to_string(),
                found: mw.len(),
                needed,
            });
        }
        mw.sort_by(f64::total_cmp);
        Ok(mw)
    }
}

/// Mean of values already sorted ascending.
fn sorted_mean(sorted: &[f64]) -> f64 {
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_mw: f64,
    /// `counts.len() + 1` edges.
    pub edges_mw: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwStepStats {
    pub plant_id: String,
    pub n_records: usize,
    pub mean_mw: f64,
    pub min_mw: f64,
    pub max_mw: f64,
    pub max_abs_deviation_ratio: f64,
    pub mean_abs_deviation_ratio: f64,
    pub histogram: Histogram,
}

pub fn mw_step_stats(ledger: &EventLedger, plant_id: &str, bin_width_mw: f64) -> Result<MwStepStats> {
    if !(bin_width_mw > 0.0) {
        return Err(Error::InvalidConfig(format!("bin width must be > 0, got {bin_width_mw}")));
    }
    let mw = ledger.observed_mw(plant_id, 2)?;
    let mean = sorted_mean(&mw);
    let mut ratios: Vec<f64> = mw.iter().map(|x| (x - mean).abs() / mean).collect();
    ratios.sort_by(f64::total_cmp);
    let (min, max) = (mw[0], mw[mw.len() - 1]);
    let lo = (min / bin_width_mw).floor() * bin_width_mw;
    let n_bins = ((max - lo) / bin_width_mw).floor() as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for x in &mw {
        let b = (((x - lo) / bin_width_mw).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(MwStepStats {
        plant_id: plant_id.to_string(),
        n_records: mw.len(),
        mean_mw: mean,
        min_mw: min,
        max_mw: max,
        max_abs_deviation_ratio: ratios[ratios.len() - 1],
        mean_abs_deviation_ratio: sorted_mean(&ratios),
        histogram: Histogram {
            bin_width_mw,
            edges_mw: (0..=n_bins).map(|i| lo + i as f64 * bin_width_mw).collect(),
            counts,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRow {
    pub year: i32,
    pub month: u32,
    pub count: usize,
    pub max_mw: f64,
    pub mean_mw: f64,
    pub min_mw: f64,
}

/// Per calendar month statistics; months without records are absent.
pub fn monthly_mw_profile(ledger: &EventLedger, plant_id: &str) -> Result<Vec<MonthRow>> {
    ledger.observed_mw(plant_id, 2)?;
    let mut groups: BTreeMap<(i32, u32), Vec<f64>> = BTreeMap::new();
    for r in ledger.for_plant(plant_id) {
        if let Some(mw) = r.mw_observed {
            let local = ledger.local(&r.t_event);
            groups.entry((local.year(), local.month())).or_default().push(mw);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((year, month), mut v)| {
            v.sort_by(f64::total_cmp);
            MonthRow {
                year,
                month,
                count: v.len(),
                max_mw: v[v.len() - 1],
                mean_mw: sorted_mean(&v),
                min_mw: v[0],
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayCount {
    pub date: NaiveDate,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyCounts {
    pub plant_id: String,
    /// Every day from the first to the last event, zero-count days included.
    pub days: Vec<DayCount>,
    pub span_days: usize,
    pub total: usize,
    pub mean_per_day: f64,
    pub max_per_day: usize,
}

pub fn daily_event_counts(ledger: &EventLedger, plant_id: &str) -> Result<DailyCounts> {
    let mut by_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for r in ledger.for_plant(plant_id) {
        *by_day.entry(ledger.local(&r.t_event).date_naive()).or_default() += 1;
    }
    let (Some(&first), Some(&last)) = (by_day.keys().next(), by_day.keys().next_back()) else {
        return Err(Error::InsufficientRecords {
            plant_id: plant_id.to_string(),
            found: 0,
            needed: 1,
        });
    };
    let days: Vec<DayCount> = first
        .iter_days()
        .take_while(|d| *d <= last)
        .map(|date| DayCount {
            date,
            count: by_day.get(&date).copied().unwrap_or(0),
        })
        .collect();
    let total: usize = days.iter().map(|d| d.count).sum();
    Ok(DailyCounts {
        plant_id: plant_id.to_string(),
        span_days: days.len(),
        total,
        mean_per_day: total as f64 / days.len() as f64,
        max_per_day: days.iter().map(|d| d.count).max().unwrap_or(0),
        days,
    })
}

/// Hours `[start_hour, end_hour)` on the local clock, wrapping past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourSpan {
    pub start_hour: u32,
    pub end_hour: u32,
}

impl HourSpan {
    pub fn new(start_hour: u32, end_hour: u32) -> Self {
        Self {
            start_hour: start_hour % 24,
            end_hour: end_hour % 24,
        }
    }

    pub fn hours(&self) -> Vec<u32> {
        let len = (self.end_hour + 24 - self.start_hour) % 24;
        let len = if len == 0 { 24 } else { len };
        (0..len).map(|i| (self.start_hour + i) % 24).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeOfDayProfile {
    pub plant_id: String,
    pub hourly_counts: [usize; 24],
    /// The 3-hour span with the most events; earliest start wins ties.
    pub modal_span: HourSpan,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_span: Option<HourSpan>,
    /// Whether the modal span shares any hour with the reference span.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<bool>,
    /// Whether the modal span lies entirely inside the reference span.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contained: Option<bool>,
}

pub fn time_of_day_profile(
    ledger: &EventLedger,
    plant_id: &str,
    reference: Option<HourSpan>,
) -> Result<TimeOfDayProfile> {
    let mut counts = [0usize; 24];
    let mut n = 0;
    for r in ledger.for_plant(plant_id) {
        counts[ledger.local(&r.t_event).hour() as usize] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientRecords {
            plant_id: plant_id.to_string(),
            found: 0,
            needed: 1,
        });
    }
    let span_total = |s: usize| (0..3).map(|i| counts[(s + i) % 24]).sum::<usize>();
    let mut best = 0usize;
    for s in 1..24 {
        if span_total(s) > span_total(best) {
            best = s;
        }
    }
    let modal = HourSpan::new(best as u32, best as u32 + 3);
    let (overlap, contained) = match reference {
        Some(refspan) => {
            let ref_hours = refspan.hours();
            let modal_hours = modal.hours();
            (
                Some(modal_hours.iter().any(|h| ref_hours.contains(h))),
                Some(modal_hours.iter().all(|h| ref_hours.contains(h))),
            )
        }
        None => (None, None),
    };
    Ok(TimeOfDayProfile {
        plant_id: plant_id.to_string(),
        hourly_counts: counts,
        modal_span: modal,
        reference_span: reference,
        overlap,
        contained,
    })
}
