//! Swing-equation inertia estimation from a confirmed pump switching-off event.
//!
//! A pump switching-off is a load loss of a near-constant MW size, so the
//! post-event frequency rises. The estimator fits least-squares slopes in one
//! window before and one after the event (each separated from the event by a
//! guard gap), subtracts the background slope, and evaluates
//! `H = f0 * dP / (2 * |RoCoF|)` in MW·s.

use serde::{Deserialize, Serialize};

use crate::detector::ConfirmedEvent;
use crate::error::{Error, Result};
use crate::signal::{rocof, true_event_rocof, RocofValue};
use crate::stream::{SensorStream, Window};

/// Window lengths used for the RoCoF window-size sweep, in seconds.
pub const DEFAULT_SWEEP_WINDOWS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 1.0, 2.0, 3.0, 4.0];

/// A pumped-storage plant's historical pump switching-off MW step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSignature {
    pub plant_id: String,
    pub region: String,
    pub unit_capacity_mw: f64,
    pub mw_step_mean_mw: f64,
    /// Fractional spread of observed steps around the mean, e.g. 0.07.
    pub mw_step_tolerance: f64,
}

impl PlantSignature {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("plant {}: {m}", self.plant_id)));
        if !(self.mw_step_mean_mw > 0.0) {
            return fail(format!("mw_step_mean_mw must be > 0, got {}", self.mw_step_mean_mw));
        }
        if !(0.0..1.0).contains(&self.mw_step_tolerance) {
            return fail(format!(
                "mw_step_tolerance must be in [0, 1), got {}",
                self.mw_step_tolerance
            ));
        }
        if self.mw_step_mean_mw > self.unit_capacity_mw {
            return fail(format!(
                "mw_step_mean_mw {} exceeds unit_capacity_mw {}",
                self.mw_step_mean_mw, self.unit_capacity_mw
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub window_length_s: f64,
    /// Gap between the event instant and each fit window.
    pub guard_s: f64,
    /// Nominal frequency.
    pub f0_hz: f64,
    pub min_abs_true_rocof_hz_per_s: f64,
    /// Optional MVA base for a normalised per-unit inertia constant.
    pub mva_base: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window_length_s: 0.3,
            guard_s: 0.1,
            f0_hz: 60.0,
            min_abs_true_rocof_hz_per_s: 0.001,
            mva_base: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.window_length_s > 0.0) {
            return bad("estimator.window_length_s must be > 0");
        }
        if !(self.guard_s >= 0.0) {
            return bad("estimator.guard_s must be >= 0");
        }
        if !(self.f0_hz > 0.0) {
            return bad("estimator.f0_hz must be > 0");
        }
        if !(self.min_abs_true_rocof_hz_per_s > 0.0) {
            return bad("estimator.min_abs_true_rocof_hz_per_s must be > 0");
        }
        if matches!(self.mva_base, Some(b) if !(b > 0.0)) {
            return bad("estimator.mva_base must be > 0 when set");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Post-event RoCoF minus pre-event RoCoF.
    Improved,
    /// Post-event RoCoF only.
    Traditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub pre_r_squared: f64,
    pub post_r_squared: f64,
    pub pre_n_samples: usize,
    pub post_n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaEstimate {
    pub t_event_s: f64,
    pub plant_id: String,
    pub monitor_id: String,
    pub method: Method,
    pub delta_p_mw: f64,
    pub pre_rocof_hz_per_s: f64,
    pub post_rocof_hz_per_s: f64,
    /// The RoCoF fed to the swing equation (equals the post-event RoCoF for
    /// [`Method::Traditional`]).
    pub true_rocof_hz_per_s: f64,
    pub window_length_s: f64,
    pub h_mw_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_pu_s: Option<f64>,
    pub f0_hz: f64,
    pub quality: FitQuality,
}

/// `H = f0 * delta_p / (2 * |rocof|)`.
pub fn swing_inertia(f0_hz: f64, delta_p_mw: f64, rocof_hz_per_s: f64) -> f64 {
    f0_hz * delta_p_mw / (2.0 * rocof_hz_per_s.abs())
}

/// The pre- and post-event fit windows for an event at `t_event`.
pub fn fit_windows(t_event: f64, guard: f64, length: f64) -> (Window, Window) {
    (
        Window::new(t_event - guard - length, length),
        Window::right_closed(t_event + guard, length),
    )
}

fn fit(stream: &SensorStream, window: &Window, label: &str) -> Result<RocofValue> {
    rocof(stream, window).map_err(|e| match e {
        Error::WindowTooSparse { .. } | Error::NonFinite { .. } => Error::InsufficientData(format!(
            "{label}-event window on {}: {e}",
            stream.monitor_id()
        )),
        other => other,
    })
}

fn check_coverage(stream: &SensorStream, pre: &Window, post: &Window) -> Result<()> {
    let (Some(first), Some(last)) = (stream.first_t(), stream.last_t()) else {
        return Err(Error::InsufficientData(format!("{} is empty", stream.monitor_id())));
    };
    let spacing = if stream.len() > 1 {
        (last - first) / (stream.len() - 1) as f64
    } else {
        0.0
    };
    if first > pre.start + spacing || last < post.end() - spacing {
        return Err(Error::InsufficientData(format!(
            "{} covers [{first}, {last}] but the fit needs [{}, {}]",
            stream.monitor_id(),
            pre.start,
            post.end()
        )));
    }
    Ok(())
}

fn estimate_with(
    method: Method,
    event: &ConfirmedEvent,
    stream: &SensorStream,
    sig: &PlantSignature,
    cfg: &EstimatorConfig,
) -> Result<InertiaEstimate> {
    cfg.validate()?;
    if let Some(plant) = &event.plant_id {
        if plant != &sig.plant_id {
            return Err(Error::InvalidConfig(format!(
                "event attributed to plant {plant}, signature is for {}",
                sig.plant_id
            )));
        }
    }
    let t_event = event.t_event_s;
    let (pre_w, post_w) = fit_windows(t_event, cfg.guard_s, cfg.window_length_s);
    check_coverage(stream, &pre_w, &post_w)?;
    let pre = fit(stream, &pre_w, "pre")?;
    let post = fit(stream, &post_w, "post")?;
    let used = match method {
        Method::Improved => true_event_rocof(&pre, &post),
        Method::Traditional => post.slope,
    };
    if !(used.abs() >= cfg.min_abs_true_rocof_hz_per_s) {
        return Err(Error::RocofBelowFloor {
            true_rocof: used,
            floor: cfg.min_abs_true_rocof_hz_per_s,
        });
    }
    let delta_p = sig.mw_step_mean_mw;
    let h_mw_s = swing_inertia(cfg.f0_hz, delta_p, used);
    Ok(InertiaEstimate {
        t_event_s: t_event,
        plant_id: sig.plant_id.clone(),
        monitor_id: stream.monitor_id().to_string(),
        method,
        delta_p_mw: delta_p,
        pre_rocof_hz_per_s: pre.slope,
        post_rocof_hz_per_s: post.slope,
        true_rocof_hz_per_s: used,
        window_length_s: cfg.window_length_s,
        h_mw_s,
        h_pu_s: cfg.mva_base.map(|b| h_mw_s / b),
        f0_hz: cfg.f0_hz,
        quality: FitQuality {
            pre_r_squared: pre.r_squared,
            post_r_squared: post.r_squared,
            pre_n_samples: pre.n_samples,
            post_n_samples: post.n_samples,
        },
    })
}

/// Inertia estimate from the pre-event corrected RoCoF.
pub fn estimate(
    event: &ConfirmedEvent,
    stream: &SensorStream,
    sig: &PlantSignature,
    cfg: &EstimatorConfig,
) -> Result<InertiaEstimate> {
    estimate_with(Method::Improved, event, stream, sig, cfg)
}

/// Inertia estimate from the post-event RoCoF alone. The pre-event slope is
/// still fitted and recorded.
pub fn traditional_estimate(
    event: &ConfirmedEvent,
    stream: &SensorStream,
    sig: &PlantSignature,
    cfg: &EstimatorConfig,
) -> Result<InertiaEstimate> {
    estimate_with(Method::Traditional, event, stream, sig, cfg)
}

/// `|h_est - h_true| / h_true`.
pub fn error_rate(h_est: f64, h_true: f64) -> Result<f64> {
    if !(h_true > 0.0) {
        return Err(Error::NonPositiveTruth(h_true));
    }
    Ok((h_est - h_true).abs() / h_true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub window_length_s: f64,
    pub outcome: Result<InertiaEstimate>,
}

/// One improved estimate per window length. Failures are recorded per row and
/// the sweep continues.
pub fn window_sweep(
    event: &ConfirmedEvent,
    stream: &SensorStream,
    sig: &PlantSignature,
    cfg: &EstimatorConfig,
    windows: &[f64],
) -> Vec<SweepRow> {
    windows
        .iter()
        .map(|&w| {
            let cfg = EstimatorConfig {
                window_length_s: w,
                ..cfg.clone()
            };
            SweepRow {
                window_length_s: w,
                outcome: estimate(event, stream, sig, &cfg),
            }
        })
        .collect()
}
