//! Pure numeric kernels over [`SensorStream`] windows.
//!
//! Every kernel works on timestamps rather than sample indices, so any sample
//! rate is accepted. All functions are deterministic and free of shared state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{SensorStream, TimedSample, Window};

/// Least-squares frequency slope over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocofValue {
    /// Hz per second.
    pub slope: f64,
    pub n_samples: usize,
    /// Coefficient of determination; 1 for an exactly constant window.
    pub r_squared: f64,
}

fn too_sparse(window: &Window, found: usize, needed: usize) -> Error {
    Error::WindowTooSparse {
        start: window.start,
        end: window.end(),
        found,
        needed,
    }
}

fn check_finite(samples: &[TimedSample]) -> Result<()> {
    match samples.iter().find(|s| !s.f.is_finite()) {
        Some(s) => Err(Error::NonFinite { t: s.t }),
        None => Ok(()),
    }
}

struct LineFit {
    slope: f64,
    intercept_at_mean: f64,
    t_mean: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

// Centred sums keep the fit well conditioned for large epoch offsets.
fn fit_line(samples: &[TimedSample]) -> LineFit {
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.t).sum::<f64>() / n;
    let f_mean = samples.iter().map(|s| s.f).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dt = s.t - t_mean;
        let df = s.f - f_mean;
        sxx += dt * dt;
        syy += df * df;
        sxy += dt * df;
    }
    LineFit {
        slope: sxy / sxx,
        intercept_at_mean: f_mean,
        t_mean,
        sxx,
        syy,
        sxy,
    }
}

/// Ordinary least-squares slope of `f` against `t` over `window`.
pub fn rocof(stream: &SensorStream, window: &Window) -> Result<RocofValue> {
    rocof_samples(stream.select(window), window)
}

pub(crate) fn rocof_samples(samples: &[TimedSample], window: &Window) -> Result<RocofValue> {
    if samples.len() < 2 {
        return Err(too_sparse(window, samples.len(), 2));
    }
    check_finite(samples)?;
    let fit = fit_line(samples);
    let r_squared = if fit.syy == 0.0 {
        1.0
    } else {
        (fit.sxy * fit.sxy / (fit.sxx * fit.syy)).clamp(0.0, 1.0)
    };
    Ok(RocofValue {
        slope: fit.slope,
        n_samples: samples.len(),
        r_squared,
    })
}

/// Event RoCoF with the background (pre-event) slope removed.
pub fn true_event_rocof(pre: &RocofValue, post: &RocofValue) -> f64 {
    post.slope - pre.slope
}

/// Median of a non-empty slice. Even lengths average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (left, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if values.len() % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Signed voltage step around `t_event`: median of `v` over
/// `[t_event + settle, t_event + settle + span]` minus the median over
/// `[t_event - settle - span, t_event - settle]`.
pub fn voltage_step(stream: &SensorStream, t_event: f64, settle: f64, span: f64) -> Result<f64> {
    if !stream.has_voltage() {
        return Err(Error::MissingVoltage {
            monitor_id: stream.monitor_id().to_string(),
        });
    }
    let pre_from = t_event - settle - span;
    let post_from = t_event + settle;
    let volts = |from: f64| -> Result<Vec<f64>> {
        let v: Vec<f64> = stream
            .select_closed(from, from + span)
            .iter()
            .filter_map(|s| s.v)
            .collect();
        if v.len() < 3 {
            return Err(too_sparse(&Window::new(from, span), v.len(), 3));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { t: from });
        }
        Ok(v)
    };
    let pre = volts(pre_from)?;
    let post = volts(post_from)?;
    Ok(median(&post) - median(&pre))
}

/// Largest `|f - f_ref|` over the window, where `f_ref` is the median
/// frequency over the leading 20% of the window.
pub fn max_frequency_deviation(stream: &SensorStream, window: &Window) -> Result<f64> {
    let samples = stream.select(window);
    if samples.len() < 2 {
        return Err(too_sparse(window, samples.len(), 2));
    }
    check_finite(samples)?;
    let lead_end = window.start + 0.2 * window.length;
    let lead: Vec<f64> = samples
        .iter()
        .take_while(|s| s.t < lead_end)
        .map(|s| s.f)
        .collect();
    let f_ref = if lead.is_empty() {
        samples[0].f
    } else {
        median(&lead)
    };
    Ok(samples
        .iter()
        .map(|s| (s.f - f_ref).abs())
        .fold(0.0, f64::max))
}

/// Frequency residuals after removing the least-squares line over the window.
/// Returned as `(t, residual)` pairs.
pub fn detrend(stream: &SensorStream, window: &Window) -> Result<Vec<(f64, f64)>> {
    let samples = stream.select(window);
    if samples.len() < 3 {
        return Err(too_sparse(window, samples.len(), 3));
    }
    check_finite(samples)?;
    let fit = fit_line(samples);
    Ok(samples
        .iter()
        .map(|s| {
            let line = fit.intercept_at_mean + fit.slope * (s.t - fit.t_mean);
            (s.t, s.f - line)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream_from(f: impl Fn(f64) -> f64, n: usize, rate: f64) -> SensorStream {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                TimedSample::new(t, f(t), Some(1.0))
            })
            .collect();
        SensorStream::new("m", samples).unwrap()
    }

    // Textbook normal-equation slope, uncentred: (nΣtf − ΣtΣf) / (nΣt² − (Σt)²).
    fn oracle_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let st: f64 = points.iter().map(|p| p.0).sum();
        let sf: f64 = points.iter().map(|p| p.1).sum();
        let stt: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let stf: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * stf - st * sf) / (n * stt - st * st)
    }

    fn oracle_median(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }

    #[test]
    fn rocof_constant_is_zero() {
        let s = stream_from(|_| 60.0, 30, 10.0);
        let r = rocof(&s, &Window::new(0.5, 1.0)).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.r_squared, 1.0);
        assert_eq!(r.n_samples, 10);
    }

    #[test]
    fn rocof_exact_ramp() {
        let s = stream_from(|t| 60.0 + 0.01 * t, 30, 10.0);
        let r = rocof(&s, &Window::new(0.0, 1.0)).unwrap();
        assert!((r.slope - 0.01).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rocof_matches_normal_equation_oracle_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<(f64, f64)> = (0..30)
            .map(|k| {
                let t = k as f64 * 0.1;
                (t, 60.0 + 0.004 * t + rng.random_range(-0.002..0.002))
            })
            .collect();
        let s = SensorStream::new(
            "m",
            points.iter().map(|&(t, f)| TimedSample::new(t, f, None)).collect(),
        )
        .unwrap();
        let got = rocof(&s, &Window::new(0.0, 3.0)).unwrap();
        // The uncentred oracle loses digits to the 60 Hz offset; recentre f first.
        let shifted: Vec<(f64, f64)> = points.iter().map(|&(t, f)| (t, f - 60.0)).collect();
        let want = oracle_slope(&shifted);
        assert_eq!(got.n_samples, 30);
        assert!(
            ((got.slope - want) / want).abs() < 1e-12,
            "{} vs {}",
            got.slope,
            want
        );
    }

    #[test]
    fn rocof_sparse_and_non_finite() {
        let s = stream_from(|_| 60.0, 10, 10.0);
        assert!(matches!(
            rocof(&s, &Window::new(0.0, 0.1)),
            Err(Error::WindowTooSparse { found: 1, .. })
        ));
        let bad = SensorStream::new(
            "m",
            vec![
                TimedSample::new(0.0, 60.0, None),
                TimedSample::new(0.1, f64::NAN, None),
            ],
        )
        .unwrap();
        assert!(matches!(
            rocof(&bad, &Window::new(0.0, 1.0)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn true_rocof_examples() {
        let r = |slope| RocofValue {
            slope,
            n_samples: 3,
            r_squared: 1.0,
        };
        assert!((true_event_rocof(&r(0.0054), &r(0.0138)) - 0.0084).abs() < 1e-15);
        assert_eq!(true_event_rocof(&r(0.0), &r(0.0138)), 0.0138);
        assert_eq!(true_event_rocof(&r(0.0138), &r(0.0138)), 0.0);
    }

    #[test]
    fn voltage_step_flat_and_clean() {
        let flat = stream_from(|_| 60.0, 100, 10.0);
        assert_eq!(voltage_step(&flat, 5.0, 0.2, 0.5).unwrap(), 0.0);

        let samples = (0..100)
            .map(|k| {
                let t = k as f64 / 10.0;
                TimedSample::new(t, 60.0, Some(if t >= 5.0 { 1.010 } else { 1.000 }))
            })
            .collect();
        let s = SensorStream::new("m", samples).unwrap();
        let step = voltage_step(&s, 5.0, 0.2, 0.5).unwrap();
        assert!((step - 0.010).abs() < 1e-12);
    }

    #[test]
    fn voltage_step_matches_sorting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<TimedSample> = (0..200)
            .map(|k| {
                let t = k as f64 / 10.0;
                let base = if t >= 10.0 { 1.01 } else { 1.0 };
                TimedSample::new(t, 60.0, Some(base + rng.random_range(-0.003..0.003)))
            })
            .collect();
        let s = SensorStream::new("m", samples.clone()).unwrap();
        let got = voltage_step(&s, 10.0, 0.2, 0.5).unwrap();
        let pick = |lo: f64, hi: f64| -> Vec<f64> {
            samples
                .iter()
                .filter(|x| x.t >= lo - 1e-9 && x.t <= hi + 1e-9)
                .map(|x| x.v.unwrap())
                .collect()
        };
        let want = oracle_median(&pick(10.2, 10.7)) - oracle_median(&pick(9.3, 9.8));
        assert_eq!(got, want);
    }

    #[test]
    fn voltage_step_missing_channel() {
        let s = SensorStream::new(
            "nv",
            (0..50)
                .map(|k| TimedSample::new(k as f64 / 10.0, 60.0, None))
                .collect(),
        )
        .unwrap();
        assert_eq!(
            voltage_step(&s, 2.0, 0.2, 0.5).unwrap_err(),
            Error::MissingVoltage {
                monitor_id: "nv".into()
            }
        );
    }

    #[test]
    fn deviation_examples() {
        let flat = stream_from(|_| 60.0, 100, 10.0);
        assert_eq!(
            max_frequency_deviation(&flat, &Window::new(0.0, 10.0)).unwrap(),
            0.0
        );
        let dip = stream_from(|t| if t >= 5.0 { 59.980 } else { 60.000 }, 100, 10.0);
        let d = max_frequency_deviation(&dip, &Window::new(0.0, 10.0)).unwrap();
        assert!((d - 0.020).abs() < 1e-12);
    }

    #[test]
    fn deviation_matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<TimedSample> = (0..120)
            .map(|k| TimedSample::new(k as f64 / 10.0, 60.0 + rng.random_range(-0.02..0.02), None))
            .collect();
        let s = SensorStream::new("m", samples.clone()).unwrap();
        let w = Window::new(1.0, 10.0);
        let inside: Vec<&TimedSample> = samples
            .iter()
            .filter(|x| x.t >= 1.0 - 1e-9 && x.t < 11.0 - 1e-9)
            .collect();
        let lead: Vec<f64> = inside.iter().filter(|x| x.t < 3.0).map(|x| x.f).collect();
        let f_ref = oracle_median(&lead);
        let mut want = 0.0f64;
        for x in &inside {
            let d = (x.f - f_ref).abs();
            if d > want {
                want = d;
            }
        }
        assert_eq!(max_frequency_deviation(&s, &w).unwrap(), want);
    }

    #[test]
    fn detrend_line_and_spike() {
        let line = stream_from(|t| 60.0 + 0.02 * t, 50, 10.0);
        for (_, r) in detrend(&line, &Window::new(0.0, 5.0)).unwrap() {
            assert!(r.abs() < 1e-10);
        }
        let spiky = stream_from(
            |t| 60.0 + 0.02 * t + if (t - 2.5).abs() < 1e-9 { 0.06 } else { 0.0 },
            50,
            10.0,
        );
        let res = detrend(&spiky, &Window::new(0.0, 5.0)).unwrap();
        let (_, peak) = res
            .iter()
            .copied()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        assert!(peak > 0.05);
        let others = res.iter().filter(|(t, _)| (t - 2.5).abs() > 1e-6);
        for (_, r) in others {
            assert!(r.abs() < 0.003);
        }
    }

    #[test]
    fn detrend_residual_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<TimedSample> = (0..80)
            .map(|k| TimedSample::new(k as f64 / 10.0, 60.0 + rng.random_range(-0.01..0.01), None))
            .collect();
        let s = SensorStream::new("m", samples).unwrap();
        let res = detrend(&s, &Window::new(0.0, 8.0)).unwrap();
        let mean = res.iter().map(|r| r.1).sum::<f64>() / res.len() as f64;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }

    proptest! {
        #[test]
        fn median_agrees_with_sorting(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            prop_assert_eq!(median(&v), oracle_median(&v));
        }

        #[test]
        fn true_rocof_antisymmetric(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let r = |slope| RocofValue { slope, n_samples: 2, r_squared: 1.0 };
            prop_assert_eq!(true_event_rocof(&r(a), &r(b)), -true_event_rocof(&r(b), &r(a)));
        }
    }
}
