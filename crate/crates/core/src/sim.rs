//! Aggregate swing-equation simulator used as ground truth.
//!
//! The system frequency deviation `df` follows
//!
//! ```text
//! 2H/f0 * d(df)/dt = P_net(t) - D * df - P_gov
//! T * d(P_gov)/dt  = R * df - P_gov          (when the governor is enabled)
//! ```
//!
//! where `P_net` is the sum of event steps (positive = load loss), a linear
//! MW ramp from `ramp_start_s`, and exponentially correlated load noise. The
//! ODE is integrated with fixed-step RK4 at `internal_rate_hz` and point
//! sampled at `sample_rate_hz`. Monitors add local artifacts on top of the
//! shared system frequency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{SensorStream, TimedSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Governor {
    Off,
    Droop {
        droop_mw_per_hz: f64,
        time_constant_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadNoise {
    pub std_mw: f64,
    pub correlation_time_s: f64,
    pub seed: u64,
}

impl Default for LoadNoise {
    fn default() -> Self {
        Self {
            std_mw: 0.0,
            correlation_time_s: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t_s: f64,
    /// Signed imbalance; positive is a load loss and raises frequency.
    pub delta_p_mw: f64,
    pub plant_id: String,
}

/// Additive oscillation whose amplitude grows linearly from zero at
/// `start_s` to `amp_hz` at `start_s + duration_s`, then stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub freq_hz: f64,
    pub amp_hz: f64,
    #[serde(default)]
    pub amp_v_pu: f64,
    pub start_s: f64,
    pub duration_s: f64,
}

impl Oscillation {
    fn envelope(&self, t: f64) -> f64 {
        if t < self.start_s || t >= self.start_s + self.duration_s {
            0.0
        } else {
            (t - self.start_s) / self.duration_s
        }
    }

    fn phase(&self, t: f64) -> f64 {
        (std::f64::consts::TAU * self.freq_hz * (t - self.start_s)).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGap {
    pub start_s: f64,
    pub length_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSpec {
    pub monitor_id: String,
    pub near_plant: Option<String>,
    pub gap: Option<DataGap>,
    pub spike_amp_hz: f64,
    pub v_step_pu: f64,
    pub v_noise_pu: f64,
    /// White measurement noise on the reported frequency.
    pub f_noise_hz: f64,
    pub has_voltage: bool,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self {
            monitor_id: String::new(),
            near_plant: None,
            gap: None,
            spike_amp_hz: 0.06,
            v_step_pu: 0.01,
            v_noise_pu: 0.0,
            f_noise_hz: 0.0,
            has_voltage: true,
        }
    }
}

impl MonitorSpec {
    pub fn near(monitor_id: &str, plant: &str) -> Self {
        Self {
            monitor_id: monitor_id.into(),
            near_plant: Some(plant.into()),
            ..Default::default()
        }
    }

    pub fn distant(monitor_id: &str) -> Self {
        Self {
            monitor_id: monitor_id.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub h_true_mw_s: f64,
    pub f0_hz: f64,
    pub damping_mw_per_hz: f64,
    pub governor: Governor,
    pub noise: LoadNoise,
    pub events: Vec<SimEvent>,
    pub pre_ramp_mw_per_s: f64,
    pub ramp_start_s: f64,
    pub oscillations: Vec<Oscillation>,
    pub monitors: Vec<MonitorSpec>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub internal_rate_hz: f64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            h_true_mw_s: 1.0e6,
            f0_hz: 60.0,
            damping_mw_per_hz: 0.0,
            governor: Governor::Off,
            noise: LoadNoise::default(),
            events: Vec::new(),
            pre_ramp_mw_per_s: 0.0,
            ramp_start_s: 0.0,
            oscillations: Vec::new(),
            monitors: vec![MonitorSpec::distant("m1")],
            duration_s: 60.0,
            sample_rate_hz: 10.0,
            internal_rate_hz: 100.0,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(self.h_true_mw_s > 0.0, format!("h_true_mw_s must be > 0, got {}", self.h_true_mw_s));
        need(self.f0_hz > 0.0, format!("f0_hz must be > 0, got {}", self.f0_hz));
        need(self.damping_mw_per_hz >= 0.0, "damping_mw_per_hz must be >= 0".into());
        need(self.duration_s > 0.0, format!("duration_s must be > 0, got {}", self.duration_s));
        need(self.sample_rate_hz > 0.0, format!("sample_rate_hz must be > 0, got {}", self.sample_rate_hz));
        let ratio = self.internal_rate_hz / self.sample_rate_hz;
        need(
            ratio >= 10.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9,
            format!(
                "internal_rate_hz ({}) must be an integer multiple >= 10 of sample_rate_hz ({})",
                self.internal_rate_hz, self.sample_rate_hz
            ),
        );
        if let Governor::Droop {
            droop_mw_per_hz,
            time_constant_s,
        } = self.governor
        {
            need(droop_mw_per_hz >= 0.0, "governor.droop_mw_per_hz must be >= 0".into());
            need(time_constant_s > 0.0, "governor.time_constant_s must be > 0".into());
        }
        need(self.noise.std_mw >= 0.0, "noise.std_mw must be >= 0".into());
        need(
            self.noise.std_mw == 0.0 || self.noise.correlation_time_s > 0.0,
            "noise.correlation_time_s must be > 0".into(),
        );
        for (i, e) in self.events.iter().enumerate() {
            need(
                (0.0..self.duration_s).contains(&e.t_s),
                format!("events[{i}].t_s = {} outside [0, duration_s)", e.t_s),
            );
            need(e.delta_p_mw.is_finite(), format!("events[{i}].delta_p_mw is not finite"));
        }
        for (i, o) in self.oscillations.iter().enumerate() {
            need(o.freq_hz > 0.0, format!("oscillations[{i}].freq_hz must be > 0"));
            need(o.duration_s > 0.0, format!("oscillations[{i}].duration_s must be > 0"));
        }
        for m in &self.monitors {
            need(
                m.v_noise_pu >= 0.0 && m.f_noise_hz >= 0.0,
                format!("monitor {}: noise levels must be >= 0", m.monitor_id),
            );
        }
        need(!self.monitors.is_empty(), "at least one monitor is required".into());
        let mut ids: Vec<&str> = self.monitors.iter().map(|m| m.monitor_id.as_str()).collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        need(ids.len() == before, "monitor ids must be unique".into());
        need(ids.iter().all(|id| !id.is_empty()), "monitor ids must be non-empty".into());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(problems))
        }
    }

    fn ramp_mw(&self, t: f64) -> f64 {
        self.pre_ramp_mw_per_s * (t - self.ramp_start_s).max(0.0)
    }

}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub t_s: f64,
    pub delta_p_mw: f64,
    pub plant_id: String,
    /// System RoCoF just before the event.
    pub pre_event_rocof_hz_per_s: f64,
    /// RoCoF contributed by the event step alone, `f0 * dP / (2H)`.
    pub event_rocof_hz_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub h_true_mw_s: f64,
    pub f0_hz: f64,
    pub events: Vec<EventTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub streams: Vec<SensorStream>,
    /// System frequency at every output sample, before monitor artifacts.
    pub system_f: Vec<TimedSample>,
    pub truth: SimTruth,
}

impl SimTrace {
    pub fn stream(&self, monitor_id: &str) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.monitor_id() == monitor_id)
    }
}

/// Derive an independent RNG seed; SplitMix64 finaliser.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVENT_EPS: f64 = 1e-9;

struct Dynamics<'a> {
    sc: &'a SimScenario,
    k: f64,
}

impl Dynamics<'_> {
    /// Derivatives of (df, p_gov) given the exogenous imbalance.
    fn deriv(&self, df: f64, p_gov: f64, p_ext: f64) -> (f64, f64) {
        let d_df = self.k * (p_ext - self.sc.damping_mw_per_hz * df - p_gov);
        let d_gov = match self.sc.governor {
            Governor::Off => 0.0,
            Governor::Droop {
                droop_mw_per_hz,
                time_constant_s,
            } => (droop_mw_per_hz * df - p_gov) / time_constant_s,
        };
        (d_df, d_gov)
    }

    fn p_ext(&self, t: f64, steps_mw: f64, noise: f64) -> f64 {
        steps_mw + self.sc.ramp_mw(t) + noise
    }

    fn rk4(&self, a: f64, b: f64, df: f64, p_gov: f64, steps: f64, noise: f64) -> (f64, f64) {
        let h = b - a;
        let (k1f, k1g) = self.deriv(df, p_gov, self.p_ext(a, steps, noise));
        let pm = self.p_ext(a + 0.5 * h, steps, noise);
        let (k2f, k2g) = self.deriv(df + 0.5 * h * k1f, p_gov + 0.5 * h * k1g, pm);
        let (k3f, k3g) = self.deriv(df + 0.5 * h * k2f, p_gov + 0.5 * h * k2g, pm);
        let (k4f, k4g) = self.deriv(df + h * k3f, p_gov + h * k3g, self.p_ext(b, steps, noise));
        (
            df + h / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f),
            p_gov + h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g),
        )
    }
}

/// Integrate the scenario and assemble per-monitor traces.
pub fn simulate(scenario: &SimScenario) -> Result<SimTrace> {
    scenario.validate()?;
    let sc = scenario;
    let dyn_ = Dynamics {
        sc,
        k: sc.f0_hz / (2.0 * sc.h_true_mw_s),
    };
    let per_sample = (sc.internal_rate_hz / sc.sample_rate_hz).round() as usize;
    let h = 1.0 / sc.internal_rate_hz;
    let n_out = (sc.duration_s * sc.sample_rate_hz).ceil() as usize;
    let n_steps = n_out * per_sample;

    let mut rng = ChaCha8Rng::seed_from_u64(sc.noise.seed);
    let decay = if sc.noise.std_mw > 0.0 {
        (-h / sc.noise.correlation_time_s).exp()
    } else {
        0.0
    };
    let innovation = sc.noise.std_mw * (1.0 - decay * decay).sqrt();
    let mut noise = if sc.noise.std_mw > 0.0 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sc.noise.std_mw * z
    } else {
        0.0
    };

    let mut df = 0.0f64;
    let mut p_gov = 0.0f64;
    let mut system = Vec::with_capacity(n_out);
    let mut pre_rocof = vec![0.0; sc.events.len()];
    let t_of = |step: usize| step as f64 * h;
    let mut order: Vec<usize> = (0..sc.events.len()).collect();
    order.sort_by(|&x, &y| sc.events[x].t_s.total_cmp(&sc.events[y].t_s));
    let mut next_event = 0;
    let mut active_mw = 0.0;

    for step in 0..=n_steps {
        let t = t_of(step);
        if step % per_sample == 0 && step / per_sample < n_out {
            system.push(TimedSample::new(
                (step / per_sample) as f64 / sc.sample_rate_hz,
                sc.f0_hz + df,
                None,
            ));
        }
        if step == n_steps {
            break;
        }
        // Split the step at any event inside it so each RK4 segment sees a
        // constant set of active steps.
        let t_next = t_of(step + 1);
        let mut a = t;
        loop {
            while let Some(&i) = order.get(next_event) {
                let e = &sc.events[i];
                if e.t_s > a + EVENT_EPS {
                    break;
                }
                pre_rocof[i] = dyn_.deriv(df, p_gov, dyn_.p_ext(a, active_mw, noise)).0;
                active_mw += e.delta_p_mw;
                next_event += 1;
            }
            let b = match order.get(next_event) {
                Some(&i) if sc.events[i].t_s < t_next - EVENT_EPS => sc.events[i].t_s,
                _ => t_next,
            };
            (df, p_gov) = dyn_.rk4(a, b, df, p_gov, active_mw, noise);
            if b == t_next {
                break;
            }
            a = b;
        }
        // Noise is held over each internal step (zero-order hold).
        if sc.noise.std_mw > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            noise = decay * noise + innovation * z;
        }
    }

    let truth = SimTruth {
        h_true_mw_s: sc.h_true_mw_s,
        f0_hz: sc.f0_hz,
        events: sc
            .events
            .iter()
            .zip(&pre_rocof)
            .map(|(e, &pre)| EventTruth {
                t_s: e.t_s,
                delta_p_mw: e.delta_p_mw,
                plant_id: e.plant_id.clone(),
                pre_event_rocof_hz_per_s: pre,
                event_rocof_hz_per_s: dyn_.k * e.delta_p_mw,
            })
            .collect(),
    };

    let streams = sc
        .monitors
        .iter()
        .enumerate()
        .map(|(i, m)| monitor_stream(sc, m, i as u64, &system))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTrace {
        streams,
        system_f: system,
        truth,
    })
}

fn monitor_stream(
    sc: &SimScenario,
    spec: &MonitorSpec,
    index: u64,
    system: &[TimedSample],
) -> Result<SensorStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sc.noise.seed, index + 1));
    let local: Vec<&SimEvent> = sc
        .events
        .iter()
        .filter(|e| spec.near_plant.as_deref() == Some(e.plant_id.as_str()))
        .collect();
    let mut samples = Vec::with_capacity(system.len());
    let mut spiked = vec![false; local.len()];
    for s in system {
        let t = s.t;
        let mut f = s.f;
        let mut v = 1.0;
        for o in &sc.oscillations {
            let env = o.envelope(t);
            if env > 0.0 {
                let wave = o.phase(t);
                f += o.amp_hz * env * wave;
                v += o.amp_v_pu * env * wave;
            }
        }
        for (j, e) in local.iter().enumerate() {
            if t >= e.t_s {
                let sign = e.delta_p_mw.signum();
                v += sign * spec.v_step_pu;
                if !spiked[j] {
                    f += sign * spec.spike_amp_hz;
                    spiked[j] = true;
                }
            }
        }
        if spec.v_noise_pu > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            v += spec.v_noise_pu * z;
        }
        if spec.f_noise_hz > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            f += spec.f_noise_hz * z;
        }
        let in_gap = spec
            .gap
            .as_ref()
            .is_some_and(|g| t >= g.start_s && t < g.start_s + g.length_s);
        if !in_gap {
            samples.push(TimedSample::new(t, f, spec.has_voltage.then_some(v)));
        }
    }
    SensorStream::new(spec.monitor_id.clone(), samples)
}

/// Initial event RoCoF for a restricted scenario (no damping, no governor, no
/// noise, no oscillation, exactly one event): `f0 * (dP + ramp MW at the
/// event) / (2H)`.
pub fn analytic_rocof(scenario: &SimScenario) -> Result<f64> {
    let sc = scenario;
    if sc.damping_mw_per_hz != 0.0 {
        return Err(Error::RestrictionViolated("damping must be zero".into()));
    }
    if sc.governor != Governor::Off {
        return Err(Error::RestrictionViolated("governor must be off".into()));
    }
    if sc.noise.std_mw != 0.0 {
        return Err(Error::RestrictionViolated("load noise must be zero".into()));
    }
    if !sc.oscillations.is_empty() {
        return Err(Error::RestrictionViolated("no oscillations allowed".into()));
    }
    let [event] = sc.events.as_slice() else {
        return Err(Error::RestrictionViolated(format!(
            "exactly one event required, found {}",
            sc.events.len()
        )));
    };
    if !(sc.h_true_mw_s > 0.0) {
        return Err(Error::RestrictionViolated("h_true_mw_s must be > 0".into()));
    }
    Ok(sc.f0_hz * (event.delta_p_mw + sc.ramp_mw(event.t_s)) / (2.0 * sc.h_true_mw_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampDirection {
    /// Keep the base scenario's ramp.
    Unchanged,
    Up,
    Down,
}

impl RampDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            RampDirection::Unchanged => "unchanged",
            RampDirection::Up => "up",
            RampDirection::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variations {
    pub directions: Vec<RampDirection>,
    pub count: usize,
    /// Defaults to the base scenario's noise seed.
    pub master_seed: Option<u64>,
    /// Range of pre-event RoCoF magnitudes drawn for Up/Down cases.
    pub pre_rocof_range_hz_per_s: (f64, f64),
    /// The ramp starts this long before the first event.
    pub ramp_lead_s: f64,
    /// Uniform jitter applied to every event time, in seconds.
    pub event_jitter_s: f64,
}

impl Default for Variations {
    fn default() -> Self {
        Self {
            directions: vec![RampDirection::Up, RampDirection::Down],
            count: 66,
            master_seed: None,
            pre_rocof_range_hz_per_s: (0.002, 0.008),
            ramp_lead_s: 30.0,
            event_jitter_s: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignCase {
    pub index: usize,
    pub direction: RampDirection,
    pub scenario: SimScenario,
    pub trace: SimTrace,
}

/// Expand `base` into `count` seeded cases per ramp direction.
///
/// Case `k` uses noise seed `master + k`; its ramp magnitude and event jitter
/// come from an RNG keyed on `(master, k)`, so the Up and Down sets are paired.
/// Cases are simulated in parallel and returned in a fixed order.
pub fn run_campaign(base: &SimScenario, variations: &Variations) -> Result<Vec<CampaignCase>> {
    base.validate()?;
    if variations.count == 0 {
        return Err(Error::InvalidScenario(vec!["campaign count must be >= 1".into()]));
    }
    let master = variations.master_seed.unwrap_or(base.noise.seed);
    let mut specs = Vec::new();
    for &direction in &variations.directions {
        for k in 0..variations.count {
            specs.push((direction, k, expand_case(base, variations, master, direction, k)));
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = specs.len().div_ceil(workers).max(1);
    let traces: Vec<Result<SimTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|(_, _, sc)| simulate(sc)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("campaign worker panicked"))
            .collect()
    });
    specs
        .into_iter()
        .zip(traces)
        .enumerate()
        .map(|(index, ((direction, _, scenario), trace))| {
            Ok(CampaignCase {
                index,
                direction,
                scenario,
                trace: trace?,
            })
        })
        .collect()
}

fn expand_case(
    base: &SimScenario,
    v: &Variations,
    master: u64,
    direction: RampDirection,
    k: usize,
) -> SimScenario {
    let mut sc = base.clone();
    sc.noise.seed = master.wrapping_add(k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, k as u64));
    let (lo, hi) = v.pre_rocof_range_hz_per_s;
    let magnitude = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let jitter = if v.event_jitter_s > 0.0 {
        rng.random_range(0.0..v.event_jitter_s)
    } else {
        0.0
    };
    for e in &mut sc.events {
        e.t_s += jitter;
    }
    if direction != RampDirection::Unchanged {
        let t_first = sc.events.iter().map(|e| e.t_s).fold(f64::INFINITY, f64::min);
        let t_first = if t_first.is_finite() { t_first } else { sc.duration_s * 0.5 };
        let lead = v.ramp_lead_s.min(t_first).max(1e-3);
        sc.ramp_start_s = t_first - lead;
        // Imbalance reaching `magnitude` worth of RoCoF at the first event.
        let mw = magnitude * 2.0 * sc.h_true_mw_s / sc.f0_hz;
        let sign = if direction == RampDirection::Up { 1.0 } else { -1.0 };
        sc.pre_ramp_mw_per_s = sign * mw / lead;
    }
    sc
}
