//! Run configuration (TOML) and simulator/campaign scenario files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inertia_core::analytics::HourSpan;
use inertia_core::detector::DetectorConfig;
use inertia_core::estimator::{EstimatorConfig, DEFAULT_SWEEP_WINDOWS};
use inertia_core::sim::{SimScenario, Variations};
use serde::{Deserialize, Serialize};

use crate::formats::monitor_id_from_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Read complete files once.
    #[default]
    Replay,
    /// Tail files as they grow.
    Follow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamInput {
    pub path: PathBuf,
    /// Defaults to the file stem.
    #[serde(default)]
    pub monitor_id: Option<String>,
}

impl StreamInput {
    pub fn monitor_id(&self) -> String {
        self.monitor_id
            .clone()
            .unwrap_or_else(|| monitor_id_from_path(&self.path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub mode: InputMode,
    pub streams: Vec<StreamInput>,
    /// Follow mode: how often files are polled for new data.
    pub poll_interval_ms: u64,
    /// Follow mode: stop after no file has grown for this long. Unset means
    /// run until interrupted.
    pub idle_exit_s: Option<f64>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            mode: InputMode::Replay,
            streams: Vec::new(),
            poll_interval_ms: 200,
            idle_exit_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub events: PathBuf,
    pub estimates: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            events: "out/events.jsonl".into(),
            estimates: "out/estimates.jsonl".into(),
            reports_dir: "out/reports".into(),
        }
    }
}

impl OutputConfig {
    /// Standard file names under one directory.
    pub fn under(dir: &Path) -> Self {
        Self {
            events: dir.join("events.jsonl"),
            estimates: dir.join("estimates.jsonl"),
            reports_dir: dir.join("reports"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub bin_width_mw: f64,
    /// Local hours `[start, end)` the time-of-day report compares against,
    /// e.g. `[22, 6]` for an overnight pumping window.
    pub reference_span: Option<(u32, u32)>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            bin_width_mw: 5.0,
            reference_span: None,
        }
    }
}

impl AnalyticsConfig {
    pub fn reference(&self) -> Option<HourSpan> {
        self.reference_span.map(|(a, b)| HourSpan::new(a, b))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_mw > 0.0) {
            bail!("analytics.bin_width_mw must be > 0");
        }
        if let Some((a, b)) = self.reference_span {
            if a > 23 || b > 24 {
                bail!("analytics.reference_span hours must lie in 0..=24");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub registry_path: Option<PathBuf>,
    pub monitor_map_path: Option<PathBuf>,
    /// `error`, `warn`, `info`, `debug` or `trace`. Command-line flags win.
    pub log_level: Option<String>,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub detector: DetectorConfig,
    pub estimator: EstimatorConfig,
    pub analytics: AnalyticsConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Loads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.registry_path, &mut self.monitor_map_path]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for s in &mut self.input.streams {
            resolve(base, &mut s.path);
        }
        resolve(base, &mut self.output.events);
        resolve(base, &mut self.output.estimates);
        resolve(base, &mut self.output.reports_dir);
    }

    /// Checks sub-configs and that referenced inputs exist (replay) or can
    /// appear (follow: the parent directory exists).
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.estimator.validate()?;
        self.analytics.validate()?;
        for p in [&self.registry_path, &self.monitor_map_path].into_iter().flatten() {
            if !p.is_file() {
                bail!("{} does not exist", p.display());
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.input.streams {
            let id = s.monitor_id();
            if !ids.insert(id.clone()) {
                bail!("monitor {id} is listed twice in input.streams");
            }
            match self.input.mode {
                InputMode::Replay if !s.path.is_file() => {
                    bail!("input stream {} does not exist", s.path.display())
                }
                InputMode::Follow => {
                    let parent = s.path.parent().filter(|p| !p.as_os_str().is_empty());
                    if parent.is_some_and(|p| !p.is_dir()) {
                        bail!("directory for followed stream {} does not exist", s.path.display());
                    }
                }
                _ => {}
            }
        }
        if self.input.poll_interval_ms == 0 {
            bail!("input.poll_interval_ms must be >= 1");
        }
        if matches!(self.input.idle_exit_s, Some(s) if !(s > 0.0)) {
            bail!("input.idle_exit_s must be > 0 when set");
        }
        Ok(())
    }
}

/// A simulator scenario file: every [`SimScenario`] field at the top level.
pub fn load_scenario(path: &Path) -> Result<SimScenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let sc: SimScenario =
        toml::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
    sc.validate()?;
    Ok(sc)
}

fn default_sweep() -> Vec<f64> {
    DEFAULT_SWEEP_WINDOWS.to_vec()
}

/// A campaign file: a base scenario, how to vary it, and how to score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub scenario: SimScenario,
    #[serde(default)]
    pub variations: Variations,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_sweep")]
    pub sweep_windows_s: Vec<f64>,
}

impl CampaignSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading campaign {}", path.display()))?;
        let spec: CampaignSpec =
            toml::from_str(&text).with_context(|| format!("parsing campaign {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.estimator.validate()?;
        if self.scenario.events.is_empty() {
            bail!("campaign scenario needs at least one event");
        }
        if self.sweep_windows_s.iter().any(|w| !(*w > 0.0)) {
            bail!("sweep_windows_s entries must be > 0");
        }
        Ok(())
    }
}
