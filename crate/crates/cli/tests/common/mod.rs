#![allow(dead_code)]

use std::path::{Path, PathBuf};

use inertia_cli::config::{OutputConfig, RunConfig, StreamInput};
use inertia_cli::formats::{write_monitor_map, write_registry};
use inertia_core::detector::MonitorMap;
use inertia_core::estimator::PlantSignature;
use inertia_core::sim::{Governor, LoadNoise, MonitorSpec, Oscillation, SimEvent, SimScenario};

pub fn signature(plant_id: &str, mw: f64) -> PlantSignature {
    PlantSignature {
        plant_id: plant_id.into(),
        region: "test".into(),
        unit_capacity_mw: mw * 1.1,
        mw_step_mean_mw: mw,
        mw_step_tolerance: 0.05,
    }
}

/// Two monitors near `plant`, one far away, `n` trips of `mw` every 100 s.
pub fn trip_scenario(plant: &str, mw: f64, n: usize) -> SimScenario {
    let mut monitors = vec![
        MonitorSpec::near("north", plant),
        MonitorSpec::near("south", plant),
        MonitorSpec::distant("far"),
    ];
    for m in &mut monitors {
        m.v_noise_pu = 0.0005;
        m.f_noise_hz = 0.0002;
    }
    SimScenario {
        h_true_mw_s: 1.0e6,
        damping_mw_per_hz: 3000.0,
        governor: Governor::Droop {
            droop_mw_per_hz: 20000.0,
            time_constant_s: 2.0,
        },
        noise: LoadNoise {
            std_mw: 30.0,
            correlation_time_s: 3.0,
            seed: 11,
        },
        events: (0..n)
            .map(|i| SimEvent {
                t_s: 60.0 + 100.0 * i as f64,
                delta_p_mw: mw,
                plant_id: plant.into(),
            })
            .collect(),
        monitors,
        duration_s: 60.0 + 100.0 * n as f64,
        ..Default::default()
    }
}

pub fn oscillation_scenario() -> SimScenario {
    let mut sc = trip_scenario("bath_county", 477.0, 0);
    sc.duration_s = 200.0;
    sc.oscillations = vec![Oscillation {
        freq_hz: 0.5,
        amp_hz: 0.04,
        amp_v_pu: 0.02,
        start_s: 60.0,
        duration_s: 40.0,
    }];
    sc
}

/// Writes registry, monitor map and a run config pointing at `streams`.
pub fn run_config(dir: &Path, streams: &[PathBuf], registry: &[PlantSignature], map: &MonitorMap) -> RunConfig {
    let registry_path = dir.join("registry.csv");
    let map_path = dir.join("monitors.csv");
    write_registry(&registry_path, registry).unwrap();
    write_monitor_map(&map_path, map).unwrap();
    let mut cfg = RunConfig {
        registry_path: Some(registry_path),
        monitor_map_path: Some(map_path),
        output: OutputConfig::under(&dir.join("out")),
        ..Default::default()
    };
    cfg.input.streams = streams
        .iter()
        .map(|p| StreamInput {
            path: p.clone(),
            monitor_id: None,
        })
        .collect();
    cfg
}

pub fn map_near(plant: &str) -> MonitorMap {
    let mut map = MonitorMap::new();
    map.insert("north".into(), Some(plant.into()));
    map.insert("south".into(), Some(plant.into()));
    map.insert("far".into(), None);
    map
}
