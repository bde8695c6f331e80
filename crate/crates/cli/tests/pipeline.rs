mod common;

use std::fs;
use std::path::PathBuf;

use chrono::{Duration, FixedOffset, TimeZone, Utc};
use inertia_cli::commands::*;
use inertia_cli::config::{AnalyticsConfig, CampaignSpec, RunConfig};
use inertia_cli::formats::{read_events, read_jsonl, EstimateRecord};
use inertia_core::analytics::{EventLedger, LedgerRecord};
use inertia_core::detector::{ConfirmedEvent, MonitorMap};
use inertia_core::estimator::error_rate;
use inertia_core::sim::{RampDirection, SimScenario, Variations};
use tempfile::{tempdir, TempDir};

fn export(sc: &SimScenario) -> (TempDir, Vec<PathBuf>) {
    let dir = tempdir().unwrap();
    let paths = cmd_simulate(sc, &dir.path().join("sim")).unwrap();
    (dir, paths)
}

#[test]
fn five_injected_trips_give_five_records() {
    let (dir, paths) = export(&common::trip_scenario("bath_county", 477.0, 5));
    let cfg = common::run_config(
        dir.path(),
        &paths,
        &[common::signature("bath_county", 477.0)],
        &common::map_near("bath_county"),
    );
    let summary = cmd_detect(&cfg).unwrap();
    let events = read_events(&cfg.output.events).unwrap();
    assert_eq!(events.len(), 5, "{summary}");
    assert_eq!(summary.confirmed, 5);
    assert_eq!(summary.streams, 3);
    for (i, ev) in events.iter().enumerate() {
        let t_true = 60.0 + 100.0 * i as f64;
        assert!((ev.t_event_s - t_true).abs() <= 0.15, "{} vs {t_true}", ev.t_event_s);
        assert_eq!(ev.plant_id.as_deref(), Some("bath_county"));
        assert_eq!(ev.monitor_ids, vec!["north".to_string(), "south".to_string()]);
    }
    let line = fs::read_to_string(&cfg.output.events).unwrap();
    let first = line.lines().next().unwrap();
    for field in ["t_event_s", "spike_rocof_hz_per_s", "v_step_pu", "f_deviation_hz"] {
        assert!(first.contains(field), "{first}");
    }
}

#[test]
fn noise_only_trace_gives_no_records() {
    let (dir, paths) = export(&common::trip_scenario("bath_county", 477.0, 0));
    let cfg = common::run_config(dir.path(), &paths, &[], &MonitorMap::new());
    let summary = cmd_detect(&cfg).unwrap();
    assert_eq!(summary.confirmed, 0);
    assert_eq!(fs::read_to_string(&cfg.output.events).unwrap(), "");
    assert_eq!(summary.to_string(), "streams=3 skipped=0 candidates=0 confirmed=0 rejected: none");
}

#[test]
fn oscillation_is_counted_as_rejected() {
    let (dir, paths) = export(&common::oscillation_scenario());
    let cfg = common::run_config(dir.path(), &paths, &[], &MonitorMap::new());
    let summary = cmd_detect(&cfg).unwrap();
    assert_eq!(summary.confirmed, 0);
    assert!(summary.rejected.get("oscillation").copied().unwrap_or(0) >= 1, "{summary}");
    assert!(summary.to_string().contains("oscillation="));
}

#[test]
fn replay_is_byte_identical() {
    let (dir, paths) = export(&common::trip_scenario("bath_county", 477.0, 3));
    let reg = [common::signature("bath_county", 477.0)];
    let cfg = common::run_config(dir.path(), &paths, &reg, &common::map_near("bath_county"));
    cmd_detect(&cfg).unwrap();
    let a = fs::read(&cfg.output.events).unwrap();
    cmd_estimate(&cfg, &cfg.output.events).unwrap();
    let ea = fs::read(&cfg.output.estimates).unwrap();
    cmd_detect(&cfg).unwrap();
    cmd_estimate(&cfg, &cfg.output.events).unwrap();
    assert_eq!(a, fs::read(&cfg.output.events).unwrap());
    assert_eq!(ea, fs::read(&cfg.output.estimates).unwrap());
}

#[test]
fn estimate_uses_registry_mw_step() {
    let mut sc = common::trip_scenario("helms", 310.0, 3);
    sc.governor = inertia_core::sim::Governor::Off;
    sc.damping_mw_per_hz = 0.0;
    sc.noise.std_mw = 0.0;
    for m in &mut sc.monitors {
        m.f_noise_hz = 0.0;
    }
    let (dir, paths) = export(&sc);
    let cfg = common::run_config(dir.path(), &paths, &[common::signature("helms", 310.0)], &common::map_near("helms"));
    cmd_detect(&cfg).unwrap();
    let s = cmd_estimate(&cfg, &cfg.output.events).unwrap();
    assert_eq!((s.events, s.estimated, s.skipped), (3, 3, 0));
    let records: Vec<EstimateRecord> = read_jsonl(&cfg.output.estimates).unwrap();
    for r in records {
        let EstimateRecord::Estimated(est) = r else { panic!("{r:?}") };
        assert_eq!(est.delta_p_mw, 310.0);
        assert_eq!(est.plant_id, "helms");
        assert_eq!(est.monitor_id, "north");
        assert!(error_rate(est.h_mw_s, 1.0e6).unwrap() < 0.01, "{}", est.h_mw_s);
    }
    let text = fs::read_to_string(&cfg.output.estimates).unwrap();
    assert!(text.contains("\"status\":\"estimated\"") && text.contains("\"h_mw_s\""));
}

#[test]
fn end_to_end_recovers_h_within_campaign_tolerance() {
    // Campaign measurement conditions: no frequency control, 30 MW load
    // noise, 0.03 mHz sensor noise. Each trip is undone 20 s later by a
    // remote unit so frequency stays near nominal.
    let mut sc = common::trip_scenario("bath_county", 477.0, 5);
    sc.governor = inertia_core::sim::Governor::Off;
    sc.damping_mw_per_hz = 0.0;
    for m in &mut sc.monitors {
        m.f_noise_hz = 3.0e-5;
    }
    let restores: Vec<_> = sc
        .events
        .iter()
        .map(|e| inertia_core::sim::SimEvent {
            t_s: e.t_s + 20.0,
            delta_p_mw: -e.delta_p_mw,
            plant_id: "agc".into(),
        })
        .collect();
    sc.events.extend(restores);
    let (dir, paths) = export(&sc);
    let cfg = common::run_config(
        dir.path(),
        &paths,
        &[common::signature("bath_county", 477.0)],
        &common::map_near("bath_county"),
    );
    cmd_detect(&cfg).unwrap();
    cmd_estimate(&cfg, &cfg.output.events).unwrap();
    let records: Vec<EstimateRecord> = read_jsonl(&cfg.output.estimates).unwrap();
    let errors: Vec<f64> = records
        .iter()
        .map(|r| match r {
            EstimateRecord::Estimated(e) => error_rate(e.h_mw_s, 1.0e6).unwrap(),
            other => panic!("{other:?}"),
        })
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert_eq!(errors.len(), 5);
    assert!(mean <= 0.10, "{errors:?}");
}

#[test]
fn events_without_plant_are_skipped_not_errors() {
    let (dir, paths) = export(&common::trip_scenario("bath_county", 477.0, 1));
    let cfg = common::run_config(dir.path(), &paths, &[common::signature("bath_county", 477.0)], &MonitorMap::new());
    let mut unattributed = ConfirmedEvent::at(60.0);
    unattributed.monitor_ids = vec!["north".into()];
    let mut unknown = ConfirmedEvent::at(60.0);
    unknown.plant_id = Some("nowhere".into());
    let events_path = dir.path().join("events.jsonl");
    inertia_cli::formats::write_jsonl(&events_path, &[unattributed, unknown]).unwrap();
    let s = cmd_estimate(&cfg, &events_path).unwrap();
    assert_eq!((s.estimated, s.skipped), (0, 2));
    let records: Vec<EstimateRecord> = read_jsonl(&cfg.output.estimates).unwrap();
    match &records[0] {
        EstimateRecord::Skipped { reason, plant_id, .. } => {
            assert!(plant_id.is_none());
            assert_eq!(reason, "no plant attributed");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(&records[1], EstimateRecord::Skipped { reason, .. } if reason.contains("not in the registry")));
}

#[test]
fn estimate_without_registry_fails() {
    let (dir, paths) = export(&common::trip_scenario("bath_county", 477.0, 1));
    let mut cfg = common::run_config(dir.path(), &paths, &[], &MonitorMap::new());
    cfg.registry_path = None;
    assert!(cmd_estimate(&cfg, &dir.path().join("events.jsonl")).is_err());
    cfg.registry_path = Some(dir.path().join("missing.csv"));
    assert!(cmd_estimate(&cfg, &dir.path().join("events.jsonl")).is_err());
}

#[test]
fn config_paths_resolve_against_file_and_reject_typos() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("run.toml");
    fs::write(
        &p,
        "registry_path = \"reg.csv\"\n[input]\nstreams = [{ path = \"data/a.csv\" }, { path = \"/abs/b.csv\", monitor_id = \"bee\" }]\n\
         [detector]\nholdoff_s = 45.0\n[estimator]\nwindow_length_s = 0.4\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.registry_path, Some(dir.path().join("reg.csv")));
    assert_eq!(cfg.input.streams[0].path, dir.path().join("data/a.csv"));
    assert_eq!(cfg.input.streams[0].monitor_id(), "a");
    assert_eq!(cfg.input.streams[1].monitor_id(), "bee");
    assert_eq!(cfg.detector.holdoff_s, 45.0);
    assert_eq!(cfg.detector.spike_window_s, 0.2);
    assert_eq!(cfg.estimator.window_length_s, 0.4);
    assert_eq!(cfg.output.events, dir.path().join("out/events.jsonl"));
    assert!(cfg.validate().is_err(), "referenced files do not exist");

    fs::write(&p, "[detector]\nholdof_s = 45.0\n").unwrap();
    assert!(RunConfig::load(&p).is_err());
    fs::write(&p, "[detector]\nholdoff_s = -1.0\n").unwrap();
    assert!(RunConfig::load(&p).unwrap().validate().is_err());
}

fn small_campaign(directions: Vec<RampDirection>, count: usize) -> CampaignSpec {
    let mut spec: CampaignSpec = toml::from_str(&fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/ramp_campaign.toml"
    ))
    .unwrap())
    .unwrap();
    spec.variations = Variations {
        directions,
        count,
        ..spec.variations
    };
    spec
}

#[test]
fn campaign_tables_are_byte_identical_for_a_seed() {
    let spec = small_campaign(vec![RampDirection::Up, RampDirection::Down], 4);
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    let out = cmd_campaign(&spec, a.path()).unwrap();
    cmd_campaign(&spec, b.path()).unwrap();
    assert_eq!(out.cases.len(), 8);
    for f in CAMPAIGN_FILES {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut other = spec.clone();
    other.variations.master_seed = Some(99);
    let c = tempdir().unwrap();
    cmd_campaign(&other, c.path()).unwrap();
    assert_ne!(fs::read(a.path().join("cases.csv")).unwrap(), fs::read(c.path().join("cases.csv")).unwrap());
}

#[test]
fn full_campaign_emits_132_rows() {
    let spec = small_campaign(vec![RampDirection::Up, RampDirection::Down], 66);
    let dir = tempdir().unwrap();
    cmd_campaign(&spec, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("cases.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 132);
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + spec.sweep_windows_s.len());
}

#[test]
fn zero_ramp_campaign_methods_agree_row_wise() {
    let mut spec = small_campaign(vec![RampDirection::Unchanged], 6);
    spec.scenario.noise.std_mw = 0.0;
    spec.scenario.monitors[0].f_noise_hz = 0.0;
    let out = run_campaign_spec(&spec).unwrap();
    for c in &out.cases {
        let (a, b) = (c.improved_error.unwrap(), c.traditional_error.unwrap());
        assert!((a - b).abs() < 1e-6, "{a} {b}");
    }
}

#[test]
fn analyze_writes_reports_per_plant() {
    let dir = tempdir().unwrap();
    let t0 = Utc.with_ymd_and_hms(2021, 1, 30, 23, 30, 0).unwrap();
    let mut records = Vec::new();
    for (i, mw) in [300.0, 310.0, 320.0].into_iter().enumerate() {
        records.push(LedgerRecord {
            t_event: t0 + Duration::hours(24 * i as i64),
            plant_id: "helms".into(),
            mw_observed: Some(mw),
            h_estimate_mw_s: None,
        });
    }
    records.push(LedgerRecord {
        t_event: t0,
        plant_id: "lonely".into(),
        mw_observed: Some(100.0),
        h_estimate_mw_s: None,
    });
    let ledger = EventLedger::new(FixedOffset::east_opt(3600).unwrap(), records);
    let reports = dir.path().join("reports");
    let opts = AnalyticsConfig {
        bin_width_mw: 10.0,
        reference_span: Some((22, 6)),
    };
    let s = cmd_analyze(&ledger, &reports, &opts).unwrap();
    assert_eq!(s.plants, vec!["helms".to_string(), "lonely".to_string()]);
    assert_eq!(s.skipped.len(), 2, "{:?}", s.skipped);
    for f in [
        "mw_step_stats.json",
        "mw_histogram.csv",
        "monthly_profile.json",
        "monthly_profile.csv",
        "daily_counts.json",
        "daily_counts.csv",
        "time_of_day.json",
        "time_of_day.csv",
    ] {
        assert!(reports.join("helms").join(f).is_file(), "{f}");
    }
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(reports.join("helms/mw_step_stats.json")).unwrap()).unwrap();
    let ratio = stats["max_abs_deviation_ratio"].as_f64().unwrap();
    assert!((ratio - 10.0 / 310.0).abs() < 1e-12);
    let hist = fs::read_to_string(reports.join("helms/mw_histogram.csv")).unwrap();
    assert_eq!(hist, "bin_lo_mw,bin_hi_mw,count\n300.0,310.0,1\n310.0,320.0,1\n320.0,330.0,1\n");
    // 23:30 UTC is 00:30 local, so the first event lands on 31 January.
    let daily = fs::read_to_string(reports.join("helms/daily_counts.csv")).unwrap();
    assert!(daily.starts_with("date,count\n2021-01-31,1\n"), "{daily}");
    assert!(!reports.join("lonely/mw_step_stats.json").exists());
    assert!(reports.join("lonely/daily_counts.json").is_file());
}
