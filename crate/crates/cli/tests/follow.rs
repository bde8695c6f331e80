mod common;

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use inertia_cli::commands::{cmd_detect, cmd_simulate};
use inertia_cli::config::{InputMode, OutputConfig};
use inertia_cli::follow::{run_follow, FollowOptions};
use inertia_core::sim::DataGap;
use tempfile::tempdir;

fn lines_of(path: &PathBuf) -> BTreeSet<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn follow_matches_replay_of_finished_files() {
    let dir = tempdir().unwrap();
    let mut sc = common::oscillation_scenario();
    let trips = common::trip_scenario("bath_county", 477.0, 6);
    sc.events = trips.events;
    sc.duration_s = trips.duration_s;
    sc.oscillations[0].start_s = 300.0;
    sc.monitors[0].gap = Some(DataGap {
        start_s: 250.0,
        length_s: 30.0,
    });
    let sources = cmd_simulate(&sc, &dir.path().join("src")).unwrap();

    let registry = [common::signature("bath_county", 477.0)];
    let map = common::map_near("bath_county");
    let replay = common::run_config(dir.path(), &sources, &registry, &map);
    let replay_summary = cmd_detect(&replay).unwrap();
    assert!(replay_summary.confirmed >= 6, "{replay_summary}");

    let live_dir = dir.path().join("live");
    fs::create_dir_all(&live_dir).unwrap();
    let targets: Vec<PathBuf> = sources
        .iter()
        .map(|p| live_dir.join(p.file_name().unwrap()))
        .collect();
    let mut live = common::run_config(dir.path(), &targets, &registry, &map);
    live.input.mode = InputMode::Follow;
    live.output = OutputConfig::under(&dir.path().join("live-out"));

    let contents: Vec<Vec<u8>> = sources.iter().map(|p| fs::read(p).unwrap()).collect();
    let writer_targets = targets.clone();
    let writer = std::thread::spawn(move || {
        let mut files: Vec<_> = writer_targets
            .iter()
            .map(|p| OpenOptions::new().create(true).append(true).open(p).unwrap())
            .collect();
        let mut offsets = vec![0usize; contents.len()];
        let mut round = 0usize;
        while offsets.iter().zip(&contents).any(|(o, c)| *o < c.len()) {
            for (i, file) in files.iter_mut().enumerate() {
                // Uneven chunk sizes, frequently ending mid-line.
                let step = 20_000 + 7_919 * ((round + 3 * i) % 5);
                let end = (offsets[i] + step).min(contents[i].len());
                file.write_all(&contents[i][offsets[i]..end]).unwrap();
                file.flush().unwrap();
                offsets[i] = end;
            }
            round += 1;
            std::thread::sleep(Duration::from_millis(5));
        }
    });
    let summary = run_follow(
        &live,
        FollowOptions {
            poll_interval: Duration::from_millis(3),
            idle_exit: Some(Duration::from_millis(400)),
        },
    )
    .unwrap();
    writer.join().unwrap();

    assert_eq!(lines_of(&live.output.events), lines_of(&replay.output.events));
    assert_eq!(summary.confirmed, replay_summary.confirmed);
    assert_eq!(summary.candidates, replay_summary.candidates);
    assert_eq!(summary.rejected, replay_summary.rejected);
}

#[test]
fn follow_without_voltage_column_skips_monitor() {
    let dir = tempdir().unwrap();
    let mut sc = common::trip_scenario("bath_county", 477.0, 2);
    sc.monitors[2].has_voltage = false;
    let paths = cmd_simulate(&sc, &dir.path().join("src")).unwrap();
    let mut cfg = common::run_config(dir.path(), &paths, &[], &common::map_near("bath_county"));
    let replay = cmd_detect(&cfg).unwrap();
    cfg.input.mode = InputMode::Follow;
    cfg.output = OutputConfig::under(&dir.path().join("live-out"));
    let live = run_follow(
        &cfg,
        FollowOptions {
            poll_interval: Duration::from_millis(2),
            idle_exit: Some(Duration::from_millis(50)),
        },
    )
    .unwrap();
    assert_eq!(replay.skipped, 1);
    assert_eq!(live, replay);
}
