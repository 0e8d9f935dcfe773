//! The `seaice` binary end to end.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use seaice::io::{read_image, write_image};
use seaice::raster::SceneRaster;

fn seaice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seaice")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = seaice(args);
    assert!(
        out.status.success(),
        "seaice {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn synth(dir: &Path, haze: &str, count: &str) {
    ok(&["synth", "--seed", "42", "--count", count, "--size", "128", "--haze-fraction", haze, "--out", s(dir)]);
}

fn accuracy_from_csv(csv: &str) -> f64 {
    let row = csv.lines().find(|l| l.starts_with("macro")).expect("macro row");
    row.split(',').nth(4).unwrap().parse().unwrap()
}

#[test]
fn white_scene_is_all_thick_ice() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let white = SceneRaster::filled(256, 256, [255, 255, 255], "white");
    write_image(&scenes.join("white.png"), &white).unwrap();
    let out = dir.path().join("out");
    ok(&["pipeline", s(&scenes), "--out", s(&out), "--run-id", "w"]);
    let labels = read_image(&out.join("run/w/labels/white.png")).unwrap();
    assert_eq!((labels.width(), labels.height()), (256, 256));
    for y in 0..256 {
        for x in 0..256 {
            assert_eq!(labels.pixel(x, y), [255, 0, 0]);
        }
    }
    let manifest = fs::read_to_string(out.join("run/w/manifest.toml")).unwrap();
    assert!(manifest.contains("tiles_processed = 1"), "{manifest}");
}

#[test]
fn empty_input_directory_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = seaice(&["pipeline", s(dir.path()), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(seaice(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(seaice(&["pipeline", "x", "--out", "y", "--bogus"]).status.code(), Some(2));
    assert_eq!(seaice(&["pipeline", "x", "--out", "y", "--mode", "cluster"]).status.code(), Some(2));
    assert_eq!(seaice(&[]).status.code(), Some(2));
    assert!(seaice(&["--help"]).status.success());
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "0.3", "3");
    synth(b.path(), "0.3", "3");
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 6);
    assert_eq!(ta, tb);
}

#[test]
fn clean_scenes_label_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0", "3");
    let pred = dir.path().join("pred");
    ok(&["label", s(&dir.path().join("scenes")), "--out", s(&pred)]);
    let csv = ok(&["evaluate", "--pred", s(&pred), "--truth", s(&dir.path().join("truth")), "--format", "csv"]);
    assert_eq!(accuracy_from_csv(&csv), 1.0, "{csv}");
}

#[test]
fn engine_modes_write_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0.3", "3");
    let scenes = dir.path().join("scenes");
    let run = |mode: &str, workers: &str| {
        let out = dir.path().join(mode);
        ok(&["pipeline", s(&scenes), "--out", s(&out), "--mode", mode, "--workers", workers, "--tile-size", "64"]);
        let root = out.join("run/default");
        let mut t = tree(&root.join("labels"));
        t.extend(tree(&root.join("filtered")).into_iter().map(|(k, v)| (Path::new("f").join(k), v)));
        t
    };
    let seq = run("sequential", "1");
    assert_eq!(seq.len(), 6);
    assert_eq!(seq, run("local", "4"));

    // Master and worker as separate processes.
    let out = dir.path().join("master");
    let mut master = Command::new(env!("CARGO_BIN_EXE_seaice"))
        .args(["master", s(&scenes), "--out", s(&out), "--tile-size", "64", "--bind", "127.0.0.1:0"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(master.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let workers: Vec<_> = (0..2)
        .map(|i| {
            Command::new(env!("CARGO_BIN_EXE_seaice"))
                .args(["worker", "--master", &addr, "--id", &format!("w{i}")])
                .stderr(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    assert!(master.wait().unwrap().success());
    for mut w in workers {
        assert!(w.wait().unwrap().success(), "worker exits 0 on SHUTDOWN");
    }
    let root = out.join("run/default");
    let mut t = tree(&root.join("labels"));
    t.extend(tree(&root.join("filtered")).into_iter().map(|(k, v)| (Path::new("f").join(k), v)));
    assert_eq!(seq, t);
    let manifest = fs::read_to_string(root.join("manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"master\""));
}

#[test]
fn pipeline_report_matches_standalone_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0.3", "2");
    let out = dir.path().join("out");
    let truth = dir.path().join("truth");
    ok(&["pipeline", s(&dir.path().join("scenes")), "--out", s(&out), "--truth", s(&truth), "--run-id", "r"]);
    let reports = out.join("run/r/reports");
    let written = fs::read_to_string(reports.join("metrics.csv")).unwrap();
    assert!(fs::read_to_string(reports.join("metrics.txt")).unwrap().contains("accuracy"));
    let manifest = out.join("run/r/manifest.toml");
    let again = ok(&["evaluate", "--config", s(&manifest), "--format", "csv"]);
    assert_eq!(written, again);
    let acc = accuracy_from_csv(&again);
    assert!(acc > 0.8 && acc <= 1.0, "{acc}");
}

#[test]
fn split_filter_and_bench_write_what_they_promise() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0.3", "1");
    let scenes = dir.path().join("scenes");
    let id = fs::read_dir(&scenes).unwrap().next().unwrap().unwrap().path();
    let id = id.file_stem().unwrap().to_str().unwrap().to_string();

    let tiles = dir.path().join("tiles");
    ok(&["split", s(&scenes), "--out", s(&tiles), "--tile-size", "64"]);
    let names: Vec<String> = tree(&tiles).keys().map(|k| k.display().to_string()).collect();
    assert_eq!(names.len(), 5, "{names:?}");
    assert!(names.contains(&format!("{id}.grid.toml")));

    let filtered = dir.path().join("filtered");
    ok(&["filter", s(&scenes), "--out", s(&filtered), "--masks"]);
    assert!(filtered.join(format!("{id}.png")).exists());
    assert!(filtered.join(format!("{id}.mask.png")).exists());

    let csv = ok(&["bench", s(&scenes), "--workers", "1,2", "--distributed", "1x2"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,workers,cores,load_s,map_s,reduce_s,speedup_load,speedup_reduce");
    // A distributed 1x1 baseline row is added ahead of the requested shape.
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("sequential,1,1,"));
    assert!(lines[4].starts_with("distributed,1,1,"));
    assert!(lines[5].starts_with("distributed,1,2,"));
    let speedup = |l: &str| l.split(',').nth(7).unwrap().parse::<f64>().unwrap();
    assert_eq!(speedup(lines[1]), 1.0);
    assert_eq!(speedup(lines[4]), 1.0);
}
