use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sut"))
        .args(args)
        .env_remove("SUT_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, config: &str) -> (String, String) {
    let cfg = dir.join("sim.toml");
    fs::write(&cfg, config).unwrap();
    let (gt, dets) = (dir.join("gt.txt"), dir.join("dets.txt"));
    let o = sut(&["simulate", "--config", &s(&cfg), "--out-gt", &s(&gt), "--out-dets", &s(&dets)]);
    assert!(o.status.success(), "{}", stderr(&o));
    (s(&gt), s(&dets))
}

fn csv_row(report: &str) -> Vec<String> {
    let lines: Vec<&str> = report.lines().collect();
    let header = lines.iter().position(|l| l.starts_with("MOTA,IDF1")).expect("csv header");
    lines[header + 1].split(',').map(str::to_string).collect()
}

#[test]
fn noiseless_simulation_tracks_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, dets) = simulate(
        dir.path(),
        "[sim]\nn_fish = 6\nn_frames = 200\ndet_center_sigma = 0.0\ndet_size_sigma = 0.0\nmiss_prob = 0.0\nfp_rate = 0.0\n",
    );
    let res = s(&dir.path().join("res.txt"));
    let o = sut(&["track", "--dets", &dets, "--out", &res]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tracks born 6, emitted 6"), "{}", stdout(&o));

    let o = sut(&["eval", "--gt", &gt, "--pred", &res]);
    assert!(o.status.success());
    let row = csv_row(&stdout(&o));
    assert_eq!(row[0], "1.000000");
    assert_eq!(row[1], "1.000000");
    assert_eq!(row[4], "0");
}

#[test]
fn ablation_flags_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dets) = simulate(dir.path(), "[sim]\nn_fish = 3\nn_frames = 40\n");
    for (motion, assoc) in [("kf", "iou"), ("ukf", "giou"), ("ukf", "diou"), ("kf", "fishiou")] {
        let res = s(&dir.path().join(format!("{motion}_{assoc}.txt")));
        let o = sut(&["track", "--dets", &dets, "--out", &res, "--motion", motion, "--assoc", assoc]);
        assert!(o.status.success(), "{motion}/{assoc}: {}", stderr(&o));
    }
    let o = sut(&["track", "--dets", &dets, "--out", "/dev/null", "--motion", "ekf"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_names_path() {
    let o = sut(&["track", "--dets", "/nonexistent/dets.txt", "--out", "/tmp/unused.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/dets.txt"));
}

#[test]
fn malformed_detections_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("dets.txt");
    fs::write(&dets, "1,-1,0,0,10,10,0.9,-1,-1,-1\n2,-1,0,0,10\n").unwrap();
    let o = sut(&["track", "--dets", &s(&dets), "--out", &s(&dir.path().join("r.txt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn embeddings_without_reid_warn_and_are_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("dets.txt");
    fs::write(&dets, "1,-1,0,0,10,10,0.9,-1,-1,-1\n").unwrap();
    // would be rejected if read: detection index 5 does not exist
    let emb = dir.path().join("emb.txt");
    fs::write(&emb, "1,5,1,0\n").unwrap();
    let res = dir.path().join("r.txt");
    let o = sut(&["track", "--dets", &s(&dets), "--out", &s(&res), "--embeddings", &s(&emb)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("reid_enabled"), "{}", stderr(&o));

    let cfg = dir.path().join("reid.toml");
    fs::write(&cfg, "[tracker]\nreid_enabled = true\n").unwrap();
    let o = sut(&["track", "--dets", &s(&dets), "--out", &s(&res), "--embeddings", &s(&emb), "--config", &s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[tracker]\nmax_aeg = 3\n").unwrap();
    let dets = dir.path().join("dets.txt");
    fs::write(&dets, "").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sut"))
        .args(["track", "--dets", &s(&dets), "--out", &s(&dir.path().join("r.txt"))])
        .env("SUT_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("max_aeg"), "{}", stderr(&o));
}

#[test]
fn eval_self_and_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    fs::write(&gt, "1,1,0,0,10,10,1,1,1\n2,1,1,0,10,10,1,1,1\n").unwrap();
    let same = dir.path().join("same.txt");
    fs::write(&same, "1,1,0.00,0.00,10.00,10.00,0.9000,-1,-1,-1\n2,1,1.00,0.00,10.00,10.00,0.9000,-1,-1,-1\n").unwrap();
    let far = dir.path().join("far.txt");
    fs::write(&far, "1,4,500,500,10,10,0.9,-1,-1,-1\n2,4,500,500,10,10,0.9,-1,-1,-1\n").unwrap();

    let o = sut(&["eval", "--gt", &s(&gt), "--pred", &s(&same)]);
    let row = csv_row(&stdout(&o));
    assert_eq!((row[0].as_str(), row[1].as_str()), ("1.000000", "1.000000"));
    assert!(stdout(&o).contains("MOTA"));

    let o = sut(&["eval", "--gt", &s(&gt), "--pred", &s(&far), "--iou-threshold", "0.5"]);
    let row = csv_row(&stdout(&o));
    assert_eq!(row[0], "-1.000000");
}

#[test]
fn zero_fish_simulation_writes_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, dets) = simulate(dir.path(), "[sim]\nn_fish = 0\nfp_rate = 0.0\n");
    assert_eq!(fs::read_to_string(&gt).unwrap(), "");
    assert_eq!(fs::read_to_string(&dets).unwrap(), "");
    let o = sut(&["stats", "--gt", &gt]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "frame,mean_speed,mean_abs_angular_velocity\n");
}

#[test]
fn simulate_summary_matches_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "[sim]\nn_fish = 4\nn_frames = 100\nturn_sigma = 0.2\n").unwrap();
    let (gt, dets) = (s(&dir.path().join("gt.txt")), s(&dir.path().join("d.txt")));
    let sim = sut(&["simulate", "--config", &s(&cfg), "--out-gt", &gt, "--out-dets", &dets, "--seed", "5"]);
    assert!(sim.status.success());
    let csv = s(&dir.path().join("stats.csv"));
    let stats = sut(&["stats", "--gt", &gt, "--out", &csv]);
    assert!(stats.status.success());
    let summary = stdout(&stats);
    assert!(stdout(&sim).contains(summary.trim()), "{} vs {}", stdout(&sim), summary);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("frame,mean_speed,mean_abs_angular_velocity\n1,,\n"));
    assert!(text.contains("\nbin_start,bin_end,count\n"));
}

#[test]
fn batch_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for seed in 0..3 {
        let sub = dir.path().join(format!("s{seed}"));
        fs::create_dir(&sub).unwrap();
        let (_, dets) = simulate(&sub, &format!("[sim]\nn_fish = 4\nn_frames = 60\nseed = {seed}\n"));
        let renamed = dir.path().join(format!("seq{seed}.txt"));
        fs::rename(&dets, &renamed).unwrap();
        inputs.push(s(&renamed));
    }
    let out_dir = dir.path().join("out");
    fs::create_dir(&out_dir).unwrap();
    let mut args = vec!["batch", "--jobs", "3", "--out-dir"];
    let out = s(&out_dir);
    args.push(&out);
    args.extend(inputs.iter().map(String::as_str));
    let o = sut(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    for (seed, input) in inputs.iter().enumerate() {
        let single = s(&dir.path().join(format!("single{seed}.txt")));
        assert!(sut(&["track", "--dets", input, "--out", &single]).status.success());
        let batch = out_dir.join(format!("seq{seed}.txt"));
        assert_eq!(fs::read(single).unwrap(), fs::read(batch).unwrap());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(sut(&[]).status.code(), Some(1));
    assert_eq!(sut(&["eval", "--gt", "a"]).status.code(), Some(1));
    assert_eq!(sut(&["--help"]).status.code(), Some(0));
}
