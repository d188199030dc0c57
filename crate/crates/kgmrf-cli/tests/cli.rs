use std::path::Path;
use std::process::{Command, Output};

fn kgmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgmrf")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgmrf(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(read(dir.path(), "selftest.txt")).unwrap();
    assert!(report.lines().last().unwrap().ends_with("checks passed"));
    assert!(!report.contains("FAIL"));
}

#[test]
fn ellipse_sweep_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for (d, jobs) in [(&a, "1"), (&b, "1"), (&c, "4")] {
        let out = kgmrf(&["ellipse-sweep", "--out", d.path().to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["omega_sweep.csv", "omega_sweep.svg", "summary-ellipse-sweep.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} rerun");
        assert_eq!(read(a.path(), name), read(c.path(), name), "{name} jobs");
    }
}

#[test]
fn stability_map_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgmrf(&["stability-map", "--eta-max", "0.5", "--gamma", "1.99", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("divergent cells:")).unwrap();
    let n: usize = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(n >= 1, "{line}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "eta = 0.05\netaa = 0.1\n").unwrap();
    let out = kgmrf(&["ellipse-sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("etaa"));
}

#[test]
fn flag_wins_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "eta = 0.01\nseeds = 5\nemit_svg = false\n").unwrap();
    let o = dir.path().to_str().unwrap();
    let out = kgmrf(&["ablation", "--config", cfg.to_str().unwrap(), "--eta", "0.07", "--out", o]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path(), "summary-ablation.json")).unwrap();
    assert_eq!(json["params"]["eta"], 0.07);
    assert!(!dir.path().join("ablation.svg").exists());
    let csv = String::from_utf8(read(dir.path(), "ablation.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("5")));
}

#[test]
fn empty_config_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let o = dir.path().to_str().unwrap();
    let out = kgmrf(&["ablation", "--config", cfg.to_str().unwrap(), "--seeds", "5", "--out", o]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path(), "summary-ablation.json")).unwrap();
    assert_eq!(json["params"]["eta"], 0.05);
    assert_eq!(json["params"]["gamma"], 0.95);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(kgmrf(&["ellipse-sweep", "--bogus"]).status.code(), Some(2));
    assert_eq!(kgmrf(&["otb-track", "/no/such/sequence", "--out", o]).status.code(), Some(2));
    assert_eq!(kgmrf(&["ellipse-sweep", "--config", "/no/such.cfg", "--out", o]).status.code(), Some(2));
    // tuning seeds are not evaluation seeds
    assert_eq!(kgmrf(&["ellipse-sweep", "--seeds", "0,1", "--out", o]).status.code(), Some(1));
    assert_eq!(kgmrf(&["ablation", "--gamma", "2.5", "--seeds", "5", "--out", o]).status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let out = kgmrf(&["ellipse-sweep", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--out", "--config", "--seeds", "--jobs", "--tune", "--timing", "--eta", "--gamma", "--eta-max"] {
        let line = text.lines().find(|l| l.trim_start().starts_with(flag)).unwrap_or_else(|| panic!("{flag}"));
        assert!(line.contains("[default:"), "{line}");
    }
}

#[test]
fn otb_track_end_to_end() {
    use kgmrf::region_cov::{encode_pnm, synthetic_sequence, BBox};
    let seq = tempfile::tempdir().unwrap();
    std::fs::create_dir(seq.path().join("img")).unwrap();
    let (frames, gt) = synthetic_sequence(96, 72, BBox::new(20, 20, 16, 16), (1, 1), 6);
    let mut text = String::new();
    for (k, (f, b)) in frames.iter().zip(&gt).enumerate() {
        std::fs::write(seq.path().join(format!("img/{:04}.ppm", k + 1)), encode_pnm(f)).unwrap();
        text.push_str(&format!("{}\t{}\t{}\t{}\n", b.x, b.y, b.w, b.h));
    }
    std::fs::write(seq.path().join("groundtruth_rect.txt"), text).unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = kgmrf(&["otb-track", seq.path().to_str().unwrap(), "--out", out_dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(read(out_dir.path(), "track.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}
