mod common;

use bhc_core::io;
use common::{args, exit_code, without_timings, Work, SCAN, TUBE};

#[test]
fn empty_description_gives_an_all_air_volume() {
    let w = Work::new();
    std::fs::write(w.path("empty.json"), r#"{"shapes": []}"#).unwrap();
    w.ok(&["phantom", "--spec", "empty.json", "--nx", "32", "--voxel-mm", "1", "-o", "air.raw"]);
    let vol = io::read_volume(w.path("air.raw")).unwrap();
    let (labels, materials) = vol.label_values().unwrap();
    assert_eq!(materials, ["air"]);
    assert!(labels.iter().all(|&l| l == 0));

    // an empty object attenuates nothing
    w.ok(&args(&["simulate", "--volume", "air.raw", "-o", "s.raw"], &[&SCAN, &TUBE]));
    let sino = io::read_sinogram(w.path("s.raw")).unwrap();
    assert!(sino.values().iter().all(|&v| v == 0.0));
}

#[test]
fn one_bin_polychromatic_scan_equals_the_monoenergetic_one() {
    let w = Work::new();
    w.phantom("al_steel", "lab.raw");
    w.ok(&args(&["simulate", "--volume", "lab.raw", "--mode", "mono", "--energy-kev", "70", "-o", "mono.raw"], &[&SCAN]));
    w.ok(&args(&["simulate", "--volume", "lab.raw", "--monoenergetic-kev", "70", "-o", "poly.raw"], &[&SCAN]));
    let mono = io::read_sinogram(w.path("mono.raw")).unwrap();
    let poly = io::read_sinogram(w.path("poly.raw")).unwrap();
    assert!(mono.values().iter().any(|&v| v > 1.0));
    for (a, b) in mono.values().iter().zip(poly.values()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn reruns_are_byte_identical_whatever_the_thread_count() {
    let w = Work::new();
    w.phantom("cement_steel_a", "lab.raw");
    let simulate = args(
        &["simulate", "--volume", "lab.raw", "--noise-photons", "1e5", "--seed", "7", "-o", "noisy.raw"],
        &[&SCAN, &TUBE],
    );
    w.ok(&simulate);
    let first = w.bytes("noisy.raw");
    assert!(w.run(&simulate, Some("3")).status.success());
    assert_eq!(first, w.bytes("noisy.raw"));

    w.ok(&args(&["lut", "--setting", "bench", "--ramp", "hann", "-o", "lut.csv"], &[&SCAN, &TUBE]));
    let correct = args(
        &["correct", "--sinogram", "noisy.raw", "--lut", "lut.csv", "--setting", "bench", "--ramp", "hann"],
        &[&TUBE, &["--classes", "3", "--report", "report.json", "-o", "c.raw"]],
    );
    assert!(w.run(&correct, Some("1")).status.success());
    let image = w.bytes("c.raw");
    let report = without_timings(&w.bytes("report.json"));
    let out = w.run(&correct, Some("4"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(image, w.bytes("c.raw"));
    assert_eq!(report, without_timings(&w.bytes("report.json")));
}

#[test]
fn rebuilding_a_table_reproduces_it() {
    let w = Work::new();
    for out in ["a.csv", "b.csv"] {
        w.ok(&args(&["lut", "--setting", "bench", "-o", out], &[&SCAN, &TUBE]));
    }
    assert_eq!(w.bytes("a.csv"), w.bytes("b.csv"));
    assert_eq!(w.bytes("a.json"), w.bytes("b.json"));
}

#[test]
fn correction_flattens_the_disc_and_metrics_see_it() {
    let w = Work::new();
    w.phantom("al_disc", "lab.raw");
    w.ok(&args(&["simulate", "--volume", "lab.raw", "-o", "s.raw"], &[&SCAN, &TUBE]));
    w.ok(&args(&["lut", "--setting", "bench", "-o", "lut.csv"], &[&SCAN, &TUBE]));
    w.ok(&args(
        &["correct", "--sinogram", "s.raw", "--lut", "lut.csv", "--setting", "bench", "--classes", "2"],
        &[&TUBE, &["--uncorrected", "u.raw", "--png", "c-view.png", "-o", "c.raw"]],
    ));
    std::fs::write(
        w.path("rois.json"),
        r#"{"center": {"shape": "disc", "center_mm": [0, 0], "radius_mm": 5},
            "edge": {"shape": "annulus", "center_mm": [0, 0], "inner_mm": 16, "outer_mm": 19}}"#,
    )
    .unwrap();
    let cupping = |img: &str| {
        let out = w.run(&["metrics", "--image", img, "--rois", "rois.json"], None);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["cupping_percent"].as_f64().unwrap()
    };
    let before = cupping("u.raw");
    let after = cupping("c.raw");
    assert!(before > 3.0 && after.abs() < 0.3 * before, "{before} -> {after}");
    assert!(w.path("c-view.png").exists());

    w.ok(&["metrics", "--image", "c.raw", "--profile=-20,0,20,0", "--samples", "41", "--profile-out", "p.csv", "-o", "m.json"]);
    let profile = std::fs::read_to_string(w.path("p.csv")).unwrap();
    assert_eq!(profile.lines().count(), 42);
}

#[test]
fn exit_status_separates_usage_and_numeric_failures() {
    let w = Work::new();
    assert_eq!(exit_code(&w.run(&["simulate", "--no-such-flag"], None)), 2);
    assert_eq!(exit_code(&w.run(&["phantom", "--builtin", "nope", "-o", "x.raw"], None)), 2);
    assert_eq!(exit_code(&w.run(&["phantom", "--list"], Some("zero"))), 2);

    w.phantom("al_disc", "lab.raw");
    // outside the attenuation tables: a numeric failure
    let out = w.run(&args(&["simulate", "--volume", "lab.raw", "--mode", "mono", "--energy-kev", "5000", "-o", "s.raw"], &[&SCAN]), None);
    assert_eq!(exit_code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    w.ok(&args(&["simulate", "--volume", "lab.raw", "-o", "s.raw"], &[&SCAN, &TUBE]));
    w.ok(&args(&["lut", "--setting", "bench", "-o", "lut.csv"], &[&SCAN, &TUBE]));
    let mismatch = w.run(&["correct", "--sinogram", "s.raw", "--lut", "lut.csv", "--setting", "other", "-o", "c.raw"], None);
    assert_eq!(exit_code(&mismatch), 2);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("other"));

    let clash = w.run(&["correct", "--sinogram", "s.raw", "--lut", "lut.csv", "--setting", "bench", "--png", "c.png", "-o", "c.raw"], None);
    assert_eq!(exit_code(&clash), 2);
    assert!(!w.path("c.raw").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let w = Work::new();
    w.phantom("al_disc", "lab.raw");
    w.ok(&args(&["simulate", "--volume", "lab.raw", "-o", "s.raw"], &[&SCAN, &TUBE]));
    w.ok(&args(&["lut", "--setting", "bench", "-o", "lut.csv"], &[&SCAN, &TUBE]));
    let grid = bhc_core::geometry::Grid::centered(128, 128, 0.5).unwrap();
    let mut cfg = bhc_core::correction::pipeline::PipelineConfig::new("stale", grid);
    cfg.n_classes = 2;
    io::write_text(w.path("cfg.json"), &serde_json::to_string(&cfg).unwrap()).unwrap();
    // the file alone names the wrong setting
    let out = w.run(&["correct", "--sinogram", "s.raw", "--lut", "lut.csv", "--config", "cfg.json", "-o", "c.raw"], None);
    assert_eq!(exit_code(&out), 2);
    w.ok(&args(
        &["correct", "--sinogram", "s.raw", "--lut", "lut.csv", "--config", "cfg.json", "--setting", "bench"],
        &[&TUBE, &["--force", "aluminum", "--report", "r.json", "-o", "c.raw"]],
    ));
    let report: serde_json::Value = serde_json::from_slice(&w.bytes("r.json")).unwrap();
    assert_eq!(report["setting_id"], "bench");
    assert_eq!(report["passes"][0]["classes"][0]["material"], "aluminum");
}
