use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fastedi"))
}

/// Runs the binary, returns (exit code, stdout parsed as JSON if any).
fn run(args: &[&str]) -> (i32, Option<Value>) {
    let out = bin().args(args).output().expect("binary runs");
    let code = out.status.code().expect("exit code");
    let json = serde_json::from_slice(&out.stdout).ok();
    (code, json)
}

fn ok(args: &[&str]) -> Value {
    let (code, json) = run(args);
    assert_eq!(code, 0, "{args:?}");
    json.expect("JSON report")
}

fn assert_schema(name: &str, report: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(
        errors.is_empty(),
        "{name} report violates schema: {errors:#?}\n{report:#}"
    );
}

fn synth(dir: &Path, extra: &[&str]) -> (PathBuf, Value) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out-dir", out];
    args.extend_from_slice(extra);
    let report = ok(&args);
    (dir.join("manifest.json"), report)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_defaults_write_a_complete_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, report) = synth(&tmp.path().join("ds"), &[]);
    assert_schema("synth", &report);
    assert!(manifest.exists());
    let frames = report["frames"].as_u64().unwrap();
    assert_eq!(frames, 10);
    for i in 0..frames {
        assert!(tmp.path().join(format!("ds/blur_{i:04}.pgm")).exists());
        assert!(tmp.path().join(format!("ds/gt_{i:04}.pgm")).exists());
    }
    assert_eq!(report["smear_px"].as_f64().unwrap(), 5.0);
    assert!(report["events"].as_u64().unwrap() > 0);
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, _) = synth(
        &tmp.path().join("a"),
        &["--width", "48", "--height", "16", "--duration", "0.2"],
    );
    let (b, _) = synth(
        &tmp.path().join("b"),
        &["--width", "48", "--height", "16", "--duration", "0.2"],
    );
    for name in ["events.txt", "blur_0000.pgm", "gt_0003.pgm"] {
        let pa = a.parent().unwrap().join(name);
        let pb = b.parent().unwrap().join(name);
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{name}");
    }
}

#[test]
fn static_scene_has_no_events_and_deblur_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, report) = synth(
        &tmp.path().join("ds"),
        &["--velocity", "0", "--width", "32", "--height", "24"],
    );
    assert_eq!(report["events"], 0);
    let text = std::fs::read_to_string(tmp.path().join("ds/events.txt")).unwrap();
    assert!(text.lines().all(|l| l.starts_with('#')), "{text}");

    let out = tmp.path().join("out");
    let report = ok(&["deblur", "--manifest", s(&manifest), "--out-dir", s(&out)]);
    assert_schema("deblur", &report);
    for i in 0..report["frames"].as_array().unwrap().len() {
        let blur = std::fs::read(tmp.path().join(format!("ds/blur_{i:04}.pgm"))).unwrap();
        let deblurred = std::fs::read(out.join(format!("deblur_{i:04}.pgm"))).unwrap();
        assert_eq!(blur, deblurred);
    }
}

#[test]
fn deblur_improves_quality_and_matches_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(&tmp.path().join("ds"), &["--height", "24"]);
    for engine in ["fast", "baseline"] {
        for mode in ["time", "count"] {
            let report = ok(&[
                "deblur",
                "--manifest",
                s(&manifest),
                "--engine",
                engine,
                "--mode",
                mode,
                "--check-oracle",
            ]);
            assert_schema("deblur", &report);
            assert!(report["max_rel_edi_diff"].as_f64().unwrap() <= 1e-9);
            assert_eq!(report["mode"], mode);
            if mode == "time" {
                assert!(report["psnr_gain"].as_f64().unwrap() >= 3.0, "{engine}");
            }
        }
    }
    let capped = ok(&[
        "deblur",
        "--manifest",
        s(&manifest),
        "--list-cap",
        "2",
        "--check-oracle",
    ]);
    assert!(capped["max_rel_edi_diff"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn reconstruct_at_t_start_equals_deblurred_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(
        &tmp.path().join("ds"),
        &["--width", "40", "--height", "16", "--duration", "0.2"],
    );
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    let t_start = m["frames"][1]["t_start_us"].as_i64().unwrap();
    let t_end = m["frames"][1]["t_end_us"].as_i64().unwrap();

    let deblurred = tmp.path().join("deblurred");
    ok(&["deblur", "--manifest", s(&manifest), "--out-dir", s(&deblurred)]);
    let latent = tmp.path().join("latent");
    let stamps = format!("{t_start},{},{t_end},{}", (t_start + t_end) / 2, t_end + 10_000);
    let report = ok(&[
        "reconstruct",
        "--manifest",
        s(&manifest),
        "--frame-index",
        "1",
        "--timestamps",
        &stamps,
        "--out-dir",
        s(&latent),
    ]);
    assert_schema("reconstruct", &report);
    assert_eq!(report["latents"].as_array().unwrap().len(), 4);
    assert_eq!(
        std::fs::read(latent.join("latent_0000.pgm")).unwrap(),
        std::fs::read(deblurred.join("deblur_0001.pgm")).unwrap()
    );
}

#[test]
fn reconstruct_rejects_timestamps_before_exposure() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(
        &tmp.path().join("ds"),
        &["--width", "16", "--height", "8", "--duration", "0.2"],
    );
    let out = tmp.path().join("latent");
    let (code, _) = run(&[
        "reconstruct",
        "--manifest",
        s(&manifest),
        "--frame-index",
        "1",
        "--timestamps",
        "10",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 2);
    let (code, _) = run(&[
        "reconstruct",
        "--manifest",
        s(&manifest),
        "--frame-index",
        "99",
        "--timestamps",
        "10",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn bench_reports_and_gates() {
    let small = [
        "bench", "--width", "32", "--height", "24", "--events", "20000", "--repeat", "2",
    ];
    let mut args = small.to_vec();
    args.extend(["--min-ev-per-sec", "0", "--min-speedup", "0"]);
    let report = ok(&args);
    assert_schema("bench", &report);
    assert_eq!(report["passed"], true);
    assert_eq!(report["reference_speedup"], 260.0);
    assert!(report["speedup"]["speedup"].as_f64().unwrap() > 0.0);

    let mut args = small.to_vec();
    args.extend(["--engine", "fast", "--min-ev-per-sec", "1e15"]);
    let (code, report) = run(&args);
    assert_eq!(code, 3);
    let report = report.expect("report on threshold failure");
    assert_schema("bench", &report);
    assert_eq!(report["passed"], false);
    assert!(report["baseline"].is_null());
}

#[test]
fn bench_on_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(
        &tmp.path().join("ds"),
        &["--width", "32", "--height", "16", "--duration", "0.2"],
    );
    let report = ok(&[
        "bench",
        "--manifest",
        s(&manifest),
        "--repeat",
        "1",
        "--min-ev-per-sec",
        "0",
        "--min-speedup",
        "0",
    ]);
    assert_schema("bench", &report);
    assert_eq!(report["workload"]["frames"], 4);
}

#[test]
fn stream_sim_keeps_up_and_reports_overload() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = synth(
        &tmp.path().join("ds"),
        &["--width", "64", "--height", "32", "--duration", "0.2"],
    );
    let report = ok(&["stream-sim", "--manifest", s(&manifest)]);
    assert_schema("stream_sim", &report);
    assert_eq!(report["dropped_frames"], 0);
    assert_eq!(report["frames_completed"], 4);
    assert_eq!(report["jammed"], false);

    let (code, report) = run(&[
        "stream-sim",
        "--manifest",
        s(&manifest),
        "--rate-multiplier",
        "1000",
        "--queue-cap",
        "1",
    ]);
    assert_eq!(code, 3);
    let report = report.unwrap();
    assert_schema("stream_sim", &report);
    assert!(report["dropped_frames"].as_u64().unwrap() > 0);
    assert_eq!(report["jammed"], true);
}

#[test]
fn contrast_from_currents_ratios_and_manifest() {
    let r = ok(&[
        "contrast",
        "--id",
        "1e-9",
        "--ion",
        "2.718281828459045e-9",
        "--ioff",
        "3.678794411714423e-10",
    ]);
    assert_schema("contrast", &r);
    assert!((r["c_on"].as_f64().unwrap() - 6.0 / 91.0).abs() < 1e-12);
    assert!((r["c_off"].as_f64().unwrap() + 6.0 / 91.0).abs() < 1e-12);
    assert!((r["prefactor"].as_f64().unwrap() - 6.0 / 91.0).abs() < 1e-15);

    let r = ok(&[
        "contrast",
        "--on-ratio",
        "7.38905609893065",
        "--off-ratio",
        "0.1353352832366127",
    ]);
    assert_schema("contrast", &r);
    assert!((r["c_on"].as_f64().unwrap() - 0.1318681).abs() < 1e-7);

    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"geometry": {"width": 2, "height": 1}, "event_file": "events.txt", "frames": [],
            "hardware": {"kappa_n": 0.7, "kappa_p": 0.7, "cap_c1": 130, "cap_c2": 6,
                         "i_d": 1e-9, "i_on": 2.718281828459045e-9, "i_off": 3.678794411714423e-10}}"#,
    )
    .unwrap();
    let r = ok(&["contrast", "--manifest", s(&manifest)]);
    assert_schema("contrast", &r);
    assert_eq!(r["source"], "manifest_hardware");
    assert!((r["c_on"].as_f64().unwrap() - 6.0 / 91.0).abs() < 1e-12);

    assert_eq!(run(&["contrast"]).0, 1);
    assert_eq!(
        run(&["contrast", "--id", "1e-9", "--ion", "1e-10", "--ioff", "1e-11"]).0,
        2
    );
}

#[test]
fn exit_codes_and_report_file() {
    assert_eq!(run(&["bogus"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["--version"]).0, 0);
    assert_eq!(run(&["synth", "--pattern", "spiral"]).0, 1);
    assert_eq!(run(&["synth", "--width", "0"]).0, 1);
    assert_eq!(run(&["deblur", "--manifest", "/nonexistent/manifest.json"]).0, 2);
    assert_eq!(run(&["deblur", "--manifest", "m.json", "--engine", "turbo"]).0, 1);

    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.json");
    let (code, stdout) = run(&["--out", s(&report), "contrast", "--on-ratio", "2", "--off-ratio", "0.5"]);
    assert_eq!(code, 0);
    assert!(stdout.is_none());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_schema("contrast", &written);
}

#[test]
fn malformed_manifest_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"geometry": {"width": 2, "height": 1}, "event_file": "e.txt", "frames": [], "typo": 1}"#,
    )
    .unwrap();
    assert_eq!(run(&["deblur", "--manifest", s(&manifest)]).0, 2);
}
