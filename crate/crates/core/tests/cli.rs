use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hwdemand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwdemand"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = hwdemand(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "preprocess", "matrix", "calendar", "all"] {
        assert!(text.contains(cmd), "missing {cmd} in\n{text}");
    }
}

#[test]
fn invalid_config_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = hwdemand(&["all", "--out", path_arg(&out_dir), "--set", "epochs=-1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error: invalid configuration"), "{err}");
    assert!(!out_dir.exists());

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "epochz = 3\n").unwrap();
    let out = hwdemand(&["synth", "--config", path_arg(&cfg), "--out", path_arg(&out_dir)]);
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn synth_then_skip_then_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 3\nsynth_train_days = 1\nsynth_test_days = 1\n").unwrap();
    let args = ["synth", "--config", path_arg(&cfg), "--out", path_arg(&out_dir)];

    let first = hwdemand(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(String::from_utf8_lossy(&first.stdout).contains("done"));
    let csvs = fs::read_dir(out_dir.join("synth"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 6);
    let hh1 = fs::read(out_dir.join("synth/hh1.csv")).unwrap();

    let second = hwdemand(&args);
    assert!(String::from_utf8_lossy(&second.stdout).contains("skipped"));

    let mut forced = args.to_vec();
    forced.push("--force");
    let third = hwdemand(&forced);
    assert!(String::from_utf8_lossy(&third.stdout).contains("done"));
    assert_eq!(fs::read(out_dir.join("synth/hh1.csv")).unwrap(), hh1);
}

fn irregular_csv(offset: f64, spike_at: Option<usize>) -> String {
    let mut text = String::from("timestamp,t_mid\n");
    let mut t = 0i64;
    for i in 0..300 {
        // Irregular 20–100 s spacing.
        t += 20 + (i as i64 * 37) % 81;
        let value = if Some(i) == spike_at { 250.0 } else { offset + (i as f64 * 0.1).sin() };
        let ts = hwdemand::timeseries::format_timestamp(1_704_067_200 + t);
        writeln!(text, "{ts},{value}").unwrap();
    }
    text
}

#[test]
fn preprocess_reads_input_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    fs::create_dir(&input).unwrap();
    fs::write(input.join("flat_a.csv"), irregular_csv(45.0, Some(100))).unwrap();
    fs::write(input.join("flat_b.csv"), irregular_csv(50.0, None)).unwrap();
    fs::write(input.join("notes.txt"), "ignored").unwrap();
    let out_dir = tmp.path().join("out");

    let out = hwdemand(&[
        "preprocess",
        "--out",
        path_arg(&out_dir),
        "--set",
        &format!("input_dir=\"{}\"", input.display()),
        "--set",
        "split_time=\"2024-01-01T03:00:00Z\"",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = out_dir.join("preprocess");
    let ids: Vec<String> = serde_json::from_str(&fs::read_to_string(dir.join("households.json")).unwrap()).unwrap();
    assert_eq!(ids, ["flat_a", "flat_b"]);
    let outliers: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("outliers.json")).unwrap()).unwrap();
    assert_eq!(outliers["flat_a"]["removed"].as_array().unwrap().len(), 1);
    assert!(outliers["flat_b"]["removed"].as_array().unwrap().is_empty());

    let households = hwdemand::pipeline::load_households(&out_dir).unwrap();
    for h in &households {
        assert_eq!(h.train.step_seconds(), 60);
        assert_eq!(h.test.start(), 1_704_067_200 + 3 * 3600);
        assert_eq!(h.train.end() + 60, h.test.start());
        assert!(h.train.values().iter().chain(h.test.values()).all(|v| *v < 100.0));
    }

    // Synthetic generation is refused when real inputs are configured.
    let out = hwdemand(&[
        "synth",
        "--out",
        path_arg(&out_dir),
        "--set",
        &format!("input_dir=\"{}\"", input.display()),
        "--set",
        "split_time=\"2024-01-01T03:00:00Z\"",
    ]);
    assert!(!out.status.success());
}
