use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pccorrupt"));
    c.env_remove("PC_CORRUPT_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, per_class: usize) {
    ok(bin().args(["synth", "--per-class", &per_class.to_string(), "--seed", "4", "--output"]).arg(dir));
}

#[test]
fn end_to_end_smoke() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    let out = t.path().join("out");
    synth(&input, 2);
    ok(bin()
        .args(["gen", "--kinds", "gaussian,cutout,rotation,occlusion", "--severities", "1,5", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&out));
    let model = t.path().join("m.tpn");
    let stdout = ok(bin()
        .args(["train", "--epochs", "2", "--batch-size", "4", "--points", "128", "--manifest"])
        .arg(&out)
        .arg("--output")
        .arg(&model));
    assert!(stdout.contains("trained 2 epochs"));
    assert!(t.path().join("m.history.json").exists());
    let preds = t.path().join("p.csv");
    for adapt in ["none", "bn"] {
        ok(bin()
            .args(["eval", "--batch-size", "4", "--adapt", adapt, "--checkpoint"])
            .arg(&model)
            .arg("--manifest")
            .arg(&out)
            .arg("--output")
            .arg(&preds));
    }
    let csv = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8 + 8 * 4 * 2);
    let report = t.path().join("r.md");
    let stdout = ok(bin()
        .args(["bench", "--format", "markdown", "--predictions"])
        .arg(&preds)
        .arg("--manifest")
        .arg(&out)
        .arg("--report")
        .arg(&report));
    assert!(stdout.contains("4 of 15 corruptions present"));
    assert!(std::fs::read_to_string(&report).unwrap().contains("**ER_cor**"));
    let stdout = ok(bin()
        .args(["attack", "--steps", "2", "--checkpoint"])
        .arg(&model)
        .arg("--manifest")
        .arg(&out)
        .arg("--output")
        .arg(t.path().join("adv")));
    assert!(stdout.contains("PGD on 8 samples"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("adv/attack_summary.json")).unwrap()).unwrap();
    for e in summary["entries"].as_array().unwrap() {
        assert!(e["linf"].as_f64().unwrap() <= 0.05);
    }
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(bin().arg("nonsense")).status.code(), Some(1));
    assert_eq!(run(bin().args(["gen", "--points", "many"])).status.code(), Some(1));
    assert_eq!(run(bin().args(["gen", "--input", "x"])).status.code(), Some(1));
    assert_eq!(run(bin().arg("--help")).status.code(), Some(0));
    let missing = run(bin().args(["gen", "--input"]).arg(t.path().join("absent")).arg("--output").arg(t.path().join("o")));
    assert_eq!(missing.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    let first = stderr.lines().next().unwrap();
    let log: serde_json::Value = serde_json::from_str(first).expect("JSON log line");
    assert_eq!(log["level"], "info");

    let input = t.path().join("in");
    synth(&input, 1);
    std::fs::write(input.join("cube/broken.off"), "OFF\n3 1 0\n0 0 0\n").unwrap();
    let partial = run(bin().args(["gen", "--kinds", "uniform", "--input"]).arg(&input).arg("--output").arg(t.path().join("o")));
    assert_eq!(partial.status.code(), Some(3));
    assert!(t.path().join("o/manifest.json").exists());
}

#[test]
fn cloud_only_input_fails_fast_for_view_kinds() {
    let t = tempfile::tempdir().unwrap();
    let mesh = t.path().join("m");
    synth(&mesh, 1);
    let input = t.path().join("in/cube");
    std::fs::create_dir_all(&input).unwrap();
    ok(bin().arg("export").arg("--input").arg(mesh.join("cube/cube_0000.off")).arg("--output").arg(input.join("c.ply")));
    let all = run(bin().arg("gen").arg("--input").arg(t.path().join("in")).arg("--output").arg(t.path().join("o")));
    assert_eq!(all.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&all.stderr);
    assert!(stderr.contains("occlusion and lidar"), "{stderr}");
    ok(bin()
        .args(["gen", "--kinds", "gaussian,cutout", "--input"])
        .arg(t.path().join("in"))
        .arg("--output")
        .arg(t.path().join("o")));
}

#[test]
fn gen_is_reproducible_across_workers_and_config_sources() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    synth(&input, 1);
    let config = t.path().join("run.json");
    let json = serde_json::json!({ "input": input, "kinds": ["ffd", "background", "lidar"], "severities": [3], "points": 512, "seed": 99, "workers": 1 });
    std::fs::write(&config, json.to_string()).unwrap();
    ok(bin().arg("gen").arg("--config").arg(&config).arg("--output").arg(t.path().join("a")));
    ok(bin().args(["gen", "--workers", "4"]).arg("--config").arg(&config).arg("--output").arg(t.path().join("b")));
    ok(bin()
        .args(["gen", "--kinds", "ffd,background,lidar", "--severities", "3", "--points", "512", "--workers", "2"])
        .env("PC_CORRUPT_SEED", "99")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(t.path().join("c")));
    ok(bin().arg("gen").arg("--config").arg(&config).args(["--seed", "100"]).arg("--output").arg(t.path().join("d")));
    let read = |d: &str, f: &str| std::fs::read(t.path().join(d).join(f)).unwrap();
    let file = "ffd/3/sphere/sphere_0000.ply";
    assert_eq!(read("a", "manifest.json"), read("b", "manifest.json"));
    assert_eq!(read("a", "manifest.json"), read("c", "manifest.json"));
    assert_eq!(read("a", file), read("c", file));
    assert_ne!(read("a", file), read("d", file));
}

#[test]
fn apply_and_export_single_files() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), 1);
    let mesh = t.path().join("pyramid/pyramid_0000.off");
    let out = t.path().join("x/cut.ply");
    let stdout = ok(bin()
        .args(["apply", "--kind", "cutout", "--severity", "3", "--input"])
        .arg(&mesh)
        .arg("--output")
        .arg(&out));
    assert!(stdout.contains("1024 -> 874 points"), "{stdout}");
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.path().join("x/cut.json")).unwrap()).unwrap();
    assert_eq!(prov["output_points"], 874);
    let raw = t.path().join("x/cut.bin");
    ok(bin().arg("export").arg("--input").arg(&out).arg("--output").arg(&raw));
    assert_eq!(std::fs::metadata(&raw).unwrap().len(), 874 * 12);
    let back = t.path().join("x/back.ply");
    ok(bin().args(["export", "--encoding", "binary", "--input"]).arg(&raw).arg("--output").arg(&back));
    assert_eq!(std::fs::read(&back).unwrap(), std::fs::read(&out).unwrap());
    assert_eq!(
        run(bin().args(["apply", "--kind", "fog", "--severity", "1", "--input"]).arg(&mesh).arg("--output").arg(&out))
            .status
            .code(),
        Some(1)
    );
}
