//! End-to-end exercise of the binary: train -> eval -> plot -> compare,
//! plus byte-identical re-runs of every command.

use std::path::Path;
use std::process::Command;

fn pcdgan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcdgan"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn pcdgan");
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(out.status.success(), "command failed.\nstdout:\n{stdout}\nstderr:\n{stderr}");
    stdout
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn full_pipeline_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("runs");
    let common = [
        "--steps",
        "60",
        "--set",
        "data_points=800",
        "--set",
        "log_every=10",
        "--set",
        "eval_conditions=3",
        "--set",
        "eval_repeats=1",
        "--set",
        "eval_samples=80",
        "--out",
    ];

    // Train both models.
    for model in ["pcdgan", "ccgan"] {
        let mut cmd = pcdgan();
        cmd.args(["train", "--example", "2", "--model", model, "--seed", "3"]);
        cmd.args(common.iter().map(|s| s.to_string()));
        cmd.arg(&root);
        let stdout = run_ok(&mut cmd);
        assert!(stdout.contains("checkpoint"), "{stdout}");
    }
    let run_p = root.join("ex2-pcdgan-s3");
    let run_c = root.join("ex2-ccgan-s3");
    assert!(run_p.join("checkpoint_final.txt").exists());
    assert!(run_p.join("train_log.csv").exists());
    assert!(run_p.join("dataset.csv").exists());

    // Re-train into a second root: byte-identical artifacts.
    let root2 = dir.path().join("runs2");
    let mut cmd = pcdgan();
    cmd.args(["train", "--example", "2", "--model", "pcdgan", "--seed", "3"]);
    cmd.args(common.iter().map(|s| s.to_string()));
    cmd.arg(&root2);
    run_ok(&mut cmd);
    for name in ["train_log.csv", "dataset.csv", "checkpoint_final.txt", "config.txt"] {
        assert_eq!(
            read(&run_p.join(name)),
            read(&root2.join("ex2-pcdgan-s3").join(name)),
            "{name} differs across identical train invocations"
        );
    }

    // Evaluate both runs; re-run evaluation must be byte-identical.
    for run in [&run_p, &run_c] {
        let ckpt = run.join("checkpoint_final.txt");
        run_ok(pcdgan().args([
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--conditions",
            "3",
            "--repeats",
            "1",
            "--samples",
            "80",
        ]));
    }
    let report_before = read(&run_p.join("eval_report.csv"));
    run_ok(pcdgan().args([
        "eval",
        "--checkpoint",
        run_p.join("checkpoint_final.txt").to_str().unwrap(),
        "--conditions",
        "3",
        "--repeats",
        "1",
        "--samples",
        "80",
    ]));
    assert_eq!(report_before, read(&run_p.join("eval_report.csv")));

    // Plot: per-run scatter plus cross-run metric curves.
    let plots = dir.path().join("plots");
    run_ok(pcdgan().args([
        "plot",
        "--runs",
        run_p.to_str().unwrap(),
        run_c.to_str().unwrap(),
        "--condition",
        "0.4",
        "--samples",
        "120",
        "--out",
        plots.to_str().unwrap(),
    ]));
    for name in ["label_error.svg", "likelihood.svg", "diversity.svg"] {
        assert!(plots.join(name).exists(), "missing {name}");
    }
    assert!(run_p.join("scatter_c0.4.svg").exists());

    // Compare: one table row per (example, model).
    let table = dir.path().join("compare.csv");
    run_ok(pcdgan().args([
        "compare",
        "--runs",
        run_p.to_str().unwrap(),
        run_c.to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().any(|l| l.starts_with("2,pcdgan,1,")));
    assert!(text.lines().any(|l| l.starts_with("2,ccgan,1,")));
}

#[test]
fn train_from_config_file_with_cli_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "# smoke\nexample = 1\nmodel = ccgan\nseed = 11\nsteps = 40\ndata_points = 500\nlog_every = 20\n",
    )
    .unwrap();
    let root = dir.path().join("runs");
    run_ok(pcdgan().args([
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--steps",
        "25",
        "--out",
        root.to_str().unwrap(),
    ]));
    let config_echo = std::fs::read_to_string(root.join("ex1-ccgan-s11/config.txt")).unwrap();
    assert!(config_echo.contains("steps=25"), "CLI override lost:\n{config_echo}");
    assert!(config_echo.contains("diversity_weight=0"));
}

#[test]
fn eval_missing_checkpoint_fails_cleanly() {
    let out = pcdgan()
        .args(["eval", "--checkpoint", "/nonexistent/ckpt.txt"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checkpoint"), "{stderr}");
}
