//! End-to-end workflows through the `fwiprune` binary: synth -> train ->
//! compress -> cost -> bench -> eval -> sweep, plus reproducibility and
//! failure-path contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fwiprune"))
}

fn ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_synth_config(dir: &Path, count: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "task": {
            "seed": 11,
            "map_height": 16,
            "map_width": 16,
            "min_layers": 2,
            "max_layers": 4,
            "velocity_range": [1500.0, 4500.0],
            "channels": 3,
            "time_steps": 64,
            "receivers": 16,
            "noise_amp": 0.02,
            "max_tilt": 0.3
        },
        "count": count,
        "splits": { "train": 0.6, "val": 0.2, "test": 0.2 }
    });
    let path = dir.join("synth.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn synth(dir: &Path, out: &str, count: usize) -> PathBuf {
    let cfg = write_synth_config(dir, count);
    let data = dir.join(out);
    ok(&bin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&data).output().unwrap());
    data
}

fn train(dir: &Path, data: &Path, name: &str, epochs: &str) -> PathBuf {
    let ckpt = dir.join(name);
    ok(&bin()
        .args(["train", "--arch", "tiny", "--epochs", epochs, "--seed", "3", "--data"])
        .arg(data)
        .arg("--out")
        .arg(&ckpt)
        .output()
        .unwrap());
    ckpt
}

#[test]
fn full_workflow_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // --- synth: three splits with declared counts, manifest present
    let data = synth(dir, "data", 60);
    for split in ["train", "val", "test"] {
        assert!(data.join(split).join("inputs.npy").exists());
        assert!(data.join(split).join("maps.npy").exists());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["command"], "synth");

    // --- synth reproducibility: same seed, byte-identical primary outputs
    let data2 = synth(dir, "data2", 60);
    for split in ["train", "val", "test"] {
        for file in ["inputs.npy", "maps.npy"] {
            let a = std::fs::read(data.join(split).join(file)).unwrap();
            let b = std::fs::read(data2.join(split).join(file)).unwrap();
            assert_eq!(a, b, "{split}/{file} differs between identical synth runs");
        }
    }

    // --- train: checkpoint + loss curve + val summary
    let ckpt = train(dir, &data, "model.ckpt", "3");
    assert!(ckpt.exists());
    assert!(dir.join("model.curve.csv").exists());
    let curve = std::fs::read_to_string(dir.join("model.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4, "header + 3 epochs");

    // --- train reproducibility: byte-identical checkpoints
    let ckpt2 = train(dir, &data, "model2.ckpt", "3");
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&ckpt2).unwrap());

    // --- eval: loss_mae (validation loop) must equal mae (metrics path)
    let out = ok(&bin()
        .args(["eval", "--split", "val", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap())
    .stdout
    .clone();
    let eval: serde_json::Value = serde_json::from_slice(&out).unwrap();
    let mae = eval["mae"].as_f64().unwrap();
    let loss = eval["loss_mae"].as_f64().unwrap();
    assert!((mae - loss).abs() < 1e-9, "independent MAE paths disagree: {mae} vs {loss}");
    let ssim = eval["ssim"].as_f64().unwrap();
    assert!((eval["one_minus_ssim"].as_f64().unwrap() - (1.0 - ssim)).abs() < 1e-12);

    // --- compress at R=0: widths unchanged
    let c0 = dir.join("c0");
    ok(&bin()
        .args(["compress", "--ratio", "0.0", "--iters", "1", "--epochs", "1", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&c0)
        .output()
        .unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c0.join("report.json")).unwrap()).unwrap();
    let widths: Vec<u64> = report["iterations"][0]["layer_widths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(widths, vec![8, 16, 32, 16, 8, 1]);
    let branch = report["branch"].as_str().unwrap();
    assert!(branch == "finetuned" || branch == "retrained");

    // --- compress at R=0.5, N=1: every prunable width halves
    let c1 = dir.join("c1");
    ok(&bin()
        .args(["compress", "--ratio", "0.5", "--iters", "1", "--epochs", "2", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&c1)
        .output()
        .unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c1.join("report.json")).unwrap()).unwrap();
    let widths: Vec<u64> = report["iterations"][0]["layer_widths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(widths, vec![4, 8, 16, 8, 4, 1]);
    assert!(c1.join("plan_iter_1.json").exists());
    let pruned_ckpt = c1.join("pruned.ckpt");
    assert!(pruned_ckpt.exists());

    // --- cost: self-comparison reduces 0%, pruned-vs-baseline reduces > 0%
    let out = ok(&bin()
        .args(["cost", "--checkpoint"])
        .arg(&ckpt)
        .arg("--baseline")
        .arg(&ckpt)
        .output()
        .unwrap())
    .stdout
    .clone();
    let text = String::from_utf8(out).unwrap();
    let json_line = text.lines().last().unwrap();
    let cost: serde_json::Value = serde_json::from_str(json_line).unwrap();
    assert_eq!(cost["reduction"]["params_pct"].as_f64().unwrap(), 0.0);
    assert_eq!(cost["total_params"].as_u64().unwrap(), 16_483);

    let cost_dir = dir.join("cost");
    let out = ok(&bin()
        .args(["cost", "--checkpoint"])
        .arg(&pruned_ckpt)
        .arg("--baseline")
        .arg(&ckpt)
        .arg("--out")
        .arg(&cost_dir)
        .output()
        .unwrap())
    .stdout
    .clone();
    let text = String::from_utf8(out).unwrap();
    let cost: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert!(cost["reduction"]["params_pct"].as_f64().unwrap() > 50.0);
    assert!(cost_dir.join("cost.csv").exists());
    assert!(cost_dir.join("manifest.json").exists());

    // --- bench: runs=1 has zero std; manifest echoes the run count
    let bench_dir = dir.join("bench");
    let out = ok(&bin()
        .args(["bench", "--runs", "1", "--warmup", "0", "--checkpoint"])
        .arg(&ckpt)
        .arg("--out")
        .arg(&bench_dir)
        .output()
        .unwrap())
    .stdout
    .clone();
    let text = String::from_utf8(out).unwrap();
    let stats: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(stats["std_ms"].as_f64().unwrap(), 0.0);
    assert_eq!(stats["runs"].as_u64().unwrap(), 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bench_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["runs"].as_u64().unwrap(), 1);

    // --- sweep: one row per cell, params strictly decreasing in R
    let sweep_dir = dir.join("sweep");
    ok(&bin()
        .args(["sweep", "--ratios", "0.25,0.5", "--iters", "1", "--epochs", "1", "--bench-runs", "1", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&sweep_dir)
        .output()
        .unwrap());
    let csv = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "one row per (ratio, iters) cell: {csv}");
    let params: Vec<u64> = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(params[1] < params[0], "params must fall as R rises: {params:?}");
    assert!(rows.iter().all(|r| r.contains(",ok,")));
    assert!(sweep_dir.join("cells/r0.50_n1/report.json").exists());
}

#[test]
fn failure_paths_exit_nonzero_and_record_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // split fractions that do not sum to one are a config error
    let bad = serde_json::json!({
        "task": { "seed": 1, "map_height": 16, "map_width": 16, "min_layers": 2, "max_layers": 4,
                   "velocity_range": [1500.0, 4500.0], "channels": 3, "time_steps": 64,
                   "receivers": 16, "noise_amp": 0.02, "max_tilt": 0.3 },
        "count": 30,
        "splits": { "train": 0.5, "val": 0.2, "test": 0.2 }
    });
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, serde_json::to_string(&bad).unwrap()).unwrap();
    let out_dir = dir.join("bad-out");
    let out = bin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert!(!out.status.success(), "bad split fractions must fail");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert!(manifest["error"].as_str().unwrap().contains("sum to 1"));

    // invalid ratio rejected with usage-style error before any training
    let data = synth(dir, "data", 30);
    let ckpt = train(dir, &data, "m.ckpt", "1");
    let out = bin()
        .args(["compress", "--ratio", "1.5", "--iters", "1", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.join("cx"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ratio"), "{stderr}");

    // missing checkpoint fails cleanly
    let out = bin().args(["cost", "--checkpoint", "/nonexistent.ckpt"]).output().unwrap();
    assert!(!out.status.success());

    // arch/data incompatibility reported before training starts
    let out = bin()
        .args(["train", "--arch", "default", "--epochs", "1", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.join("x.ckpt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("incompatible"), "{stderr}");
}

#[test]
fn parallel_sweep_runs_all_cells_without_latency() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = synth(dir, "data", 30);
    let ckpt = train(dir, &data, "m.ckpt", "1");
    let sweep_dir = dir.join("psweep");
    ok(&bin()
        .args(["sweep", "--parallel", "--ratios", "0.2,0.4", "--iters", "1,2", "--epochs", "1", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&sweep_dir)
        .output()
        .unwrap());
    let csv = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    // parallel mode leaves the latency column empty
    for r in &rows {
        let latency = r.split(',').nth(4).unwrap();
        assert!(latency.is_empty(), "latency should be blank in parallel sweeps: {r}");
    }
}
