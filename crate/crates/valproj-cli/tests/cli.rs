//! End-to-end tests of the valproj binary: exit codes, on-disk outputs,
//! and the determinism contract.

use std::path::Path;
use std::process::{Command, Output};

use valproj::data::shepp_logan;
use valproj::io::read_pmvec;
use valproj::operator::LinearOperator;
use valproj::vnpa::make_dataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_valproj"));
    cmd.env_remove("VALPROJ_SEED");
    cmd
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn valproj");
    assert!(
        out.status.success(),
        "valproj {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const PM_SMOKE: &str = r#"
[instance]
kind = "radon"
side = 64
angles = 12
noise_pct = 0.10
seeds = [7]

[solver]
max_iters = 5
"#;

/// Masks the wall_seconds column, the only field allowed to differ
/// between reruns.
fn mask_wall(csv: &str) -> String {
    csv.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                line.to_string()
            } else {
                let mut fields: Vec<&str> = line.split(',').collect();
                if fields.len() > 1 {
                    fields[1] = "*";
                }
                fields.join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn pm_run_writes_outputs_and_final_iterate_is_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "pm.toml", PM_SMOKE);
    let out_dir = tmp.path().join("out");
    let out = run_ok(&["pm", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("pm p=0.1 s=7") && stdout.contains("psnr="),
        "summary line missing: {stdout}"
    );

    let run_dir = out_dir.join("run-p0.1-s7");
    let trace = std::fs::read_to_string(run_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,wall_seconds,psnr,ssim,rel_meas_err,mu,outer_iters,residual_gap"
    );
    assert_eq!(lines.count(), 5, "one record per iteration");
    assert!(run_dir.join("final.pgm").exists());
    assert!(run_dir.join("best_psnr.pmvec").exists());
    assert!(run_dir.join("best_ssim.pmvec").exists());

    // Re-verify validity from scratch: the measurement file plus the
    // reconstructed operator must accept the final iterate.
    let a = LinearOperator::radon_sparse(64, 12).unwrap();
    let y_clean = a.apply(&shepp_logan(64).pixels).unwrap();
    let y_delta = read_pmvec(&run_dir.join("measurement.pmvec")).unwrap();
    let delta = 0.10 * y_clean.norm();
    let noise_norm = y_delta.sub(&y_clean).norm();
    assert!(
        (noise_norm - delta).abs() <= 1e-9 * delta,
        "noise was drawn at exactly the stated level: {noise_norm} vs {delta}"
    );
    let x_final = read_pmvec(&run_dir.join("final.pmvec")).unwrap();
    let residual = a.apply(&x_final).unwrap().sub(&y_delta).norm();
    assert!(
        residual <= delta * (1.0 + 2e-2),
        "final iterate violates the measurement constraint: {residual} vs {delta}"
    );
}

#[test]
fn reruns_are_byte_identical_up_to_wall_clock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "pm.toml", PM_SMOKE);
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    run_ok(&["pm", "--config", &cfg, "--out", out1.to_str().unwrap()]);
    run_ok(&["pm", "--config", &cfg, "--out", out2.to_str().unwrap()]);

    for name in ["trace.csv"] {
        let t1 = std::fs::read_to_string(out1.join("run-p0.1-s7").join(name)).unwrap();
        let t2 = std::fs::read_to_string(out2.join("run-p0.1-s7").join(name)).unwrap();
        assert_eq!(mask_wall(&t1), mask_wall(&t2), "{name} differs between reruns");
    }
    for name in ["final.pmvec", "measurement.pmvec", "best_psnr.pmvec"] {
        let b1 = std::fs::read(out1.join("run-p0.1-s7").join(name)).unwrap();
        let b2 = std::fs::read(out2.join("run-p0.1-s7").join(name)).unwrap();
        assert_eq!(b1, b2, "{name} differs between reruns");
    }
}

#[test]
fn seed_env_var_overrides_config_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "pm.toml", PM_SMOKE);
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    run_ok(&["pm", "--config", &cfg, "--out", out1.to_str().unwrap()]);
    let out = bin()
        .env("VALPROJ_SEED", "99")
        .args(["pm", "--config", &cfg, "--out", out2.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let m1 = std::fs::read(out1.join("run-p0.1-s7").join("measurement.pmvec")).unwrap();
    let m2 = std::fs::read(out2.join("run-p0.1-s99").join("measurement.pmvec")).unwrap();
    assert_ne!(m1, m2, "different seed must draw different noise");

    let bad = bin()
        .env("VALPROJ_SEED", "not-a-number")
        .args(["pm", "--config", &cfg, "--out", tmp.path().join("c").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn invalid_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out_str = out_dir.to_str().unwrap();

    let malformed = write_config(tmp.path(), "bad.toml", "this is [ not toml");
    let out = bin()
        .args(["pm", "--config", &malformed, "--out", out_str])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "malformed TOML");
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));

    let unknown_key = write_config(
        tmp.path(),
        "unknown.toml",
        "[instance]\nkind = \"radon\"\nside = 64\nangles = 12\nnoise_pct = 0.1\nseeds = [7]\n\n[solver]\nbogus = 1\n",
    );
    let out = bin()
        .args(["pm", "--config", &unknown_key, "--out", out_str])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown key");

    let no_seeds = write_config(
        tmp.path(),
        "noseeds.toml",
        "[instance]\nkind = \"radon\"\nside = 64\nangles = 12\nnoise_pct = 0.1\nseeds = []\n",
    );
    let out = bin()
        .args(["pm", "--config", &no_seeds, "--out", out_str])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "empty seeds");

    let missing = tmp.path().join("does-not-exist.toml");
    let out = bin()
        .args(["pm", "--config", missing.to_str().unwrap(), "--out", out_str])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "missing config file");

    // red without a multiplier is a configuration error, not a numerical one
    let red_no_mu = write_config(tmp.path(), "red.toml", PM_SMOKE);
    let out = bin()
        .args(["red", "--config", &red_no_mu, "--out", out_str])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "red needs red_mu");
}

#[test]
fn numerical_failure_exits_3_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "starved.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pct = 0.10
seeds = [7]

[solver]
max_iters = 3

[projection]
rel_residual_tol = 1e-9
max_outer = 1
"#,
    );
    let out = bin()
        .args(["pm", "--config", &cfg, "--out", tmp.path().join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "starved projection budget");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("pm p=0.1 s=7"),
        "stage context missing from: {stderr}"
    );
}

#[test]
fn red_vs_pm_traces_align_by_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "rvp.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pct = 0.10
seeds = [3]

[solver]
max_iters = 4
red_mu = 0.05
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run_ok(&["red-vs-pm", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("red p=0.1 s=3") && stdout.contains("pm p=0.1 s=3"));

    let run_dir = out_dir.join("run-p0.1-s3");
    let iters = |name: &str| -> Vec<String> {
        std::fs::read_to_string(run_dir.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    assert_eq!(iters("trace_red.csv"), iters("trace_pm.csv"));
    assert!(run_dir.join("final_red.pmvec").exists());
    assert!(run_dir.join("final_pm.pmvec").exists());
}

#[test]
fn project_reports_multiplier_and_validity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "proj.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pct = 0.10
seeds = [5]
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run_ok(&["project", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mu=") && stdout.contains("inside=false"));
    assert!(out_dir.join("run-p0.1-s5").join("projected.pmvec").exists());
}

#[test]
fn vnpa_train_then_eval_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("out-train/run-p0.01-s3/checkpoint.vnpa");
    let train_cfg = write_config(
        tmp.path(),
        "train.toml",
        r#"
[instance]
kind = "gaussian"
rows = 16
cols = 128
noise_pct = 0.01
seeds = [3]

[vnpa]
n = 1
widths = [128, 16, 128]
batches = 3
batch_size = 2
train_count = 4
eval_count = 2
"#,
    );
    let out = run_ok(&[
        "vnpa-train",
        "--config",
        &train_cfg,
        "--out",
        tmp.path().join("out-train").to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("vnpa-train p=0.01 s=3"));
    assert!(ckpt.exists());
    let loss = std::fs::read_to_string(
        tmp.path().join("out-train/run-p0.01-s3/loss.csv"),
    )
    .unwrap();
    assert_eq!(loss.lines().next().unwrap(), "batch,loss");
    assert_eq!(loss.lines().count(), 4, "header plus one row per batch");

    let eval_cfg = write_config(
        tmp.path(),
        "eval.toml",
        &format!(
            r#"
[instance]
kind = "gaussian"
rows = 16
cols = 128
noise_pct = 0.01
seeds = [4]

[vnpa]
n = 1
widths = [128, 16, 128]
eval_count = 2
checkpoint = "{}"
"#,
            ckpt.display()
        ),
    );
    let out = run_ok(&[
        "vnpa-eval",
        "--config",
        &eval_cfg,
        "--out",
        tmp.path().join("out-eval").to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sample 00 rel_err="));
    assert!(stdout.contains("sample 01 rel_err="));
    assert!(stdout.contains("mean rel_err="));
    let eval_dir = tmp.path().join("out-eval/run-p0.01-s4");
    assert!(eval_dir.join("eval.csv").exists());

    // Re-verify validity from the PMVEC1 files: redraw the held-out
    // samples from the documented seed and check each reconstruction
    // against its measurement.
    let a = LinearOperator::gaussian_sensing(7, 16, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = make_dataset(&a, 0.01, 2, &mut rng).unwrap();
    for (i, s) in samples.iter().enumerate() {
        let recon = read_pmvec(&eval_dir.join(format!("recon_{i:02}.pmvec"))).unwrap();
        let residual = a.apply(&recon).unwrap().sub(&s.y_delta).norm();
        assert!(
            residual <= s.delta * (1.0 + 2e-2),
            "reconstruction {i} violates its measurement constraint: {residual} vs {}",
            s.delta
        );
    }

    // eval without a checkpoint is an input error
    let no_ckpt = write_config(
        tmp.path(),
        "eval-bad.toml",
        r#"
[instance]
kind = "gaussian"
rows = 16
cols = 128
noise_pct = 0.01
seeds = [4]
"#,
    );
    let out = bin()
        .args([
            "vnpa-eval",
            "--config",
            &no_ckpt,
            "--out",
            tmp.path().join("out-bad").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_summarizes_traces_and_rejects_malformed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "rvp.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pct = 0.10
seeds = [3]

[solver]
max_iters = 4
red_mu = 0.05
"#,
    );
    let out_dir = tmp.path().join("out");
    run_ok(&["red-vs-pm", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    let run_dir = out_dir.join("run-p0.1-s3");
    let red = run_dir.join("trace_red.csv");
    let pm = run_dir.join("trace_pm.csv");

    let table_dir = tmp.path().join("table");
    let out = run_ok(&[
        "compare",
        red.to_str().unwrap(),
        pm.to_str().unwrap(),
        "--out",
        table_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best-psnr") && stdout.contains("last"));

    let text = std::fs::read_to_string(table_dir.join("table.txt")).unwrap();
    assert_eq!(stdout, text, "stdout mirrors table.txt");
    let csv = std::fs::read_to_string(table_dir.join("table.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "trace,row,iter,psnr,ssim,rel_meas_err"
    );
    // three rows per trace: best-psnr, best-ssim, last
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(
        csv.lines().filter(|l| l.starts_with("trace_red,")).count(),
        3
    );

    let garbled = tmp.path().join("garbled.csv");
    std::fs::write(&garbled, "iter,psnr\n0,nope\n").unwrap();
    let out = bin()
        .args([
            "compare",
            garbled.to_str().unwrap(),
            "--out",
            table_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("garbled.csv"),
        "error names the offending file"
    );

    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = bin()
        .args([
            "compare",
            empty.to_str().unwrap(),
            "--out",
            table_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty.csv"));
}

#[test]
fn tikhonov_baseline_writes_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tik.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pct = 0.10
seeds = [5]
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run_ok(&["tikhonov", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("tikhonov p=0.1 s=5") && stdout.contains("mu="));
    assert!(out_dir.join("run-p0.1-s5").join("final.pmvec").exists());
}

#[test]
fn parallel_jobs_match_serial_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "grid.toml",
        r#"
[instance]
kind = "radon"
side = 32
angles = 8
noise_pcts = [0.10, 0.30]
seeds = [1, 2]

[solver]
max_iters = 3
"#,
    );
    let serial = tmp.path().join("serial");
    let parallel = tmp.path().join("parallel");
    let out_s = run_ok(&["pm", "--config", &cfg, "--out", serial.to_str().unwrap()]);
    let out_p = run_ok(&[
        "pm",
        "--config",
        &cfg,
        "--jobs",
        "2",
        "--out",
        parallel.to_str().unwrap(),
    ]);
    let sans_wall = |raw: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(raw)
            .lines()
            .map(|l| l.split(" wall=").next().unwrap().to_string())
            .collect()
    };
    assert_eq!(
        sans_wall(&out_s.stdout),
        sans_wall(&out_p.stdout),
        "summary order is the replica grid order regardless of jobs"
    );
    for rep in ["run-p0.1-s1", "run-p0.1-s2", "run-p0.3-s1", "run-p0.3-s2"] {
        let a = std::fs::read(serial.join(rep).join("final.pmvec")).unwrap();
        let b = std::fs::read(parallel.join(rep).join("final.pmvec")).unwrap();
        assert_eq!(a, b, "{rep} differs between serial and parallel runs");
    }
}
