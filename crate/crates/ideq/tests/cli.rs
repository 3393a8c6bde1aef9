//! End-to-end checks of the `ideq` binary: subcommands, config handling,
//! artifact layout, and exit codes (0 success, 1 config error, 2 divergence).

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ideq"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ideq_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_data_is_deterministic() {
    let dir = temp_dir("gen");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args([
                "gen-data",
                "--kind",
                "piecewise-constant",
                "--count",
                "3",
                "--size",
                "16",
                "--seed",
                "5",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for i in 0..3 {
        let name = format!("piecewise-constant_{i:03}.pgm");
        assert_eq!(
            fs::read(out_a.join(&name)).unwrap(),
            fs::read(out_b.join(&name)).unwrap()
        );
    }
    fs::remove_dir_all(dir).ok();
}

#[test]
fn solve_writes_artifacts_and_identity_case_is_exact() {
    let dir = temp_dir("solve");
    let config = dir.join("solve.cfg");
    // full mask, no noise, lambda 0: the adjoint already solves the problem
    fs::write(
        &config,
        "problem = inpainting\n\
         scheme = red\n\
         mask_kind = random-pixel\n\
         mask_p = 1.0\n\
         sigma_y = 0\n\
         lambda = 0\n\
         tau = 0.5\n\
         max_iters = 20\n\
         eps = 1e-6\n\
         regularizer = tikhonov\n\
         gen_kind = smooth-bump\n\
         gen_size = 16\n",
    )
    .unwrap();
    let out = dir.join("run");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("psnr=inf"), "summary: {stdout}");
    for artifact in ["x_hat.pgm", "x_hat.blob", "trajectory.csv", "summary.txt", "measurement.blob"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("iter,k_local,residual,rel_residual,objective,grad_norm,restart,time_s"));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn scheme_override_flag_applies() {
    let dir = temp_dir("override");
    let out = dir.join("run");
    let output = bin()
        .args([
            "solve",
            "--seed",
            "4",
            "--scheme",
            "ideq-prox",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("scheme=ideq-prox"), "{stdout}");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn config_errors_exit_with_code_1() {
    let dir = temp_dir("badcfg");
    let config = dir.join("bad.cfg");
    fs::write(&config, "no_such_key = 1\n").unwrap();
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let config2 = dir.join("bad2.cfg");
    fs::write(&config2, "scheme = warp-drive\n").unwrap();
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config2)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn divergence_exits_with_code_2() {
    let dir = temp_dir("diverge");
    let config = dir.join("diverge.cfg");
    // grossly unstable step size on a quadratic: the iterates blow up
    fs::write(
        &config,
        "problem = inpainting\n\
         scheme = red\n\
         mask_kind = random-pixel\n\
         mask_p = 1.0\n\
         sigma_y = 0\n\
         lambda = 1\n\
         tau = 50\n\
         max_iters = 2000\n\
         eps = 0\n\
         regularizer = tikhonov\n\
         mu = 1\n\
         gen_kind = smooth-bump\n\
         gen_size = 16\n",
    )
    .unwrap();
    let out = dir.join("run");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--seed", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    // partial trajectory still written
    assert!(out.join("trajectory.csv").exists());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn bench_and_rate_fit_pipeline() {
    let dir = temp_dir("bench");
    let config = dir.join("bench.cfg");
    fs::write(
        &config,
        "problem = inpainting\n\
         schemes = red,ideq-grad\n\
         scheme = ideq-grad\n\
         mask_kind = random-pixel\n\
         mask_p = 0.5\n\
         sigma_y = 0.004\n\
         lambda = 0.05\n\
         tau = 0.4\n\
         alpha = 0.2\n\
         restart_budget = 500\n\
         max_iters = 300\n\
         eps = 1e-5\n\
         regularizer = smoothed-tv\n\
         delta = 0.05\n\
         gen_kind = piecewise-constant\n\
         gen_size = 16\n\
         gen_count = 2\n",
    )
    .unwrap();
    let out = dir.join("bench_out");
    let output = bin()
        .args(["bench", "--config"])
        .arg(&config)
        .args(["--seed", "9", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("row_kind,scheme,instance,psnr,ssim,iters_to_eps,wall_time_s,diverged"));
    assert!(csv.contains("mean,red"));
    assert!(csv.contains("mean,ideq-grad"));

    // produce a trajectory and fit its decay
    let solve_out = dir.join("solve_out");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--seed", "9", "--out"])
        .arg(&solve_out)
        .status()
        .unwrap();
    assert!(status.success());
    let output = bin()
        .args(["rate-fit"])
        .arg(solve_out.join("trajectory.csv"))
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("slope="), "{stdout}");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn train_smoke_via_cli() {
    let dir = temp_dir("train");
    let config = dir.join("train.cfg");
    fs::write(
        &config,
        "problem = inpainting\n\
         scheme = ideq-grad\n\
         mask_kind = random-pixel\n\
         mask_p = 0.5\n\
         sigma_y = 0.004\n\
         lambda = 0.5\n\
         tau = 0.8\n\
         alpha = 0.2\n\
         restart_budget = 500\n\
         max_iters = 10\n\
         regularizer = gradstep\n\
         sigma_denoiser = 0.03\n\
         gen_kind = piecewise-constant\n\
         gen_size = 16\n\
         train_count = 3\n\
         val_count = 2\n\
         learning_rate = 1e-3\n\
         max_epochs = 2\n\
         patience = 2\n",
    )
    .unwrap();
    let out = dir.join("run");
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    assert!(out.join("train_log.csv").exists());
    assert!(out.join("checkpoint.bin").exists());
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_psnr,val_ssim,diverged_count,wall_time_s"));

    // the checkpoint is loadable as a solve-time regularizer
    let solve_cfg = dir.join("solve.cfg");
    fs::write(
        &solve_cfg,
        format!(
            "problem = inpainting\n\
             scheme = ideq-grad\n\
             mask_kind = random-pixel\n\
             mask_p = 0.5\n\
             sigma_y = 0.004\n\
             lambda = 0.5\n\
             tau = 0.8\n\
             max_iters = 20\n\
             regularizer = gradstep\n\
             checkpoint = {}\n\
             gen_kind = piecewise-constant\n\
             gen_size = 16\n",
            out.join("checkpoint.bin").display()
        ),
    )
    .unwrap();
    let solve_out = dir.join("solve_run");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&solve_cfg)
        .args(["--seed", "6", "--out"])
        .arg(&solve_out)
        .status()
        .unwrap();
    assert!(status.success());
    fs::remove_dir_all(dir).ok();
}
