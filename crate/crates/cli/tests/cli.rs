//! End-to-end subcommand tests against the built binary.

use geogan_core::checkpoint::{save_checkpoint, CheckpointMeta};
use geogan_core::convnet::{init_params, ArchitectureSpec};
use geogan_core::grid::{write_grid, CategoricalGrid, Grid};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geogan"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn geogan");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("spawn geogan");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

fn striped_ti(path: &Path, n: usize) -> CategoricalGrid {
    let data: Vec<u8> = (0..n * n).map(|i| u8::from((i / n) % 5 < 2)).collect();
    let g = CategoricalGrid::new(&[n, n], 2, data).unwrap();
    write_grid(path, &Grid::Categorical(g.clone())).unwrap();
    g
}

fn tiny_generator(path: &Path) {
    let arch = ArchitectureSpec::generator(2, 1, vec![3, 1], 3);
    let net = init_params(&arch, 5).unwrap();
    save_checkpoint(&net, &CheckpointMeta { epoch: 1, seed: 5 }, path).unwrap();
}

fn train_config(dir: &Path, ti: &Path, out: &Path, seed: u64) -> PathBuf {
    let cfg = dir.join(format!("train_{seed}.cfg"));
    std::fs::write(
        &cfg,
        format!(
            "[train]\nti = {}\ncheckpoint_dir = {}\nepochs = 2\nminibatches_per_epoch = 3\n\
             batch_size = 4\nlatent_extent = 3\nkernel = 3\ngenerator_channels = 4 1\nseed = {seed}\n",
            ti.display(),
            out.display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn train_writes_checkpoints_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ti = dir.path().join("ti.grid");
    striped_ti(&ti, 24);

    let out_a = dir.path().join("a");
    let cfg_a = train_config(dir.path(), &ti, &out_a, 7);
    run_ok(bin().args(["train", "--config"]).arg(&cfg_a));

    let ckpts: Vec<_> = std::fs::read_dir(&out_a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ckpt"))
        .collect();
    assert_eq!(ckpts.len(), 2);
    let loss = std::fs::read_to_string(out_a.join("loss_trace.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 2 * 3);
    assert!(out_a.join("checkpoints_manifest.csv").exists());

    let out_b = dir.path().join("b");
    let cfg_b = train_config(dir.path(), &ti, &out_b, 7);
    run_ok(bin().args(["train", "--config"]).arg(&cfg_b));
    let loss_b = std::fs::read(out_b.join("loss_trace.csv")).unwrap();
    assert_eq!(std::fs::read(out_a.join("loss_trace.csv")).unwrap(), loss_b);
}

#[test]
fn train_missing_ti_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = train_config(dir.path(), &dir.path().join("absent.grid"), &out, 1);
    let (code, stderr) = exit_code(bin().args(["train", "--config"]).arg(&cfg));
    assert_eq!(code, 2, "{stderr}");
    assert!(!out.exists(), "no partial outputs");
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "seed = 1\n[train]\nti = x.grid\ncheckpoint_dir = y\nepochz = 3\n",
    )
    .unwrap();
    let (code, stderr) = exit_code(bin().args(["train", "--config"]).arg(&cfg));
    assert_eq!(code, 2);
    assert!(stderr.contains("epochz"), "{stderr}");
}

#[test]
fn generate_counts_seeds_and_q_check() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("g.ckpt");
    tiny_generator(&ckpt);

    let out = dir.path().join("real");
    run_ok(bin().args([
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--zx",
        "4",
        "--count",
        "3",
        "--seed",
        "9",
        "--out-dir",
        out.to_str().unwrap(),
        "--pgm",
    ]));
    let mut names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "realization_0000.grid",
            "realization_0000.pgm",
            "realization_0001.grid",
            "realization_0001.pgm",
            "realization_0002.grid",
            "realization_0002.pgm",
        ]
    );

    // reruns are byte-identical
    let out2 = dir.path().join("real2");
    run_ok(bin().args([
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--zx",
        "4",
        "--count",
        "3",
        "--seed",
        "9",
        "--out-dir",
        out2.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(out.join("realization_0002.grid")).unwrap(),
        std::fs::read(out2.join("realization_0002.grid")).unwrap()
    );

    // count 0 succeeds and writes nothing
    let out3 = dir.path().join("real3");
    run_ok(bin().args([
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--zx",
        "4",
        "--count",
        "0",
        "--seed",
        "9",
        "--out-dir",
        out3.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read_dir(&out3).unwrap().count(), 0);

    let (code, stderr) = exit_code(bin().args([
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--zx",
        "4",
        "--q",
        "2",
        "--seed",
        "1",
        "--out-dir",
        dir.path().join("x").to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("incompatible"), "{stderr}");
}

#[test]
fn metrics_of_ti_itself_collapses_bands_onto_ti_curves() {
    let dir = tempfile::tempdir().unwrap();
    let ti = dir.path().join("ti.grid");
    let g = striped_ti(&ti, 20);
    let input = dir.path().join("reals");
    std::fs::create_dir_all(&input).unwrap();
    write_grid(&input.join("r0.grid"), &Grid::Categorical(g)).unwrap();

    let out = dir.path().join("metrics");
    run_ok(bin().args([
        "metrics",
        "--input-dir",
        input.to_str().unwrap(),
        "--ti",
        ti.to_str().unwrap(),
        "--max-lag",
        "6",
        "--out-dir",
        out.to_str().unwrap(),
    ]));

    // single realization equal to the TI: band mean/min/max equal TI curve
    for tag in ["pf", "cf"] {
        for f in 0..2 {
            for d in ["x", "y", "dxy"] {
                let ti_curve =
                    std::fs::read_to_string(out.join(format!("curves/ti_{tag}_f{f}_{d}.csv")))
                        .unwrap();
                let band =
                    std::fs::read_to_string(out.join(format!("band_{tag}_f{f}_{d}.csv"))).unwrap();
                for (tl, bl) in ti_curve.lines().skip(1).zip(band.lines().skip(1)) {
                    let v = tl.split(',').nth(1).unwrap();
                    let mut parts = bl.split(',');
                    let _lag = parts.next();
                    assert_eq!(parts.next().unwrap(), v);
                    assert_eq!(parts.next().unwrap(), v);
                    assert_eq!(parts.next().unwrap(), v);
                }
            }
        }
        let summary = std::fs::read_to_string(out.join(format!("{tag}_summary.csv"))).unwrap();
        // rows = directions x facies x lags
        assert_eq!(summary.lines().count(), 1 + 3 * 2 * 7);
    }
    assert!(out.join("fractions.csv").exists());
}

#[test]
fn metrics_rejects_mixed_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let ti = dir.path().join("ti.grid");
    striped_ti(&ti, 20);
    let input = dir.path().join("reals");
    std::fs::create_dir_all(&input).unwrap();
    striped_ti(&input.join("a.grid"), 20);
    striped_ti(&input.join("b.grid"), 18);
    let (code, stderr) = exit_code(bin().args([
        "metrics",
        "--input-dir",
        input.to_str().unwrap(),
        "--ti",
        ti.to_str().unwrap(),
        "--out-dir",
        dir.path().join("m").to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("mixed grid shapes"), "{stderr}");
}

fn flow_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("flow.cfg");
    std::fs::write(
        &cfg,
        "seed = 3\n[flow]\nnx = 25\nny = 25\ngradient = 0.01\nk_facies = 1e-4 1e-2\n\
         well = 12 12 -0.0005\nobs_lattice = 3 3 7\n",
    )
    .unwrap();
    cfg
}

#[test]
fn flow_solves_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flow_config(dir.path());
    let grid_path = dir.path().join("facies.grid");
    striped_ti(&grid_path, 25);
    let out = dir.path().join("flow_out");
    run_ok(bin().args([
        "flow",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        grid_path.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let heads = std::fs::read_to_string(out.join("heads.csv")).unwrap();
    assert_eq!(heads.lines().count(), 1 + 25 * 25);
    let obs = std::fs::read_to_string(out.join("observations.csv")).unwrap();
    assert_eq!(obs.lines().count(), 1 + 49);
}

fn invert_config(dir: &Path, ckpt: &Path, out: &Path, iters: usize, cond: bool) -> PathBuf {
    let cfg = dir.join(format!("invert_{iters}_{cond}.cfg"));
    let cond_line = if cond {
        format!(
            "conditioning = {}\n",
            out.join("truth/conditioning.csv").display()
        )
    } else {
        String::new()
    };
    std::fs::write(
        &cfg,
        format!(
            "seed = 21\n[invert]\ncheckpoint = {}\nout_dir = {}\nn_iterations = {iters}\n\
             n_chains = 4\nlatent_zx = 3\ndata = {}\nsigma_e = 0.01\nsigma_x = 0.5\n\
             burn_in = 0\nrhat_interval = 0\n{cond_line}\
             [flow]\nnx = 17\nny = 17\ngradient = 0.01\nk_facies = 1e-4 1e-2\n\
             well = 8 8 -0.0005\nobs_lattice = 2 2 7\n",
            ckpt.display(),
            out.display(),
            out.join("truth/heads_observed.csv").display(),
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn invert_make_truth_then_zero_iteration_prior_dump() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("g.ckpt");
    // dp = 3 generator: latent 3 -> 17x17 output matching the flow grid
    let arch = ArchitectureSpec::generator(2, 1, vec![4, 2, 1], 3);
    let net = init_params(&arch, 8).unwrap();
    save_checkpoint(&net, &CheckpointMeta { epoch: 1, seed: 8 }, &ckpt).unwrap();

    let out = dir.path().join("inv");
    let cfg = invert_config(dir.path(), &ckpt, &out, 0, false);
    run_ok(
        bin()
            .args(["invert", "--config", cfg.to_str().unwrap()])
            .arg("--make-truth"),
    );
    for name in [
        "truth/truth.grid",
        "truth/heads_clean.csv",
        "truth/heads_observed.csv",
        "truth/conditioning.csv",
        "truth/truth_latent.bin",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }

    // zero-iteration run dumps the prior ensemble
    run_ok(bin().args(["invert", "--config", cfg.to_str().unwrap()]));
    for c in 0..4 {
        assert!(out.join(format!("chain_{c:02}.csv")).exists());
        assert!(out.join(format!("realization_chain_{c:02}.grid")).exists());
    }
    assert!(out.join("archive.bin").exists());
    let trace = std::fs::read_to_string(out.join("chain_00.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1, "only the header for 0 iterations");
}

#[test]
fn invert_short_run_with_conditioning_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("g.ckpt");
    let arch = ArchitectureSpec::generator(2, 1, vec![4, 2, 1], 3);
    let net = init_params(&arch, 12).unwrap();
    save_checkpoint(&net, &CheckpointMeta { epoch: 1, seed: 12 }, &ckpt).unwrap();

    let out = dir.path().join("inv");
    let cfg_truth = invert_config(dir.path(), &ckpt, &out, 0, false);
    run_ok(
        bin()
            .args(["invert", "--config", cfg_truth.to_str().unwrap()])
            .arg("--make-truth"),
    );
    let cfg = invert_config(dir.path(), &ckpt, &out, 40, true);
    let output = run_ok(bin().args(["invert", "--config", cfg.to_str().unwrap()]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("conditioning over"), "{stdout}");
    assert!(out.join("conditioning_report.csv").exists());
    assert!(out.join("rhat.csv").exists());
    let trace = std::fs::read_to_string(out.join("chain_03.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 40);
}
