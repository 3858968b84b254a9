//! End-to-end checks of the `wtq` binary: exit codes, stdout contracts, and
//! CSV determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wtq_core::tensor::TensorContainer;
use wtq_tools::format;

fn wtq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wtq"))
}

fn write_tensor(dir: &Path, name: &str, shape: Vec<usize>, data: Vec<f64>) -> PathBuf {
    let t = TensorContainer::from_f64(shape, data).unwrap();
    let path = dir.join(name);
    format::write_tensor(&t, &path).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn wtq")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn quantize_golden_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_tensor(dir.path(), "t.wtq", vec![4], vec![4.0, 1.0, 3.0, 2.0]);
    let out_path = dir.path().join("t.wtqa");

    let out = run(wtq()
        .arg("quantize")
        .arg(&input)
        .arg(&out_path)
        .args(["--method", "ot", "--bits", "1"]));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(stdout(&out).trim(), "method=ot bits=1 mse=0.25 w2=0.5");

    let artifact = format::read_artifact(&out_path).unwrap();
    assert_eq!(artifact.codebooks()[0], vec![1.5, 3.5]);
    assert_eq!(artifact.assignments()[0], vec![1, 0, 1, 0]);

    // bits out of range: exit 2 and a message naming the valid range.
    let out = run(wtq()
        .arg("quantize")
        .arg(&input)
        .arg(dir.path().join("x.wtqa"))
        .args(["--method", "ot", "--bits", "0"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1..=16"));

    // Missing input: exit 2.
    let out = run(wtq()
        .arg("quantize")
        .arg(dir.path().join("missing.wtq"))
        .arg(dir.path().join("y.wtqa"))
        .args(["--method", "ot", "--bits", "1"]));
    assert_eq!(out.status.code(), Some(2));

    // Corrupt magic: exit 2.
    let bad = dir.path().join("bad.wtq");
    fs::write(&bad, b"NOPE").unwrap();
    let out = run(wtq()
        .arg("quantize")
        .arg(&bad)
        .arg(dir.path().join("z.wtqa"))
        .args(["--method", "ot", "--bits", "1"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dequantize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_tensor(dir.path(), "t.wtq", vec![4], vec![0.0, 1.0, 2.0, 10.0]);
    let art = dir.path().join("t.wtqa");
    let back = dir.path().join("back.wtq");

    let out = run(wtq()
        .arg("quantize")
        .arg(&input)
        .arg(&art)
        .args(["--method", "ot", "--bits", "1"]));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("mse=4.6875"));

    let out = run(wtq().arg("dequantize").arg(&art).arg(&back));
    assert_eq!(out.status.code(), Some(0));
    let recon = format::read_tensor(&back).unwrap();
    assert_eq!(recon.values(), vec![0.5, 0.5, 0.5, 6.0]);
}

#[test]
fn per_channel_quantize() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_tensor(
        dir.path(),
        "t.wtq",
        vec![2, 4],
        vec![4.0, 1.0, 3.0, 2.0, 0.0, 1.0, 2.0, 10.0],
    );
    let art = dir.path().join("t.wtqa");
    let out = run(wtq().arg("quantize").arg(&input).arg(&art).args([
        "--method",
        "ot",
        "--bits",
        "1",
        "--per-channel",
    ]));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let artifact = format::read_artifact(&art).unwrap();
    assert_eq!(artifact.channels(), 2);
    assert_eq!(artifact.codebooks()[0], vec![1.5, 3.5]);
    assert_eq!(artifact.codebooks()[1], vec![0.5, 6.0]);
}

#[test]
fn sweep_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let v: Vec<f64> = (0..512)
        .map(|i| wtq_core::flow::rng::standard_normal(5, i as u64, 0, 0))
        .collect();
    let input = write_tensor(dir.path(), "w.wtq", vec![512], v);
    let csv1 = dir.path().join("a.csv");
    let csv2 = dir.path().join("b.csv");
    for csv in [&csv1, &csv2] {
        let out = run(wtq().arg("sweep").arg(&input).args(["-o"]).arg(csv).args([
            "--methods",
            "uniform,ot",
            "--bits-range",
            "2..4",
        ]));
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    let a = fs::read(&csv1).unwrap();
    let b = fs::read(&csv2).unwrap();
    assert_eq!(a, b, "sweep output must be byte-identical across runs");

    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 6, "2 methods x 3 bit-widths + header");
    assert_eq!(
        lines[0],
        "layer_id,method,bits,mse,w2,psnr_db,ssim,occupancy_entropy_bits,fid_bound"
    );
    assert!(text.ends_with('\n'));

    // Invalid range: exit 2.
    let out = run(wtq()
        .arg("sweep")
        .arg(&input)
        .args(["-o"])
        .arg(dir.path().join("c.csv"))
        .args(["--methods", "uniform", "--bits-range", "9..3"]));
    assert_eq!(out.status.code(), Some(2));

    // pwl with a range starting at 1: exit 2.
    let out = run(wtq()
        .arg("sweep")
        .arg(&input)
        .args(["-o"])
        .arg(dir.path().join("d.csv"))
        .args(["--methods", "pwl", "--bits-range", "1..3"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_multiple_layers_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = write_tensor(
        dir.path(),
        "l0.wtq",
        vec![16],
        (0..16).map(f64::from).collect(),
    );
    let t1 = write_tensor(
        dir.path(),
        "l1.wtq",
        vec![16],
        (0..16).map(|i| f64::from(i) * 0.5).collect(),
    );
    let csv = dir.path().join("s.csv");
    let out = run(wtq()
        .arg("sweep")
        .arg(&t0)
        .arg(&t1)
        .args(["-o"])
        .arg(&csv)
        .args(["--methods", "ot", "--bits-range", "2..2"]));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = fs::read_to_string(&csv).unwrap();
    let ids: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids, vec!["0", "1"]);
}

#[test]
fn bounds_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.kv");
    fs::write(
        &params,
        "l_x=1\nl_theta_inf=1\nl_theta_2=1\nl_phi=1\np=1\nt=1\nr=1\n",
    )
    .unwrap();
    let csv = dir.path().join("bounds.csv");
    let out = run(wtq()
        .arg("bounds")
        .arg(&csv)
        .args(["--params"])
        .arg(&params)
        .args(["--density", "gaussian:1.0", "--bits-range", "2..8"]));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    let header: Vec<&str> = lines[0].split(',').collect();
    let rho_col = header.iter().position(|&h| h == "rho").unwrap();
    let ratio_col = header.iter().position(|&h| h == "ce_over_cu").unwrap();
    let bu_col = header.iter().position(|&h| h == "bound_uniform").unwrap();
    for line in &lines[1..] {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[rho_col] - f[ratio_col]).abs() <= 1e-12 * f[rho_col].abs());
    }
    // Worked example at b=8 appears in the CSV.
    let last: Vec<f64> = lines[7].split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[bu_col] - 4.5051459381295156e-5).abs() < 1e-15);

    // Malformed params: exit 2.
    let badp = dir.path().join("bad.kv");
    fs::write(&badp, "l_x=fast\n").unwrap();
    let out = run(wtq()
        .arg("bounds")
        .arg(dir.path().join("x.csv"))
        .args(["--params"])
        .arg(&badp)
        .args(["--density", "gaussian:1.0", "--bits-range", "2..4"]));
    assert_eq!(out.status.code(), Some(2));
}

fn sim_fixtures(dir: &Path, l_theta: &str) -> (PathBuf, PathBuf, PathBuf) {
    let field = dir.join("field.kv");
    fs::write(&field, "d=2\na=1,0,0,1\nc=0,0\n").unwrap();
    let perturb = dir.join("perturb.kv");
    fs::write(
        &perturb,
        format!("kind=offset\ndelta=0.1,0\nenvelope=uniform\nl_theta={l_theta}\n"),
    )
    .unwrap();
    let config = dir.join("config.kv");
    fs::write(
        &config,
        "t=1\nstep=0.001\nintegrator=rk4\nn_samples=4\nseed=42\nd=2\n",
    )
    .unwrap();
    (field, perturb, config)
}

#[test]
fn simulate_envelope_and_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (field, perturb, config) = sim_fixtures(dir.path(), "1.0");
    let csv = dir.path().join("sim.csv");
    let out = run(wtq()
        .arg("simulate")
        .arg(&csv)
        .args(["--field"])
        .arg(&field)
        .args(["--perturb"])
        .arg(&perturb)
        .args(["--config"])
        .arg(&config));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).contains("satisfied=true"));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,max_error,mean_error,envelope,margin"
    );
    assert_eq!(text.lines().count(), 1 + 1001);

    // Zero perturbation: exit 0, all errors zero.
    let zp = dir.path().join("zero.kv");
    fs::write(&zp, "kind=offset\ndelta=0,0\n").unwrap();
    let out = run(wtq()
        .arg("simulate")
        .arg(dir.path().join("z.csv"))
        .args(["--field"])
        .arg(&field)
        .args(["--perturb"])
        .arg(&zp)
        .args(["--config"])
        .arg(&config));
    assert_eq!(out.status.code(), Some(0));

    // Undersized envelope: exit 3.
    let (field, perturb, config) = sim_fixtures(dir.path(), "0.5");
    let out = run(wtq()
        .arg("simulate")
        .arg(dir.path().join("v.csv"))
        .args(["--field"])
        .arg(&field)
        .args(["--perturb"])
        .arg(&perturb)
        .args(["--config"])
        .arg(&config));
    assert_eq!(out.status.code(), Some(3), "{out:?}");

    // Unparseable field file: exit 2.
    let badf = dir.path().join("badfield.kv");
    fs::write(&badf, "d=two\n").unwrap();
    let out = run(wtq()
        .arg("simulate")
        .arg(dir.path().join("w.csv"))
        .args(["--field"])
        .arg(&badf)
        .args(["--perturb"])
        .arg(&perturb)
        .args(["--config"])
        .arg(&config));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let (field, perturb, _) = sim_fixtures(dir.path(), "1.0");
    let config = dir.path().join("noseed.kv");
    fs::write(
        &config,
        "t=1\nstep=0.01\nintegrator=rk4\nn_samples=4\nd=2\n",
    )
    .unwrap();

    // No seed anywhere: exit 2.
    let out = run(wtq()
        .arg("simulate")
        .arg(dir.path().join("a.csv"))
        .args(["--field"])
        .arg(&field)
        .args(["--perturb"])
        .arg(&perturb)
        .args(["--config"])
        .arg(&config));
    assert_eq!(out.status.code(), Some(2));

    // --seed satisfies the requirement and is deterministic.
    let c1 = dir.path().join("s1.csv");
    let c2 = dir.path().join("s2.csv");
    for c in [&c1, &c2] {
        let out = run(wtq()
            .args(["--seed", "7"])
            .arg("simulate")
            .arg(c)
            .args(["--field"])
            .arg(&field)
            .args(["--perturb"])
            .arg(&perturb)
            .args(["--config"])
            .arg(&config));
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
}

#[test]
fn threads_flag_keeps_output_identical() {
    let dir = tempfile::tempdir().unwrap();
    let v: Vec<f64> = (0..256)
        .map(|i| wtq_core::flow::rng::standard_normal(11, i as u64, 0, 0))
        .collect();
    let input = write_tensor(dir.path(), "w.wtq", vec![256], v);
    let c1 = dir.path().join("t1.csv");
    let c4 = dir.path().join("t4.csv");
    for (threads, csv) in [("1", &c1), ("4", &c4)] {
        let out = run(wtq()
            .args(["--threads", threads])
            .arg("sweep")
            .arg(&input)
            .args(["-o"])
            .arg(csv)
            .args(["--methods", "uniform,ot,pwl,log2", "--bits-range", "2..5"]));
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c4).unwrap());

    let out = run(wtq()
        .args(["--threads", "0"])
        .arg("dequantize")
        .arg("a")
        .arg("b"));
    assert_eq!(out.status.code(), Some(2));
}
