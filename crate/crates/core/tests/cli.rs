use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::fixtures::{self, Peanut};
use selfprior::io::{self, PlyEncoding};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selfprior"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a peanut cloud and its reference mesh into `dir`.
fn inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let truth = fixtures::mesh_implicit(&Peanut::default(), 40);
    let cloud = fixtures::sample_cloud(&truth, 1500, &mut ChaCha8Rng::seed_from_u64(1));
    let (c, t) = (dir.join("cloud.ply"), dir.join("truth.obj"));
    io::write_point_cloud(&cloud, &c, PlyEncoding::BinaryLittleEndian).unwrap();
    io::write_mesh(&truth, &t, PlyEncoding::Ascii).unwrap();
    (c, t)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 12] = [
    "--iterations",
    "6",
    "--levels",
    "1",
    "--initial-faces",
    "300",
    "--max-faces",
    "300",
    "--samples-start",
    "500",
    "--samples-end",
    "800",
];

#[test]
fn help_and_usage_errors() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["reconstruct", "direct", "eval", "corrupt", "info"] {
        assert!(stdout(&o).contains(sub), "{sub} missing from help");
    }
    let o = run(&["reconstruct", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["info", "--input", p(&dir.path().join("missing.ply"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));

    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 2\n").unwrap();
    let o = run(&["info", "--input", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "iterations = 10\nno_such_key = 1\n").unwrap();
    let o = run(&["reconstruct", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn info_describes_clouds_and_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, truth) = inputs(dir.path());
    let o = run(&["info", "--input", p(&cloud)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("points   1500"));
    let o = run(&["info", "--input", p(&truth)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("watertight true"));
    assert!(stdout(&o).contains("genus    0"));
}

#[test]
fn corrupt_then_info() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, _) = inputs(dir.path());
    let out = dir.path().join("noisy.xyz");
    let o = run(&[
        "corrupt",
        "--input",
        p(&cloud),
        "--out",
        p(&out),
        "--sigma",
        "0.005",
        "--center",
        "1,0,0",
        "--radius",
        "0.15",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kept: usize = stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(kept < 1500);
    assert_eq!(io::read_point_cloud(&out).unwrap().len(), kept);
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, truth) = inputs(dir.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let (mesh, log) = (
            dir.path().join(format!("m{k}.ply")),
            dir.path().join(format!("l{k}.txt")),
        );
        let mut args = vec![
            "reconstruct",
            "--input",
            p(&cloud),
            "--out",
            p(&mesh),
            "--log",
            p(&log),
            "--truth",
            p(&truth),
            "--seed",
            "5",
            "--no-timing",
            "--set",
            "metric_samples=5000",
        ];
        args.extend(SMALL);
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("fscore"));
        outputs.push((std::fs::read(&mesh).unwrap(), std::fs::read_to_string(&log).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let log = &outputs[0].1;
    assert_eq!(log.lines().filter(|l| l.starts_with("iter=")).count(), 6);
    assert!(log
        .lines()
        .any(|l| l.starts_with("iter=0 level=0 chamfer=") && l.ends_with(" ms=0")));
    assert!(log.lines().last().unwrap().starts_with("metrics tau="));
}

#[test]
fn direct_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, truth) = inputs(dir.path());
    let mesh = dir.path().join("direct.obj");
    let mut args = vec!["direct", "--input", p(&cloud), "--out", p(&mesh)];
    args.extend(SMALL);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("direct"));
    let o = run(&["eval", "--recon", p(&mesh), "--truth", p(&truth), "--samples", "5000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("full"));
    let o = run(&[
        "eval",
        "--recon",
        p(&mesh),
        "--truth",
        p(&truth),
        "--samples",
        "5000",
        "--region-center",
        "1.2,0,0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("completion"));
}
