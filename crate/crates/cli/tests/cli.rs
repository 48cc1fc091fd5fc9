//! End-to-end tests of the `dualprox` binary and its library.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualprox_cli::dataset::{read_demands, validation_split, GenOptions};
use dualprox_cli::plot::band;
use dualprox_cli::train::{parse_seeds, run_training, RunManifest, RunStatus, TrainOptions, CHECKPOINT_FILE, MANIFEST_FILE};
use dualprox_cli::{run_gen_data, Dataset};
use dualprox_core::dcopf::SamplerConfig;
use dualprox_core::oracle::SolveStatus;
use dualprox_core::{Method, TrainConfig};

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/cases").join(name)
}

fn dualprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualprox"))
        .args(args)
        .env("DUALPROX_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let case3 = case("case3.m");
    let mut args = vec!["gen-data", "--case", s(&case3), "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(dualprox(&args));
    out
}

#[test]
fn gen_data_is_byte_identical_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--samples", "100", "--seed", "7", "--with-oracle"];
    let a = gen(dir.path(), "a.dpx", &args);
    let b = gen(dir.path(), "b.dpx", &args);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let data = Dataset::load(&a).unwrap();
    assert_eq!(data.to_bytes().unwrap(), bytes);
    assert_eq!(data.samples.len(), 100);
    for rec in &data.samples {
        let oracle = rec.oracle.as_ref().expect("oracle block");
        assert_eq!(oracle.status, SolveStatus::Optimal);
        assert!(oracle.lstar.is_finite());
        assert!((0.8..1.2).contains(&rec.alpha));
    }
    assert_eq!(data.header.train.len(), 80);
    assert_eq!(data.header.test.len(), 20);
    let mut all: Vec<usize> = data.header.train.iter().chain(&data.header.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());

    let other = gen(dir.path(), "c.dpx", &["--samples", "100", "--seed", "8", "--with-oracle"]);
    assert_ne!(bytes, std::fs::read(other).unwrap());
}

#[test]
fn corrupted_datasets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "d.dpx", &["--samples", "20"]);
    let bytes = std::fs::read(&path).unwrap();
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Dataset::from_bytes(&extra).is_err());
    assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(Dataset::from_bytes(&magic).is_err());

    let bad = dir.path().join("bad.dpx");
    std::fs::write(&bad, &magic).unwrap();
    let out = dualprox(&["train", "--dataset", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_ranges_write_one_manifest_each() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.dpx", &["--samples", "60", "--with-oracle"]);
    let runs = dir.path().join("runs");
    ok(dualprox(&[
        "train", "--dataset", s(&data), "--seeds", "0..9", "--epochs", "2", "--out", s(&runs),
    ]));
    for seed in 0..10 {
        let run = runs.join(format!("seed-{seed}"));
        let m = RunManifest::load(&run.join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.seed, seed);
        assert_eq!(m.status, RunStatus::Completed);
        assert_eq!(m.history.len(), 2);
        assert!(m.history.iter().all(|r| r.val_mean_gstar.is_some()));
        assert!(run.join(CHECKPOINT_FILE).is_file());
    }
    assert_eq!(parse_seeds("1,4,7").unwrap(), vec![1, 4, 7]);
    assert_eq!(parse_seeds("3").unwrap(), vec![3]);
    assert!(parse_seeds("5..2").is_err());
}

#[test]
fn dll_equals_s3l_without_smoothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.dpx", &["--samples", "60"]);
    let base = ["--dataset", s(&data), "--epochs", "3", "--mu0", "0"];
    let s3l = dir.path().join("s3l");
    let dll = dir.path().join("dll");
    ok(dualprox(&[&["train"][..], &base, &["--method", "s3l", "--out", s(&s3l)]].concat()));
    ok(dualprox(&[&["train"][..], &base, &["--method", "dll", "--out", s(&dll)]].concat()));
    let hist = |d: &Path| RunManifest::load(&d.join("seed-0").join(MANIFEST_FILE)).unwrap().history;
    let (a, b) = (hist(&s3l), hist(&dll));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
    }
    let load = |d: &Path| dualprox_core::mlp::load_checkpoint(&d.join("seed-0").join(CHECKPOINT_FILE)).unwrap();
    let (pa, pb) = (load(&s3l), load(&dll));
    assert!(pa.model.params().zip(pb.model.params()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn eval_plot_and_bench_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.dpx", &["--samples", "80", "--with-oracle"]);
    let runs = dir.path().join("runs");
    for method in ["s3l", "dc3", "penalty"] {
        ok(dualprox(&[
            "train", "--dataset", s(&data), "--method", method, "--epochs", "2",
            "--out", s(&runs.join(method)),
        ]));
    }
    let metrics = dir.path().join("metrics");
    let table = ok(dualprox(&["eval", "--run", s(&runs), "--dataset", s(&data), "--out", s(&metrics)]));
    assert!(table.contains("G★"));
    let csv = std::fs::read_to_string(metrics.join("metrics-s3l-seed0.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "id,lstar,bound,dual_obj,v,v_sum,v_linf,dgap,gstar");
    let rows = csv.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count();
    assert_eq!(rows, 16);
    let summary = std::fs::read_to_string(metrics.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    let single = ok(dualprox(&[
        "eval", "--run", s(&runs.join("s3l/seed-0").join(CHECKPOINT_FILE)), "--dataset", s(&data),
    ]));
    assert!(single.contains("s3l"));

    let plots = dir.path().join("plots");
    ok(dualprox(&["plot", s(&runs.join("s3l/seed-0").join(MANIFEST_FILE)), "--out", s(&plots)]));
    for f in ["curves.csv", "bands.csv", "mean_gstar.svg", "max_gstar.svg"] {
        assert!(plots.join(f).is_file(), "{f}");
    }
    ok(dualprox(&["plot", s(&runs), "--out", s(&plots)]));
    let svg = std::fs::read_to_string(plots.join("mean_gstar.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("dc3") && svg.contains("penalty"));

    let json = dir.path().join("bench.json");
    let report = ok(dualprox(&[
        "bench", "--checkpoint", s(&runs.join("s3l/seed-0").join(CHECKPOINT_FILE)), "--dataset", s(&data),
        "--batch", "1", "--runs", "1", "--completion-n", "10", "--json", s(&json),
    ]));
    assert!(report.contains("speedup"));
    let parsed: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(parsed["batch"], 1);
}

#[test]
fn exit_codes_separate_bad_input_from_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dualprox(&["gen-data", "--case", "/no/such/case.m", "--out", s(&dir.path().join("x"))]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_split = dualprox(&["gen-data", "--case", s(&case("case3.m")), "--split", "1.5", "--out", s(&dir.path().join("x"))]);
    assert_eq!(bad_split.status.code(), Some(2));

    // Two units of 10 MW against 150 MW of load is rejected before sampling.
    let base = std::fs::read_to_string(case("case3.m")).unwrap();
    let short = dir.path().join("short.m");
    std::fs::write(&short, base.replace("200\t0;", "10\t0;")).unwrap();
    let out = dualprox(&["gen-data", "--case", s(&short), "--samples", "5", "--out", s(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));

    // 1 MW line ratings leave no feasible dispatch: every solve fails.
    let tight = dir.path().join("tight.m");
    let rated = base.replace("100\t100\t100", "1\t1\t1").replace("80\t80\t80", "1\t1\t1");
    std::fs::write(&tight, rated).unwrap();
    let infeasible = dualprox(&["gen-data", "--case", s(&tight), "--samples", "5", "--with-oracle", "--out", s(&dir.path().join("t"))]);
    assert_eq!(infeasible.status.code(), Some(3), "{}", String::from_utf8_lossy(&infeasible.stderr));

    let data = gen(dir.path(), "d.dpx", &["--samples", "40"]);
    let runs = dir.path().join("runs");
    let blowup = dualprox(&["train", "--dataset", s(&data), "--lr", "1e300", "--epochs", "5", "--out", s(&runs)]);
    assert_eq!(blowup.status.code(), Some(3), "{}", String::from_utf8_lossy(&blowup.stderr));
    let m = RunManifest::load(&runs.join("seed-0").join(MANIFEST_FILE)).unwrap();
    assert!(matches!(m.status, RunStatus::Failed(_)));
}

#[test]
fn training_never_reads_oracle_data() {
    let dir = tempfile::tempdir().unwrap();
    let opts = GenOptions {
        n_samples: 60,
        split: 0.8,
        seed: 3,
        split_seed: 3,
        with_oracle: true,
        sampler: SamplerConfig::default(),
    };
    let clean = dir.path().join("clean.dpx");
    let mut data = run_gen_data(&case("case3.m"), &opts, &clean).unwrap();
    for rec in &mut data.samples {
        let o = rec.oracle.as_mut().unwrap();
        o.lstar = -1e9;
        o.y.iter_mut().for_each(|v| *v = 1e6);
        o.x.iter_mut().for_each(|v| *v = f64::NAN);
    }
    let poisoned = dir.path().join("poisoned.dpx");
    data.save(&poisoned).unwrap();

    let train = TrainOptions {
        config: TrainConfig { method: Method::S3l, epochs: 3, ..Default::default() },
        validation_fraction: 0.0,
        output_scale: false,
    };
    let a = run_training(&clean, &train, &[0], &dir.path().join("a")).unwrap();
    let b = run_training(&poisoned, &train, &[0], &dir.path().join("b")).unwrap();
    let ckpt = |o: &dualprox_cli::train::RunOutcome| std::fs::read(o.dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt(&a[0]), ckpt(&b[0]));
    assert_eq!(a[0].manifest.checkpoint_sha256, b[0].manifest.checkpoint_sha256);

    let bytes = std::fs::read(&poisoned).unwrap();
    let (header, demands) = read_demands(&bytes, &header_train(&poisoned)).unwrap();
    assert_eq!(demands.len(), header.train.len());
}

fn header_train(p: &Path) -> Vec<usize> {
    Dataset::load(p).unwrap().header.train
}

#[test]
fn validation_split_takes_tail_of_training_list() {
    let train: Vec<usize> = (0..20).collect();
    let (fit, val) = validation_split(&train, 0.1);
    assert_eq!(fit, (0..18).collect::<Vec<_>>());
    assert_eq!(val, vec![18, 19]);
    let (fit, val) = validation_split(&train, 0.0);
    assert_eq!(fit.len(), 20);
    assert!(val.is_empty());
}

#[test]
fn band_spans_seeds() {
    let a = [1.0, 4.0];
    let b = [3.0, 2.0];
    let bd = band(&[&a, &b]);
    assert_eq!(bd.lo, vec![1.0, 2.0]);
    assert_eq!(bd.hi, vec![3.0, 4.0]);
    assert_eq!(bd.avg, vec![2.0, 3.0]);
}
