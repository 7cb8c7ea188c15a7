use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tlh_core::eval::MapReport;
use tlh_core::{codes, EncoderParams, FeatureMatrix, LabelStore, TrainReport};

fn tlh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlh"))
        .args(args)
        .env_remove("TLH_OUTPUT_DIR")
        .output()
        .expect("run tlh")
}

fn ok(args: &[&str]) -> String {
    let out = tlh(args);
    assert!(
        out.status.success(),
        "tlh {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    tlh(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic benchmark plus a config that trains it in well under a second.
fn small_benchmark(dir: &Path) -> PathBuf {
    ok(&[
        "make-synthetic", "--out", s(dir), "--train", "300", "--query", "60", "--database", "600",
        "--dim", "16", "--classes", "4",
    ]);
    let conf = dir.join("experiment.conf");
    let mut text = fs::read_to_string(&conf).unwrap();
    text.push_str("triplets_per_epoch = 20000\nbatch_size = 20000\nlearning_rate = 0.07\nepochs = 4\n");
    fs::write(&conf, text).unwrap();
    conf
}

#[test]
fn ingest_writes_features_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, "0,1.5,2,3,4\n1,-0.1,0.2,0.3,0.4\n0;2,1e-3,7,8,9\n").unwrap();
    let fv = dir.path().join("x.fvec");
    let lb = dir.path().join("x.labels");
    let stdout = ok(&["ingest", "--input", s(&raw), "--features", s(&fv), "--labels", s(&lb)]);
    assert!(stdout.contains("N=3 D=4 labels=multi"), "{stdout}");

    let bytes = fs::read(&fv).unwrap();
    assert_eq!(&bytes[..4], b"FVC1");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    assert_eq!(bytes.len(), 12 + 3 * 4 * 4);

    let m = FeatureMatrix::read_fvc(&mut fs::File::open(&fv).unwrap()).unwrap();
    let expected: Vec<f64> = [1.5f32, 2.0, 3.0, 4.0, -0.1, 0.2, 0.3, 0.4, 1e-3, 7.0, 8.0, 9.0]
        .iter()
        .map(|&v| v as f64)
        .collect();
    assert_eq!(m.data(), &expected[..]);
    let store = LabelStore::read(fs::read(&lb).unwrap().as_slice(), None).unwrap();
    assert_eq!(store.labels(2), &[0, 2]);
}

#[test]
fn ingest_rejects_bad_rows_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, "0,1,2\n1,NaN,2\n").unwrap();
    let fv = dir.path().join("x.fvec");
    let lb = dir.path().join("x.labels");
    let out = tlh(&["ingest", "--input", s(&raw), "--features", s(&fv), "--labels", s(&lb)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn null_training_reproduces_initial_codes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    ok(&["train", "-q", "-c", s(&conf), "--set", "learning_rate=0", "--set", "seed=9"]);
    ok(&["encode", "-c", s(&conf)]);

    let features = FeatureMatrix::read_fvc(&mut fs::File::open(dir.path().join("database.fvec")).unwrap()).unwrap();
    let init = EncoderParams::init(tlh_core::Architecture::Linear, 16, 0, 12, 9).unwrap();
    let expected: Vec<_> = (0..features.rows()).map(|i| init.encode(features.row(i)).unwrap()).collect();
    let (_, got) = codes::read_codes(&mut fs::File::open(dir.path().join("run/database.bhc")).unwrap()).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn pipeline_outputs_parse_with_library_readers() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    ok(&["train", "-q", "-c", s(&conf), "--set", "checkpoint_every=2"]);
    ok(&["encode", "-c", s(&conf)]);
    ok(&["search", "-c", s(&conf), "--set", "search_k=5"]);
    let stdout = ok(&["eval", "-c", s(&conf)]);
    assert!(stdout.starts_with("MAP="), "{stdout}");
    let run = dir.path().join("run");

    let report = TrainReport::read_csv(fs::read(run.join("train_report.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(report.epochs.len(), 4);
    assert!(run.join("checkpoints/epoch_0002.enc").exists());
    assert!(run.join("checkpoints/epoch_0004.enc").exists());
    let ckpt = EncoderParams::read_checkpoint(&mut fs::File::open(run.join("checkpoints/epoch_0004.enc")).unwrap()).unwrap();
    let last = EncoderParams::read_checkpoint(&mut fs::File::open(run.join("encoder.enc")).unwrap()).unwrap();
    assert_eq!(ckpt, last);

    let map = MapReport::read_csv(fs::read(run.join("eval.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(map.per_query.len(), 60);
    assert_eq!(map.k, 600);

    let mut rdr = csv::Reader::from_path(run.join("search.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["query_id", "rank", "id", "distance"]);
    let rows: Vec<(u64, usize, u64, u32)> = rdr.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 60 * 5);
    assert_eq!(rows[0].1, 1);
    assert!(rows[..5].windows(2).all(|w| w[0].3 <= w[1].3));

    let used = fs::read_to_string(run.join("experiment.conf")).unwrap();
    assert!(used.contains("checkpoint_every = 2"));
}

#[test]
fn eval_of_single_class_toy_set_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let raw: String = (0..12).map(|i| format!("3,{},{}\n", i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
    fs::write(p.join("raw.txt"), &raw).unwrap();
    for (name, first) in [("db", "0"), ("q", "100")] {
        ok(&[
            "ingest", "--input", s(&p.join("raw.txt")), "--features", s(&p.join(format!("{name}.fvec"))),
            "--labels", s(&p.join(format!("{name}.labels"))), "--first-id", first,
        ]);
    }
    let init = EncoderParams::init(tlh_core::Architecture::Linear, 2, 0, 8, 0).unwrap();
    init.write_checkpoint(&mut fs::File::create(p.join("e.enc")).unwrap()).unwrap();
    fs::write(
        p.join("toy.conf"),
        "query_features = q.fvec\nquery_labels = q.labels\ndatabase_features = db.fvec\n\
         database_labels = db.labels\nencoder = e.enc\noutput_dir = out\n",
    )
    .unwrap();
    let conf = p.join("toy.conf");
    ok(&["encode", "-c", s(&conf)]);
    let stdout = ok(&["eval", "-c", s(&conf)]);
    assert!(stdout.starts_with("MAP=1.000000"), "{stdout}");
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    let c = s(&conf);
    assert_eq!(code(&["train", "-q", "-c", c, "--set", "nonsense=1"]), 1);
    assert_eq!(code(&["train", "-q", "-c", c, "--set", "batch_size="]), 1);
    assert_eq!(code(&["train", "-q", "-c", c, "--set", "lr_decay_factor=2"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["train", "-q", "-c", c, "--set", "train_features=missing.fvec"]), 2);
    assert_eq!(code(&["eval", "-c", c, "--set", "output_dir=nowhere"]), 2);
    assert_eq!(code(&["train", "-q", "-c", c, "--set", "learning_rate=1e12", "--set", "epochs=40"]), 3);

    // Every training image shares one label, so no negative exists.
    let p = dir.path();
    fs::write(p.join("one.txt"), "1,0.5\n1,0.25\n1,1.0\n").unwrap();
    ok(&["ingest", "--input", s(&p.join("one.txt")), "--features", s(&p.join("one.fvec")), "--labels", s(&p.join("one.labels"))]);
    assert_eq!(
        code(&[
            "train", "-q", "-c", c, "--set", &format!("train_features={}", s(&p.join("one.fvec"))),
            "--set", &format!("train_labels={}", s(&p.join("one.labels"))),
        ]),
        4
    );
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    let env_dir = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_tlh"))
        .args(["train", "-q", "-c", s(&conf), "--set", "epochs=1"])
        .env("TLH_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("encoder.enc").exists());

    let flag_dir = dir.path().join("from_flag");
    let out = Command::new(env!("CARGO_BIN_EXE_tlh"))
        .args(["train", "-q", "-c", s(&conf), "--set", "epochs=1", "--output-dir", s(&flag_dir)])
        .env("TLH_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("encoder.enc").exists());

    let set_dir = dir.path().join("from_set");
    ok(&[
        "train", "-q", "-c", s(&conf), "--set", "epochs=1", "--output-dir", s(&flag_dir),
        "--set", &format!("output_dir={}", s(&set_dir)),
    ]);
    assert!(set_dir.join("encoder.enc").exists());
}

#[test]
fn single_point_sweep_matches_eval() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    let c = s(&conf);
    ok(&["train", "-q", "-c", c, "--set", "alpha=2"]);
    ok(&["encode", "-c", c]);
    ok(&["eval", "-c", c]);
    let eval = MapReport::read_csv(fs::read(dir.path().join("run/eval.csv")).unwrap().as_slice()).unwrap();
    ok(&["sweep", "-c", c, "--dimension", "alpha", "--set", "alpha_grid=2"]);
    let sweep = fs::read_to_string(dir.path().join("run/sweep_alpha.csv")).unwrap();
    assert_eq!(sweep, format!("setting,map,status\n2,{},ok\n", eval.map));
}

#[test]
fn failed_sweep_keeps_partial_results_and_parallel_matches() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_benchmark(dir.path());
    let c = s(&conf);
    let args = ["sweep", "-c", c, "--dimension", "lambda", "--set", "lambda_grid=1e9,0.1,100,1e12", "--set", "epochs=40"];
    let out = tlh(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let seq = fs::read_to_string(dir.path().join("run/sweep_lambda.csv")).unwrap();
    let lines: Vec<&str> = seq.lines().collect();
    assert_eq!(lines.len(), 4, "{seq}");
    assert!(lines[1].starts_with("0.1,") && lines[1].ends_with(",ok"));
    assert!(lines[2].starts_with("100,") && lines[2].ends_with(",ok"));
    assert!(lines[3].starts_with("1000000000,,") && lines[3].contains("failed: training"), "{seq}");

    let mut par_args = args.to_vec();
    par_args.push("--parallel");
    assert_eq!(tlh(&par_args).status.code(), Some(3));
    let par = fs::read_to_string(dir.path().join("run/sweep_lambda.csv")).unwrap();
    assert_eq!(par, seq);

    assert_eq!(code(&["sweep", "-c", c, "--dimension", "alpha"]), 1);
    assert_eq!(code(&["sweep", "-c", c, "--dimension", "beta", "--set", "alpha_grid=1"]), 1);
    assert_eq!(code(&["sweep", "-c", c, "--dimension", "train_size", "--set", "train_size_grid=100,100000"]), 1);
}
