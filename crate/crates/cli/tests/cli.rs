use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn corrhash(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrhash"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn corrhash")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TOKENIZED: &str = "\
1\tapple banana apple fruit
1\tbanana fruit sweet apple
2\tcar engine wheel road
2\troad car fast engine
1\tfruit sweet banana
2\twheel engine car
1\tapple fruit
2\troad wheel
1\tsweet banana apple
2\tcar road engine
1\tbanana apple sweet
2\tengine fast road
";

const SMALL_MODEL: &[&str] = &[
    "--rank",
    "2",
    "--components",
    "2",
    "--hidden",
    "8",
    "--epochs",
    "3",
    "--batch-size",
    "4",
];

#[test]
fn every_subcommand_has_help() {
    let dir = TempDir::new().unwrap();
    for sub in ["build-vocab", "train", "hash", "query", "eval", "verify", "bench"] {
        let o = corrhash(dir.path(), &[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
        assert!(stdout(&o).contains("Usage:"), "{sub}");
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = corrhash(dir.path(), &["train", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config not found"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_and_unknown_key_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(corrhash(dir.path(), &["train", "--bogus"]).status.code(), Some(2));
    fs::write(dir.path().join("run.cfg"), "bits = 8\nbitz = 9\n").unwrap();
    let o = corrhash(dir.path(), &["train", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key `bitz`"), "{}", stderr(&o));
}

#[test]
fn missing_corpus_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = corrhash(dir.path(), &["train", "--corpus", "absent.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus not found"), "{}", stderr(&o));
}

#[test]
fn verify_passes() {
    let dir = TempDir::new().unwrap();
    let o = corrhash(dir.path(), &["verify", "--seed", "7", "--out-dir", "v"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("v/verify.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 5);
    assert!(tsv.lines().skip(1).all(|l| l.split('\t').nth(3) == Some("true")), "{tsv}");
}

#[test]
fn pipeline_writes_only_under_out_dir() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    fs::write(root.join("tok.txt"), TOKENIZED).unwrap();

    let o = corrhash(root, &["build-vocab", "--input", "tok.txt", "--out-dir", "out", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let data = ["--corpus", "out/corpus.txt", "--vocab", "out/vocab.txt", "--splits", "out/splits.txt"];

    let mut args = vec!["train", "--out-dir", "out", "--bits", "8", "--k-at", "3"];
    args.extend(data);
    args.extend(SMALL_MODEL);
    let o = corrhash(root, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("checkpoint: out/model.ckpt"));
    let log = fs::read_to_string(root.join("out/train.log")).unwrap();
    assert!(log.lines().count() > 1);

    let mut args = vec!["hash", "--out-dir", "out", "--checkpoint", "out/model.ckpt"];
    args.extend(data);
    let o = corrhash(root, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let codes = fs::read_to_string(root.join("out/codes.txt")).unwrap();
    assert!(codes.starts_with("# bits 8\n"));
    assert_eq!(codes.lines().count(), 1 + TOKENIZED.lines().count());

    let mut args = vec!["query", "--out-dir", "out", "--checkpoint", "out/model.ckpt", "--doc", "0", "--k-at", "4"];
    args.extend(data);
    let o = corrhash(root, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let ranked: Vec<&str> = out.lines().skip(2).collect();
    assert_eq!(ranked.len(), 4, "{out}");
    assert!(ranked.iter().all(|l| l.split('\t').nth(1) != Some("0")), "query returned itself");

    let mut args = vec!["query", "--out-dir", "out", "--checkpoint", "out/model.ckpt", "--doc", "99"];
    args.extend(data);
    assert_eq!(corrhash(root, &args).status.code(), Some(2));

    let mut args = vec!["eval", "--out-dir", "out", "--bits", "4,8", "--k-at", "2"];
    args.extend(data);
    args.extend(SMALL_MODEL);
    let o = corrhash(root, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(root.join("out/eval.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "method\t4bits\t8bits");
    assert!(rows[1].starts_with("model\t") && rows[2].starts_with("lsh\t"), "{table}");
    assert!(root.join("out/model_4.ckpt").is_file() && root.join("out/eval.csv").is_file());

    let mut top: Vec<String> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["out", "tok.txt"]);
}

#[test]
fn bench_on_synthetic_corpus() {
    let dir = TempDir::new().unwrap();
    let o = corrhash(
        dir.path(),
        &[
            "bench",
            "--out-dir",
            "b",
            "--bits",
            "8",
            "--ranks",
            "0,2",
            "--ks",
            "1,2",
            "--synthetic-docs",
            "100",
            "--hidden",
            "8",
            "--epochs",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tsv = fs::read_to_string(dir.path().join("b/bench.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 5);
}
