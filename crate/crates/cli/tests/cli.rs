use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bitlsh::io::{gen_uniform, read_bin, write_bin, write_text};
use bitlsh::{BitVector, LshIndex};

fn bitlsh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitlsh"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run bitlsh")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen_planted_files(dir: &Path) -> usize {
    let out = bitlsh(
        dir,
        &[
            "gen", "--n", "1024", "--d", "128", "--r", "8", "--plant", "8", "--seed", "7", "--out",
            "data.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    stdout(&out).trim().parse().unwrap()
}

#[test]
fn gen_writes_dataset_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let planted = gen_planted_files(dir.path());
    let ds = read_bin(dir.path().join("data.bin")).unwrap();
    assert_eq!((ds.len(), ds.dim()), (1024, 128));
    let q = fs::read_to_string(dir.path().join("data.bin.query")).unwrap();
    let q = BitVector::parse(q.trim_end()).unwrap();
    assert_eq!(ds.vectors()[planted].hamming(&q).unwrap(), 8);
}

#[test]
fn gen_rejects_plant_beyond_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = bitlsh(
        dir.path(),
        &[
            "gen", "--n", "10", "--d", "128", "--r", "8", "--plant", "200", "--out", "x.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("x.bin").exists());
}

#[test]
fn build_prints_derived_parameters() {
    let dir = tempfile::tempdir().unwrap();
    gen_planted_files(dir.path());
    let out = bitlsh(
        dir.path(),
        &[
            "build",
            "--input",
            "data.bin",
            "--r",
            "8",
            "--eps",
            "1",
            "--delta",
            "0.0009765625",
            "--out",
            "ix.snap",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("t"), "4");
    assert_eq!(col("L"), "379");
    assert_eq!(col("c"), "0.5");
    let ix = LshIndex::restore(&fs::read(dir.path().join("ix.snap")).unwrap()).unwrap();
    assert_eq!(ix.num_tables(), 379);
}

#[test]
fn build_rejects_zero_radius() {
    let dir = tempfile::tempdir().unwrap();
    gen_planted_files(dir.path());
    let out = bitlsh(
        dir.path(),
        &[
            "build", "--input", "data.bin", "--r", "0", "--eps", "1", "--out", "ix.snap",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn query_rows_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_uniform(64, 40, 3).unwrap();
    write_text(dir.path().join("data.txt"), &ds).unwrap();
    let out = bitlsh(
        dir.path(),
        &[
            "build", "--input", "data.txt", "--r", "3", "--eps", "1", "--out", "ix.snap",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let queries = format!("{}\n0101\n{}\n", ds.vectors()[5], ds.vectors()[9]);
    fs::write(dir.path().join("q.txt"), queries).unwrap();

    let out = bitlsh(
        dir.path(),
        &["query", "--index", "ix.snap", "--queries", "q.txt"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "found");
    assert_eq!(rows[0][3], "0");
    assert_eq!(rows[1][1], "error");
    assert_eq!(rows[2][1], "found");
    assert_eq!(rows[2][3], "0");

    let out = bitlsh(
        dir.path(),
        &[
            "query",
            "--index",
            "ix.snap",
            "--queries",
            "q.txt",
            "--bank",
            "5",
            "--budget",
            "2.0",
            "--out",
            "rows.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with(
        "query_id,kind,witness_id,distance,candidates_scanned,tables_probed,wall_micros"
    ));
}

#[test]
fn query_on_planted_instance_finds_the_neighbor() {
    let dir = tempfile::tempdir().unwrap();
    let planted = gen_planted_files(dir.path());
    bitlsh(
        dir.path(),
        &[
            "build", "--input", "data.bin", "--r", "8", "--eps", "1", "--seed", "1", "--out",
            "ix.snap",
        ],
    );
    let out = bitlsh(
        dir.path(),
        &["query", "--index", "ix.snap", "--queries", "data.bin.query"],
    );
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "found");
    assert_eq!(row[2], planted.to_string());
    assert_eq!(row[3], "8");
}

#[test]
fn verify_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bitlsh(
        dir.path(),
        &["verify", "--suite", "lemma1", "--trials", "1"],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = bitlsh(dir.path(), &["verify", "--suite", "lemma9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = bitlsh(dir.path(), &["verify"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_lemma1_and_lemma2b_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["lemma1", "lemma2b"] {
        let out = bitlsh(dir.path(), &["verify", "--suite", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}");
        let text = stdout(&out);
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("quantity,trials,empirical,theoretical,stderr,z")
        );
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .skip(1)
            .map(|f| f.parse().unwrap())
            .collect();
        assert!(row[4].abs() <= 3.0);
        if suite == "lemma2b" {
            assert!(row[1] <= row[2] + 3.0 * row[3]);
        }
    }
}

#[test]
fn bench_single_point_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write_bin(dir.path().join("one.bin"), &gen_uniform(1, 32, 1).unwrap()).unwrap();
    write_text(dir.path().join("q.txt"), &gen_uniform(4, 32, 2).unwrap()).unwrap();
    let out = bitlsh(
        dir.path(),
        &[
            "bench",
            "--input",
            "one.bin",
            "--r",
            "2",
            "--eps",
            "1",
            "--queries",
            "q.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn bench_rejects_mismatched_queries() {
    let dir = tempfile::tempdir().unwrap();
    write_bin(dir.path().join("d.bin"), &gen_uniform(16, 32, 1).unwrap()).unwrap();
    write_text(dir.path().join("q.txt"), &gen_uniform(4, 31, 2).unwrap()).unwrap();
    let out = bitlsh(
        dir.path(),
        &[
            "bench",
            "--input",
            "d.bin",
            "--r",
            "2",
            "--eps",
            "1",
            "--queries",
            "q.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stdin_and_stdout_paths() {
    use std::io::Write;
    use std::process::Stdio;
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_uniform(20, 16, 4).unwrap();
    let mut text = Vec::new();
    bitlsh::io::write_text_to(&ds, &mut text).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_bitlsh"))
        .args([
            "build", "--input", "-", "--r", "2", "--eps", "1", "--out", "ix.snap",
        ])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&text).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let ix = LshIndex::restore(&fs::read(dir.path().join("ix.snap")).unwrap()).unwrap();
    assert_eq!(ix.points(), ds.vectors());
}
