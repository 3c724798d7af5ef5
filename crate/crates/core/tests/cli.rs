use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedstpa::data::{generate_blobs, read_dataset};

const SMALL: &str = r#"{"scenario":"cross_silo","n_clients":6,"n_malicious":2,"rounds":3,
    "attack":{"kind":"byzantine_gaussian"},"rule":{"kind":"stpa"},"seed":3,
    "data":{"kind":"blobs","n_classes":3,"dim":4,"samples_per_class":30,"test_per_class":10,"spread":0.3}}"#;

fn fedstpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedstpa"))
        .args(args)
        .env_remove("BB_SEED")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_one_line_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let res = fedstpa(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let jsonl = fs::read_to_string(out.join("rounds.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["round"], i);
        assert!(v["alpha"].is_number());
    }
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "round,test_error_pct,alpha,eta,benign_kept,malicious_selected,discarded");
}

#[test]
fn seed_flag_and_env_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMALL);
    let run = |extra: &[&str], env: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedstpa"));
        cmd.args(["run", "--config", &cfg, "--out", out.to_str().unwrap()]).args(extra);
        match env {
            Some(v) => cmd.env("BB_SEED", v),
            None => cmd.env_remove("BB_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(out.join("rounds.jsonl")).unwrap()
    };
    let file = run(&[], None, "a");
    let env = run(&[], Some("3"), "b");
    let flag = run(&["--seed", "3"], Some("99"), "c");
    let other = run(&["--seed", "4"], None, "d");
    assert_eq!(file, env);
    assert_eq!(file, flag);
    assert_ne!(file, other);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    assert_eq!(fedstpa(&[]).status.code(), Some(2));
    assert_eq!(fedstpa(&["run", "--config", "/nonexistent.json", "--out", out]).status.code(), Some(2));

    let unknown = write(dir.path(), "u.json", &SMALL.replacen("\"seed\":3", "\"seed\":3,\"colour\":1", 1));
    assert_eq!(fedstpa(&["run", "--config", &unknown, "--out", out]).status.code(), Some(2));

    let infeasible = write(dir.path(), "k.json", &SMALL.replace(r#"{"kind":"stpa"}"#, r#"{"kind":"krum","f":4,"m":1}"#));
    assert_eq!(fedstpa(&["run", "--config", &infeasible, "--out", out]).status.code(), Some(2));

    let cfg = write(dir.path(), "c.json", SMALL);
    assert_eq!(
        fedstpa(&["sweep", "--config", &cfg, "--fractions", "0.6", "--out", out]).status.code(),
        Some(2)
    );

    let missing_data = write(
        dir.path(),
        "m.json",
        r#"{"scenario":"cross_silo","n_clients":2,"n_malicious":0,"rounds":1,
            "attack":{"kind":"none"},"rule":{"kind":"fed_avg"},"seed":0,
            "data":{"kind":"file","train":"/nonexistent.fsds"}}"#,
    );
    assert_eq!(fedstpa(&["run", "--config", &missing_data, "--out", out]).status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        &SMALL.replace("\"n_clients\":6", "\"n_clients\":20").replace("\"rounds\":3", "\"rounds\":2"),
    );
    let out = dir.path().join("sweep");
    let res = fedstpa(&["sweep", "--config", &cfg, "--fractions", "0.05,0.1,0.2,0.34", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["fraction", "rule", "attack", "mean_final_error", "std_final_error"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for (row, f) in rows.iter().zip(["0.05", "0.1", "0.2", "0.34"]) {
        assert_eq!(&row[0], f);
        assert!(out.join(format!("fraction_{f}")).join("rounds.jsonl").exists());
    }
}

#[test]
fn gen_data_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.fsds");
    let b = dir.path().join("b.fsds");
    for p in [&a, &b] {
        let res = fedstpa(&[
            "gen-data", "--kind", "blobs", "--classes", "2", "--dim", "3",
            "--samples-per-class", "100", "--spread", "1.0", "--seed", "42",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let loaded = read_dataset(&a).unwrap();
    assert_eq!(loaded, generate_blobs(2, 3, 100, 1.0, 42).unwrap());
    assert_eq!(loaded.len(), 200);

    let zero = fedstpa(&["gen-data", "--samples-per-class", "0", "--out", a.to_str().unwrap()]);
    assert_eq!(zero.status.code(), Some(2));
}
