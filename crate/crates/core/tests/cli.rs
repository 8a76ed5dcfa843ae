use std::path::Path;
use std::process::{Command, Output};

use dubber_core::footage::codec::encode_library;
use dubber_core::footage::interchange::write_records;
use dubber_core::footage::load_library;
use dubber_core::tensor::load_checkpoint;
use tempfile::TempDir;

fn dubber(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dubber")).args(args).env_remove("MRFL_DIM_OVERRIDE").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dubber(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["gen-synthetic", "--out", p(&path)];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn gen_synthetic_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(&dir, "a.mrfl", &["--seed", "3", "--n", "40"]);
    let b = gen(&dir, "b.mrfl", &["--seed", "3", "--n", "40"]);
    let c = gen(&dir, "c.mrfl", &["--seed", "4", "--n", "40"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let lib = load_library(&a).unwrap();
    assert_eq!(lib.len(), 40);
}

#[test]
fn ingest_matches_library_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let lib_path = gen(&dir, "lib.mrfl", &["--n", "25"]);
    let lib = load_library(&lib_path).unwrap();
    let jsonl = dir.path().join("lib.jsonl");
    let mut buf = Vec::new();
    write_records(&lib, &mut buf).unwrap();
    std::fs::write(&jsonl, buf).unwrap();
    let out = dir.path().join("ingested.mrfl");
    ok(&["ingest", "--input", p(&jsonl), "--out", p(&out)]);
    assert_eq!(std::fs::read(&out).unwrap(), encode_library(&lib));

    std::fs::write(&jsonl, "{\"broken\": \n").unwrap();
    let bad = dubber(&["ingest", "--input", p(&jsonl), "--out", p(&out)]);
    assert_eq!(code(&bad), 3);
}

#[test]
fn retrieve_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let lib = gen(&dir, "lib.mrfl", &["--n", "30", "--speakers", "3"]);
    let csv = ok(&["retrieve", "--lib", p(&lib), "--k", "2", "--query-id", "0", "--query-id", "5"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("query_id,modality,rank,record_id,score,speaker_id"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 2 * 3 * 2);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert_ne!(r[0], r[3], "a query never retrieves itself");
        let s: f64 = r[4].parse().unwrap();
        assert!((-1.0..=1.0).contains(&s));
    }
    let first: Vec<&str> = rows.iter().take(6).map(|r| r[1].as_str()).collect();
    assert_eq!(first, ["scene", "scene", "face", "face", "text", "text"]);

    let specific = ok(&["retrieve", "--lib", p(&lib), "--k", "3", "--query-id", "0", "--mode", "specific"]);
    let lib_data = load_library(&lib).unwrap();
    let speaker = &lib_data.get(0).unwrap().speaker_id;
    for line in specific.lines().skip(1) {
        assert!(line.ends_with(&format!(",{speaker}")), "{line}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let lib = gen(&dir, "lib.mrfl", &["--n", "10"]);
    assert_eq!(code(&dubber(&["retrieve"])), 2);
    assert_eq!(code(&dubber(&["retrieve", "--lib", p(&lib), "--bogus"])), 2);
    let k0 = dubber(&["retrieve", "--lib", p(&lib), "--k", "0"]);
    assert_eq!(code(&k0), 2);
    assert!(k0.stdout.is_empty());
    assert_eq!(code(&dubber(&["retrieve", "--lib", p(&dir.path().join("missing"))])), 3);

    let junk = dir.path().join("junk.mrfl");
    std::fs::write(&junk, b"RIFF0000").unwrap();
    let out = dubber(&["retrieve", "--lib", p(&junk)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));

    assert_eq!(code(&dubber(&["sweep-scale", "--n", "40", "--queries", "5", "--k", "1,2"])), 2);
    assert_eq!(code(&dubber(&["sweep-scale", "--n", "40", "--queries", "5", "--fractions", "0"])), 2);
}

#[test]
fn dim_override_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let lib = gen(&dir, "lib.mrfl", &["--n", "10"]);
    let with = |value: &str| {
        Command::new(env!("CARGO_BIN_EXE_dubber"))
            .args(["retrieve", "--lib", p(&lib), "--k", "1"])
            .env("MRFL_DIM_OVERRIDE", value)
            .output()
            .unwrap()
    };
    let dims = load_library(&lib).unwrap().schema().dims();
    let exact = dims.map(|d| d.to_string()).join(",");
    assert!(with(&exact).status.success());
    let out = with("3");
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dim mismatch"));
    assert_eq!(code(&with("1,2")), 2);
    assert_eq!(code(&with("abc")), 2);
}

#[test]
fn encode_reports_stage_counts() {
    let out = ok(&["encode", "--k", "2", "--d-h", "8", "--features"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["k"], 2);
    let stages = v["stages"].as_array().unwrap();
    let counts: Vec<(usize, usize)> =
        stages.iter().map(|s| (s["nodes"].as_array().unwrap().len(), s["edges"].as_array().unwrap().len())).collect();
    assert_eq!(counts, [(3, 3), (9, 9), (15, 15)]);
    let deg = stages[2]["features"].as_array().unwrap();
    assert_eq!(deg.len(), 15);
    assert_eq!(deg[0].as_array().unwrap().len(), 8);

    let empty: serde_json::Value = serde_json::from_str(&ok(&["encode", "--k", "0", "--d-h", "4"])).unwrap();
    for s in empty["stages"].as_array().unwrap() {
        assert_eq!(s["nodes"].as_array().unwrap().len(), 3);
        assert!(s.get("features").is_none());
    }
}

#[test]
fn train_toy_writes_losses_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("loss.csv");
    let args = ["train-toy", "--seed", "2", "--steps", "20", "--d-h", "16", "--len", "6", "--out", p(&csv)];
    ok(&args);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,loss"));
    let losses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(losses.len() >= 20);
    assert!(losses.last().unwrap() < &losses[0]);

    let ckpt = load_checkpoint(csv.with_extension("adpk")).unwrap();
    assert!(ckpt.len() > 20);
    assert!(ckpt.find("mel.w").is_some());

    let first = std::fs::read(csv.with_extension("adpk")).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(&csv).unwrap(), text.as_bytes());
    assert_eq!(std::fs::read(csv.with_extension("adpk")).unwrap(), first);
}

#[test]
fn sweep_outputs() {
    let common = ["--n", "80", "--queries", "20", "--seed", "1"];
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        args.extend_from_slice(extra);
        ok(&args)
    };
    let topk = run("sweep-topk", &["--k", "1,3"]);
    let rows: Vec<&str> = topk.lines().collect();
    assert_eq!(rows[0], "K,mode,purity,mean_score");
    let keys: Vec<String> = rows[1..].iter().map(|r| r.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["1,agnostic", "1,specific", "3,agnostic", "3,specific"]);

    let metric = run("sweep-metric", &["--k", "2"]);
    let rows: Vec<&str> = metric.lines().collect();
    assert_eq!(rows[0], "metric,K,purity");
    assert_eq!(rows.len(), 1 + 3);

    let scale = run("sweep-scale", &["--k", "2", "--fractions", "0.5,1"]);
    let rows: Vec<&str> = scale.lines().collect();
    assert_eq!(rows[0], "fraction,purity");
    assert_eq!(rows.len(), 3);
    // The full library reproduces the top-K purity at the same K.
    let full: f64 = rows[2].split(',').nth(1).unwrap().parse().unwrap();
    let topk2 = run("sweep-topk", &["--k", "2", "--mode", "agnostic"]);
    let expect: f64 = topk2.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(full, expect);
}

#[test]
fn grad_check_passes() {
    let out = ok(&["grad-check", "--d-h", "4", "--len", "3", "--k", "1"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("param,max_rel_error,max_abs_error,grad_max_abs"));
    let mut n = 0;
    for l in lines {
        let rel: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!(rel < 1e-4, "{l}");
        n += 1;
    }
    assert!(n > 20);
}
