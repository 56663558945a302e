use std::path::Path;
use std::process::{Command, Output};

fn qecmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qecmatch")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decode_is_byte_identical_for_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for decoder in ["parity", "uf", "limited:2", "fusion:balanced:2:2"] {
        for out in [&a, &b] {
            let o = qecmatch(&["decode", "--code", "5,6,0.02", "--shots", "30", "--seed", "17", "--decoder", decoder, "--out", path_str(out)]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{decoder}");
    }
}

#[test]
fn decode_of_generated_file_matches_direct_decode() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, from_file, direct) = (dir.path().join("g.json"), dir.path().join("f.json"), dir.path().join("d.json"));
    let args = ["--code", "3,4,0.03", "--shots", "20", "--seed", "5"];
    assert_eq!(code(&qecmatch(&[&["generate"][..], &args, &["--out", path_str(&gen)]].concat())), 0);
    let o = qecmatch(&[&["decode"][..], &args, &["--input", path_str(&gen), "--out", path_str(&from_file)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&qecmatch(&[&["decode"][..], &args, &["--out", path_str(&direct)]].concat())), 0);
    let results = |p: &Path| serde_json::from_slice::<serde_json::Value>(&std::fs::read(p).unwrap()).unwrap()["results"].clone();
    assert_eq!(results(&from_file), results(&direct));
}

#[test]
fn verify_passes_on_a_thousand_small_instances() {
    let mut total = 0;
    for (spec, seed) in [("3,1,0.05", 1), ("3,8,0.02", 2), ("5,4,0.01", 3), ("5,8,0.005", 4), ("7,2,0.01", 5), ("7,8,0.003", 6)] {
        let o = qecmatch(&["verify", "--code", spec, "--shots", "170", "--seed", &seed.to_string(), "--skip-large"]);
        assert_eq!(code(&o), 0, "{spec}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        total += report["checked"].as_u64().unwrap();
    }
    assert!(total >= 1000, "{total}");
}

#[test]
fn union_find_mismatch_exits_one() {
    let o = qecmatch(&["verify", "--code", "5,5,0.02", "--shots", "300", "--seed", "1", "--decoder", "uf", "--skip-large"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stderr).contains("differ from the oracle"));
}

#[test]
fn configuration_and_io_errors_have_distinct_codes() {
    assert_eq!(code(&qecmatch(&["decode", "--code", "4,2,0.01", "--seed", "1"])), 2);
    assert_eq!(code(&qecmatch(&["decode", "--code", "3,2,0.01", "--seed", "1", "--decoder", "blossom"])), 2);
    assert_eq!(code(&qecmatch(&["bench", "--code", "3,2,0.01", "--seed", "1", "--decoder", "fusion", "--plan", "tall,3"])), 2);
    assert_eq!(code(&qecmatch(&["bench", "--code", "3,2,0.01", "--seed", "1", "--shots", "0"])), 2);
    assert_eq!(code(&qecmatch(&["verify", "--code", "7,8,0.05", "--seed", "1", "--shots", "3"])), 2);
    assert_eq!(code(&qecmatch(&["decode", "--code", "3,2,0.01", "--seed", "1", "--out", "/nonexistent-dir/x.json"])), 3);
    assert_eq!(code(&qecmatch(&["decode", "--code", "3,2,0.01", "--seed", "1", "--input", "/nonexistent-dir/in.json"])), 3);
}

#[test]
fn bench_writes_csv_with_meta_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = qecmatch(&[
        "bench", "--code", "5,20,0.005", "--decoder", "fusion", "--plan", "linear,4", "--workers", "2", "--shots", "4",
        "--seed", "3", "--schedule", "stream", "--out", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# qecmatch"));
    assert!(lines[1].contains("\"seed\":3"));
    assert!(lines[3].starts_with("d,N,M,decoder,workers,seed,shot"));
    assert_eq!(lines.len(), 8);
    assert!(lines[4].starts_with("5,20,4,fusion:linear:4:2,2,3,0,"));
}
