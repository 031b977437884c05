use std::process::{Command, Output};

fn ksum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn verify_sweep_exits_zero() {
    let o = ksum(&["verify", "--solver", "wang-lv", "--k", "4", "--n", "10", "--seeds", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["runs"], 200);
    assert_eq!(v["disagreements"].as_array().unwrap().len(), 0);
}

#[test]
fn solve_reports_are_reproducible() {
    let args = ["solve", "--solver", "lv-ksum", "--k", "4", "--delta", "0.5", "--n", "40", "--seed", "7"];
    let a: serde_json::Value = serde_json::from_str(stdout(&ksum(&args)).trim()).unwrap();
    let b: serde_json::Value = serde_json::from_str(stdout(&ksum(&args)).trim()).unwrap();
    for field in ["found", "witness", "peak_cells", "seed"] {
        assert_eq!(a[field], b[field], "{field}");
    }
    assert!(a["elapsed_ns"].is_u64());
}

#[test]
fn gen_then_solve_from_file() {
    let path = std::env::temp_dir().join(format!("ksum-cli-test-{}.txt", std::process::id()));
    let p = path.to_str().unwrap();
    let o = ksum(&["gen", "--k", "3", "--n", "12", "--kind", "planted", "--seed", "3", "--out", p]);
    assert!(o.status.success());
    let o = ksum(&["solve", "--solver", "three-sum-oracle", "--delta", "0.5", "--input", p]);
    std::fs::remove_file(&path).ok();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["found"], true);
}

#[test]
fn repeat_derives_distinct_seeds() {
    let o = ksum(&["solve", "--solver", "wang-lv", "--k", "4", "--n", "8", "--seed", "1", "--repeat", "3"]);
    let seeds: Vec<u64> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds.len(), 3);
    assert_eq!(seeds[0], 1);
    assert!(seeds[1] != seeds[0] && seeds[2] != seeds[1]);
}

#[test]
fn errors_exit_nonzero() {
    assert!(!ksum(&["solve", "--solver", "nope", "--k", "2", "--n", "4"]).status.success());
    let o = ksum(&["solve", "--solver", "two-sum", "--k", "3", "--n", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not support"));
    let o = ksum(&[
        "solve", "--solver", "mitm", "--k", "4", "--n", "64", "--policy", "strict", "--budget", "0.01",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_writes_csv() {
    let path = std::env::temp_dir().join(format!("ksum-cli-bench-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let o = ksum(&[
        "bench", "--solver", "two-sum", "--delta", "0.5", "--sizes", "64..512", "--seeds", "2", "--json", p,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("solver,k,n,delta,seed,elapsed_ns,peak_cells,found"));
    assert_eq!(lines.count(), 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(summary["space"]["sizes"].as_array().unwrap().len(), 4);
}
