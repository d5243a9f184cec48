use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crmvip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crmvip"))
        .args(args)
        .output()
        .expect("spawn crmvip")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn first_instance(dir: &Path) -> std::path::PathBuf {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files.remove(0)
}

#[test]
fn generate_solve_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = crmvip(&[
        "generate",
        "--example",
        "1",
        "--scenario",
        "A",
        "--seed",
        "5",
        "--instances",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // one instance per (n, m) pair of scenario A
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);

    let inst = first_instance(dir.path());
    let trace = dir.path().join("trace.csv");
    let out = crmvip(&[
        "solve",
        "--instance",
        path(&inst),
        "--solver",
        "CRM-VIP1",
        "--trace",
        path(&trace),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["algorithm"], "CRM-VIP1");
    assert_eq!(result["status"], "Converged");
    assert!(result["natural_residual"].as_f64().is_some());
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.lines().count() > 1);

    let result_file = dir.path().join("result.json");
    fs::write(&result_file, &out.stdout).unwrap();
    let out = crmvip(&[
        "check",
        "--instance",
        path(&inst),
        "--point",
        path(&result_file),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let chk: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(chk["natural_residual"].as_f64().unwrap() >= 0.0);
    assert!(chk["feasibility"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bench_writes_all_tables_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = crmvip(&[
            "bench",
            "--example",
            "2",
            "--scenario",
            "A",
            "--seed",
            "9",
            "--instances",
            "1",
            "--repetitions",
            "1",
            "--out",
            path(d.path()),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "rows.csv",
        "medians.csv",
        "speedups.csv",
        "profile_iter.csv",
        "profile_time.csv",
        "metadata.json",
    ] {
        assert!(a.path().join(f).exists(), "missing {f}");
    }
    let strip = |d: &Path| -> Vec<String> {
        let text = fs::read_to_string(d.join("rows.csv")).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "wall_time_ns").unwrap();
        lines
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(col);
                f.join(",")
            })
            .collect()
    };
    let (ra, rb) = (strip(a.path()), strip(b.path()));
    assert_eq!(ra.len(), 4 * 6);
    assert_eq!(ra, rb);
}

#[test]
fn bad_input_exits_with_code_2() {
    let out = crmvip(&[
        "solve",
        "--instance",
        "/nonexistent/file.json",
        "--solver",
        "EGM",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = crmvip(&["solve", "--instance", "x.json", "--solver", "not-a-solver"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    crmvip(&[
        "generate",
        "--example",
        "3",
        "--scenario",
        "A",
        "--instances",
        "1",
        "--out",
        path(dir.path()),
    ]);
    let inst = first_instance(dir.path());
    let point = dir.path().join("point.json");
    fs::write(&point, "[1.0, 2.0, 3.0]").unwrap();
    let out = crmvip(&["check", "--instance", path(&inst), "--point", path(&point)]);
    assert_eq!(out.status.code(), Some(2));
}
