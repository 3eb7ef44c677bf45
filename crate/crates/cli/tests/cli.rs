use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

/// A 5-class iso dataset of 6-vertex graphs, 6 copies each.
fn tiny_iso(dir: &Path) {
    let out = pinet(&["generate-iso", "--out", s(dir), "--n", "6", "--copies", "6"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const FAST: [&str; 6] = ["--epochs", "3", "--hidden", "4,3", "--batch-size", "8"];

#[test]
fn generate_iso_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = pinet(&["generate-iso", "--out", s(d.path()), "--n", "6"]);
        assert!(out.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(
            fs::read(a.path().join(&n)).unwrap(),
            fs::read(b.path().join(&n)).unwrap()
        );
    }
    let ds = pinet::data::parse_tu_dataset(a.path(), "ISO_n6_p0.3_s0").unwrap();
    assert_eq!(ds.len(), 500);
    assert!(ds.graphs().iter().all(|g| g.num_vertices() == 6));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config"]["generator"]["n_vertices"], 6);
}

#[test]
fn generation_failure_exits_nonzero() {
    let d = tempfile::tempdir().unwrap();
    // two vertices admit one graph shape, so five distinct classes are impossible
    let out = pinet(&[
        "generate-iso",
        "--out",
        s(d.path()),
        "--n",
        "2",
        "--max-attempts",
        "3",
    ]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn iso_curve_rows_and_aggregates() {
    let d = tempfile::tempdir().unwrap();
    tiny_iso(d.path());
    let csv = d.path().join("out/curve.csv");
    let mut args = vec![
        "iso-curve",
        "--data",
        s(d.path()),
        "--sizes",
        "1,2",
        "--trials",
        "3",
        "--model",
        "pinet-gcn,gcn-mean",
        "--out",
        s(&csv),
    ];
    args.extend(FAST);
    let svg = d.path().join("out/curve.svg");
    args.extend(["--svg", s(&svg)]);
    let out = pinet(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_csv(&csv);
    let raw: Vec<_> = rows
        .iter()
        .filter(|r| r[2].parse::<usize>().is_ok())
        .collect();
    assert_eq!(raw.len(), 2 * 2 * 3);
    for model in ["pinet-gcn", "gcn-mean"] {
        for size in ["1", "2"] {
            let accs: Vec<f64> = raw
                .iter()
                .filter(|r| r[0] == model && r[1] == size)
                .map(|r| r[3].parse().unwrap())
                .collect();
            let mean_row = rows
                .iter()
                .find(|r| r[0] == model && r[1] == size && r[2] == "mean")
                .unwrap();
            let m: f64 = mean_row[3].parse().unwrap();
            assert!((m - accs.iter().sum::<f64>() / 3.0).abs() < 1e-12);
            assert!(rows
                .iter()
                .any(|r| r[0] == model && r[1] == size && r[2] == "std"));
        }
    }
    assert!(fs::read_to_string(&svg).unwrap().contains("<polyline"));
    assert!(d.path().join("out/curve.manifest.json").exists());

    // a single trial has no std row
    let one = d.path().join("one.csv");
    let mut args = vec![
        "iso-curve",
        "--data",
        s(d.path()),
        "--sizes",
        "1",
        "--trials",
        "1",
        "--out",
        s(&one),
    ];
    args.extend(FAST);
    assert!(pinet(&args).status.success());
    let rows = read_csv(&one);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] != "std"));
}

#[test]
fn iso_curve_rejects_oversized_training_set() {
    let d = tempfile::tempdir().unwrap();
    tiny_iso(d.path());
    let csv = d.path().join("c.csv");
    let mut args = vec![
        "iso-curve",
        "--data",
        s(d.path()),
        "--sizes",
        "6",
        "--trials",
        "1",
        "--out",
        s(&csv),
    ];
    args.extend(FAST);
    let out = pinet(&args);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_identical() {
    let d = tempfile::tempdir().unwrap();
    tiny_iso(d.path());
    let mut bytes = Vec::new();
    for (name, jobs) in [("a.csv", "1"), ("b.csv", "2")] {
        let csv = d.path().join(name);
        let mut args = vec![
            "iso-curve",
            "--data",
            s(d.path()),
            "--sizes",
            "1",
            "--trials",
            "2",
            "--jobs",
            jobs,
            "--out",
            s(&csv),
        ];
        args.extend(FAST);
        assert!(pinet(&args).status.success());
        bytes.push(fs::read(&csv).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn mp_compare_contract() {
    let d = tempfile::tempdir().unwrap();
    tiny_iso(d.path());
    let csv = d.path().join("mp.csv");
    let mut args = vec![
        "mp-compare",
        "--data",
        s(d.path()),
        "--folds",
        "2",
        "--out",
        s(&csv),
    ];
    args.extend(FAST);
    let out = pinet(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_csv(&csv);
    assert_eq!(rows.len(), 6);
    let modes: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        modes,
        [
            "raw_A",
            "A_plus_I",
            "sym_norm_A",
            "sym_norm_A_plus_I",
            "learned",
            "manual_search_mean"
        ]
    );
    let fixed: Vec<f64> = rows[..4].iter().map(|r| r[2].parse().unwrap()).collect();
    let manual: f64 = rows[5][2].parse().unwrap();
    assert!((manual - fixed.iter().sum::<f64>() / 4.0).abs() < 1e-12);

    let pq = read_csv(&d.path().join("mp.learned_pq.csv"));
    // 2 folds x 2 heads x 2 layers
    assert_eq!(pq.len(), 8);
    for r in &pq {
        for v in [&r[3], &r[4]] {
            let x: f64 = v.parse().unwrap();
            assert!(x > 0.0 && x < 1.0);
        }
    }
}

#[test]
fn benchmark_contract() {
    let d = tempfile::tempdir().unwrap();
    tiny_iso(d.path());
    let csv = d.path().join("bench.csv");
    let mut args = vec![
        "benchmark",
        "--data",
        s(d.path()),
        "--model",
        "pinet-gcn,gcn-dense",
        "--folds",
        "3",
        "--out",
        s(&csv),
    ];
    args.extend(FAST);
    let out = pinet(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&csv);
    assert_eq!(rows.len(), 2 * (3 + 2));
    for model in ["pinet-gcn", "gcn-dense"] {
        let folds: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == model && r[2].parse::<usize>().is_ok())
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(folds.len(), 3);
        let mean: f64 = rows
            .iter()
            .find(|r| r[1] == model && r[2] == "mean")
            .unwrap()[4]
            .parse()
            .unwrap();
        let std: f64 = rows
            .iter()
            .find(|r| r[1] == model && r[2] == "std")
            .unwrap()[4]
            .parse()
            .unwrap();
        assert!((0.0..=1.0).contains(&mean));
        assert!(std >= 0.0);
        assert!((mean - folds.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        pinet(&["benchmark", "--data", "x", "--out", "y", "--model", "svm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pinet(&["gradcheck", "--n", "9"]).status.code(), Some(2));
    assert_eq!(pinet(&["iso-curve", "--data", "x"]).status.code(), Some(2));
    assert_eq!(pinet(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let out = pinet(&[
        "benchmark",
        "--data",
        s(d.path()),
        "--out",
        s(&d.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("_A.txt"));
}

#[test]
fn gradcheck_passes_and_is_deterministic() {
    let a = pinet(&["gradcheck", "--seed", "3"]);
    let b = pinet(&["gradcheck", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let one = pinet(&["gradcheck", "--n", "1"]);
    assert!(one.status.success());
}
