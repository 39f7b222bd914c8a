use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_countbreaks"))
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("countbreaks-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_then_detect_round_trip() {
    let dir = scratch("roundtrip");
    let series = dir.join("ia2.txt");
    let o = bin(&[
        "simulate",
        "--scenario",
        "IA2",
        "--n",
        "1000",
        "--seed",
        "7",
        "--out",
        s(&series),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&series).unwrap();
    assert_eq!(text.lines().count(), 1000);
    assert!(text.lines().all(|l| l.parse::<u64>().is_ok()));

    let again = bin(&[
        "simulate",
        "--scenario",
        "IA2",
        "--n",
        "1000",
        "--seed",
        "7",
    ]);
    assert_eq!(again.stdout, text.as_bytes());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ia2.txt.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);

    let out = dir.join("seg.json");
    let o = bin(&[
        "detect",
        s(&series),
        "--family",
        "inarch1",
        "--penalty",
        "cuberoot",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["n"], 1000);
    let k = json["k_hat"].as_u64().unwrap() as usize;
    assert_eq!(json["segments"].as_array().unwrap().len(), k);
    assert_eq!(json["breaks"].as_array().unwrap().len(), k - 1);
    assert_eq!(json["segments"][0]["start"], 1);
    assert_eq!(json["segments"][k - 1]["end"], 1000);
    assert_eq!(json["kappa"].as_f64().unwrap(), 10.0);
    let curves = std::fs::read_to_string(dir.join("seg.json.curves.csv")).unwrap();
    assert!(curves.starts_with("K,neg_min_qlik,min_pen_qlik\n1,"));
    assert!(dir.join("seg.json.manifest.json").exists());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn negbin_simulation_is_overdispersed() {
    let o = bin(&["simulate", "--scenario", "NB-IG1", "--n", "500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y: Vec<f64> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(y.len(), 500);
    let mean = y.iter().sum::<f64>() / 500.0;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 499.0;
    assert!(var / mean > 1.0, "{var} / {mean}");
}

#[test]
fn unknown_scenario_lists_alternatives() {
    let o = bin(&["simulate", "--scenario", "IA7"]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(
        e.contains("unknown scenario") && e.contains("IA1") && e.contains("BIN-IA0"),
        "{e}"
    );
}

#[test]
fn parse_errors_name_the_line() {
    let dir = scratch("parse");
    let bad = dir.join("bad.txt");
    std::fs::write(&bad, "count\n1\n2\n-4\n").unwrap();
    let o = bin(&["detect", s(&bad)]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("line 4") && e.contains("negative"), "{e}");
    std::fs::write(&bad, "1\n2.5\n").unwrap();
    let e = stderr(&bin(&["detect", s(&bad)]));
    assert!(e.contains("line 2"), "{e}");
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn short_series_is_rejected() {
    let dir = scratch("short");
    let f = dir.join("short.txt");
    std::fs::write(&f, "1\n0\n2\n1\n").unwrap();
    let o = bin(&["detect", s(&f), "--umin", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("too short"), "{}", stderr(&o));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn zero_replications_is_a_usage_error() {
    let o = bin(&["replicate", "--scenario", "IA1", "--R", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replicate_fans_out_over_penalties() {
    let o = bin(&[
        "replicate",
        "--scenario",
        "IA1",
        "--n",
        "300",
        "--R",
        "2",
        "--penalty",
        "slope,logn,cuberoot",
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("scenario,n,penalty"));
    for (row, p) in rows[1..].iter().zip(["slope", "logn", "cuberoot"]) {
        assert!(row.starts_with(&format!("IA1,300,{p},")), "{row}");
    }
}

#[test]
fn slope_exports_curve_and_summary() {
    let dir = scratch("slope");
    let series = dir.join("ia2.txt");
    assert!(bin(&[
        "simulate",
        "--scenario",
        "IA2",
        "--n",
        "500",
        "--seed",
        "2",
        "--out",
        s(&series)
    ])
    .status
    .success());
    let o = bin(&["slope", s(&series)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "K,neg_min_qlik");
    let summary = lines.last().unwrap();
    assert!(summary.starts_with("# kappa_hat="), "{summary}");
    assert_eq!(lines.len(), 13 + 2);
    let kappa: f64 = summary["# kappa_hat=".len()..].split(',').next().unwrap().parse().unwrap();
    assert!((3.0..=12.0).contains(&kappa), "{kappa}");

    let o = bin(&["slope", s(&series), "--kmax", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kmax"), "{}", stderr(&o));
    let _ = std::fs::remove_dir_all(dir);
}
