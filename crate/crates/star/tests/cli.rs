use std::process::Command;

fn star() -> Command {
    Command::new(env!("CARGO_BIN_EXE_star"))
}

#[test]
fn simulate_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("star.toml");
    std::fs::write(&config, "[campaign]\nthreshold = 3\n[simulation]\nclients = 300\nseed = 4\n").unwrap();
    let report = dir.path().join("report.jsonl");
    let csv = dir.path().join("bench.csv");
    let out = star()
        .args(["--config", config.to_str().unwrap(), "simulate", "--mode", "starlite", "--transport", "relay"])
        .args(["--report", report.to_str().unwrap(), "--csv", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bench: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(bench["threshold"], 3);
    assert_eq!(bench["clients"], 300);
    assert_eq!(bench["oracle_match"], true);
    let parsed = star::report::parse_jsonl(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(parsed.summary.revealed_messages, bench["revealed_messages"].as_u64().unwrap());
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("clients,threshold,field"));
    assert_eq!(csv_text.lines().count(), 2);
}

#[test]
fn costs_prints_a_table() {
    let out = star().args(["costs", "--preset", "tabulated"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("randomness"));
    assert!(text.lines().last().unwrap().trim_end().ends_with("0.046438"));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[campaign]\nthreshold = 0\n").unwrap();
    let out = star()
        .args(["--config", config.to_str().unwrap(), "simulate", "--clients", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}
