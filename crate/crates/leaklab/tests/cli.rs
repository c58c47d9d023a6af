use std::fs;
use std::path::Path;

use leaklab::cli::run_from;

fn run(args: &[&str]) -> (u8, String) {
    let mut out = Vec::new();
    let mut full = vec!["leaklab"];
    full.extend_from_slice(args);
    let code = run_from(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_GAME: &str = r#"{
  "game": {"kind": "distinguish", "x0": "URL0", "x1": "URL1", "traces_per_class": 12},
  "workload": {"type": "phh", "eps": 0.5, "delta": 1e-6, "mitigated": false},
  "sybils": [{"type": "fixed_copies", "n": 5, "value": "URL0"}],
  "policy": {"channels": ["page", "cache"]},
  "base_seed": 9
}"#;

#[test]
fn bound_prints_both_forms() {
    let (code, out) = run(&["bound", "--eps", "0.5", "--delta", "0.01"]);
    assert_eq!(code, 0);
    assert!(out.contains("advantage  0.1672"), "{out}");
    assert!(out.contains("normalized 0.3344"), "{out}");
    assert!(!out.contains("warning"));
}

#[test]
fn bound_warns_outside_useful_regime() {
    // ln(3) ~ 1.0986
    let (code, out) = run(&["bound", "--eps", "1.2", "--delta", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("warning"), "{out}");
    assert!(out.contains("advantage  0.5000"), "{out}");
    assert!(out.contains("normalized 1.0000"), "{out}");
}

#[test]
fn bound_rejects_bad_parameters() {
    let (code, out) = run(&["bound", "--eps", "-1", "--delta", "0"]);
    assert_eq!(code, 2, "{out}");
    assert!(out.starts_with("error:"));
}

#[test]
fn covert_small_message_succeeds() {
    let (code, out) = run(&["covert", "--bytes", "8", "--reps", "3", "--seed", "4"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("sent 24 bytes, decoded 24"), "{out}");
    assert!(out.contains("error rate 0"));
    assert!(out.contains("faults/byte 5"));
    assert!(out.contains("config_hash "));
}

#[test]
fn covert_empty_message_is_vacuous() {
    let (code, out) = run(&["covert", "--bytes", "0"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("error rate 0"));
    assert!(out.contains("faults/byte n/a"));
}

/// Bumps the block index of the `k`th ciphertext change on the encoding
/// page, i.e. the one carrying byte `k`.
fn corrupt_ci(text: &str, k: usize) -> String {
    let encode = text
        .lines()
        .find_map(|l| l.strip_prefix("MA "))
        .map(|g| g.split_whitespace().next().unwrap().to_string())
        .unwrap();
    let prefix = format!("CI {encode} BK ");
    let mut seen = 0;
    text.lines()
        .map(|l| match l.strip_prefix(&prefix) {
            Some(rest) if { seen += 1; seen - 1 == k } => {
                let (block, tail) = rest.split_once(' ').unwrap();
                let b: u32 = block.parse().unwrap();
                format!("{prefix}{} {tail}\n", (b + 1) % 256)
            }
            _ => format!("{l}\n"),
        })
        .collect()
}

#[test]
fn covert_reports_position_of_corrupted_byte() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("covert.trace");
    let (code, _) = run(&["covert", "--bytes", "6", "--reps", "2", "--seed", "1", "--save-trace", s(&saved)]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&saved).unwrap();
    let bad = dir.path().join("bad.trace");
    fs::write(&bad, corrupt_ci(&text, 7)).unwrap();
    let (code, out) = run(&["covert", "--bytes", "6", "--reps", "2", "--seed", "1", "--trace", s(&bad)]);
    assert_eq!(code, 4, "{out}");
    let errs: Vec<&str> = out.lines().filter(|l| l.starts_with("byte ")).collect();
    assert_eq!(errs.len(), 1, "{out}");
    assert!(errs[0].starts_with("byte 7: sent "), "{out}");
    assert!(out.contains(&format!("error rate {}", 1.0 / 12.0)), "{out}");
}

#[test]
fn covert_reports_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("covert.trace");
    run(&["covert", "--bytes", "4", "--reps", "1", "--save-trace", s(&saved)]);
    let text = fs::read_to_string(&saved).unwrap();
    let cut: String = text.lines().filter(|l| !l.starts_with("CI ")).map(|l| format!("{l}\n")).collect();
    fs::write(&saved, cut).unwrap();
    let (code, out) = run(&["covert", "--bytes", "4", "--reps", "1", "--trace", s(&saved)]);
    assert_eq!(code, 4);
    assert!(out.contains("decode failed at byte 0"), "{out}");
}

#[test]
fn malformed_saved_trace_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.trace");
    fs::write(&p, "SEED 0\nNUM 1\nCHANNELS page\nXX 1\n").unwrap();
    let (code, out) = run(&["covert", "--trace", s(&p)]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("x.trace"));
}

#[test]
fn config_errors_carry_a_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, SMALL_GAME.replace("\"traces_per_class\": 12", "\"traces_per_class\": \"many\"")).unwrap();
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(code, 2);
    // Tagged variants are buffered before dispatch, so the path stops at
    // the enclosing object.
    assert!(out.contains("config error at /game: "), "{out}");
    assert!(out.contains("\"many\""), "{out}");

    fs::write(&cfg, SMALL_GAME.replace("\"base_seed\": 9", "\"base_seed\": -9")).unwrap();
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--dry-run"]);
    assert_eq!(code, 2);
    assert!(out.contains("config error at /base_seed: "), "{out}");

    fs::write(&cfg, SMALL_GAME.replace("\"policy\": {", "\"policy\": {\"targetted\": true, ")).unwrap();
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--dry-run"]);
    assert_eq!(code, 2);
    assert!(out.contains("/policy") && out.contains("targetted"), "{out}");

    fs::write(&cfg, SMALL_GAME.replace("\"page\", \"cache\"", "\"page\", \"disk\"")).unwrap();
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--dry-run"]);
    assert_eq!(code, 2);
    assert!(out.contains("/policy/channels"), "{out}");

    fs::write(&cfg, SMALL_GAME.replace("\"traces_per_class\": 12", "\"traces_per_class\": 3")).unwrap();
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--dry-run"]);
    assert_eq!(code, 2, "{out}");
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, SMALL_GAME).unwrap();
    let out_dir = dir.path().join("data");
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--out", s(&out_dir), "--dry-run"]);
    assert_eq!(code, 0, "{out}");
    assert!(!out_dir.exists());
    assert_eq!(out.lines().filter(|l| l.starts_with("run ")).count(), 24);
    assert!(out.contains("24 runs, 5 sybil inputs"), "{out}");
}

#[test]
fn simulate_analyze_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, SMALL_GAME).unwrap();
    let data = dir.path().join("data");
    let (code, out) = run(&["simulate", "--game", s(&cfg), "--out", s(&data), "--jobs", "2"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(fs::read_dir(data.join("traces")).unwrap().count(), 24);

    let report = dir.path().join("report.json");
    let svg = dir.path().join("report.svg");
    let (code, out) = run(&[
        "analyze", "--dataset", s(&data), "--features", "F1,F3", "--out", s(&report), "--plot", s(&svg),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("warning: F3 uses the cipher channel"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let names: Vec<&str> = json["advantage"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["F1", "F3", "union"]);
    assert_eq!(json["advantage"]["entries"][0]["normalized_advantage"]["mean"], 1.0);
    let hash = json["config_hash"].as_str().unwrap();
    assert!(fs::read_to_string(&svg).unwrap().contains(hash));

    let csv = dir.path().join("f.csv");
    let tokens = dir.path().join("t.txt");
    let (code, out) = run(&[
        "export", "--dataset", s(&data), "--features", "F1", "--out", s(&csv), "--tokens", s(&tokens),
    ]);
    assert_eq!(code, 0, "{out}");
    let csv_text = fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash "));
    let header = lines.next().unwrap();
    assert!(header.starts_with("index,label,"), "{header}");
    assert_eq!(header.split(',').count(), 2 + 4);
    assert_eq!(lines.count(), 24);
    assert_eq!(fs::read_to_string(&tokens).unwrap().lines().count(), 24);

    let (code, _) = run(&["export", "--dataset", s(&data)]);
    assert_eq!(code, 2);
}

#[test]
fn analyze_missing_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run(&[
        "analyze", "--dataset", s(&dir.path().join("nope")), "--out", s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code, 3, "{out}");
}

#[test]
fn unknown_feature_set_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "analyze", "--dataset", s(dir.path()), "--features", "F9", "--out", s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn sweep_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let svg = dir.path().join("sweep.svg");
    let (code, out) = run(&[
        "sweep", "--eps-list", "0.5,2", "--traces-per-class", "15", "--features", "F1,F5", "--out", s(&csv),
        "--plot", s(&svg),
    ]);
    assert_eq!(code, 0, "{out}");
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert_eq!(rows[0], "eps,delta,F1,F5,union,bound_normalized");
    assert!(rows[1].starts_with("0.5,"));
    assert!(rows[2].ends_with(",1"), "{text}");
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
}

#[test]
fn sweep_rejects_pir_template() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(
        &cfg,
        r#"{"game": {"kind": "distinguish", "x0": "1", "x1": "2", "traces_per_class": 10},
            "workload": {"type": "pir", "kind": "naive", "db_size": 8}}"#,
    )
    .unwrap();
    let (code, _) = run(&["sweep", "--eps-list", "0.1", "--game", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code, 2);
}
