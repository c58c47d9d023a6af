use std::fs;
use std::path::{Path, PathBuf};

use jsonschema::JSONSchema;
use leaklab::analyze::{analyze, AnalyzeOptions};
use leaklab::config::parse_game_config;
use leaklab::dataset::{read_dataset, simulate, write_dataset, MANIFEST};
use leaklab_core::features::FeatureSet;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn schema(name: &str) -> JSONSchema {
    let text = fs::read_to_string(root().join("schemas").join(name)).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    JSONSchema::compile(&v).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check(s: &JSONSchema, v: &Value) -> Result<(), Vec<String>> {
    s.validate(v).map_err(|errs| errs.map(|e| format!("{}: {e}", e.instance_path)).collect())
}

#[test]
fn shipped_configs_match_schema_and_parser() {
    let s = schema("game_config.schema.json");
    let mut n = 0;
    for e in fs::read_dir(root().join("configs")).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        check(&s, &v).unwrap_or_else(|e| panic!("{}: {e:?}", p.display()));
        parse_game_config(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn schema_and_parser_agree_on_rejections() {
    let s = schema("game_config.schema.json");
    let base = r#"{"game": {"kind": "distinguish", "x0": "a", "x1": "b", "traces_per_class": 10},
                   "workload": {"type": "phh", "eps": 0.5, "delta": 1e-6}}"#;
    let bad = [
        base.replace("\"x1\": \"b\",", "\"x1\": \"b\", \"extra\": 1,"),
        base.replace("\"phh\"", "\"quantum\""),
        base.replace("\"traces_per_class\": 10", "\"traces_per_class\": -1"),
        base.replace("\"workload\"", "\"policy\": {\"channels\": [\"disk\"]}, \"workload\""),
    ];
    check(&s, &serde_json::from_str(base).unwrap()).unwrap();
    parse_game_config(base).unwrap();
    for b in &bad {
        let v: Value = serde_json::from_str(b).unwrap();
        assert!(check(&s, &v).is_err(), "schema accepted {b}");
        assert!(parse_game_config(b).is_err(), "parser accepted {b}");
    }
}

fn report_value(cfg: &str, sets: &[FeatureSet]) -> (Value, PathBuf, tempfile::TempDir) {
    let cfg = parse_game_config(cfg).unwrap();
    let (plan, ds) = simulate(&cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ds, plan.sybils.len()).unwrap();
    let loaded = read_dataset(dir.path()).unwrap();
    let opts = AnalyzeOptions {
        feature_sets: sets.to_vec(),
        ..AnalyzeOptions::default()
    };
    let r = analyze(&loaded, &opts).unwrap();
    (serde_json::to_value(&r).unwrap(), dir.path().join(MANIFEST), dir)
}

#[test]
fn reports_and_manifests_validate() {
    let report = schema("analysis_report.schema.json");
    let manifest = schema("manifest_record.schema.json");
    let cases = [
        (
            r#"{"game": {"kind": "distinguish", "x0": "URL0", "x1": "URL1", "traces_per_class": 10},
                "workload": {"type": "phh", "eps": 0.5, "delta": 1e-6, "mitigated": true}}"#,
            vec![FeatureSet::F1, FeatureSet::F5],
        ),
        (
            r#"{"game": {"kind": "fingerprint", "traces": 30,
                         "prior": {"type": "explicit", "support": ["a.de", "b.fr", "c.com"], "probs": [0.4, 0.4, 0.2]},
                         "interest": "country_codes"},
                "workload": {"type": "phh", "eps": 1.0, "delta": 1e-6},
                "sybils": [{"type": "one_of_each"}, {"type": "rehash_forcer"}]}"#,
            vec![FeatureSet::F1],
        ),
    ];
    for (cfg, sets) in cases {
        let (v, mpath, _dir) = report_value(cfg, &sets);
        check(&report, &v).unwrap_or_else(|e| panic!("{e:?}"));
        for line in fs::read_to_string(mpath).unwrap().lines() {
            check(&manifest, &serde_json::from_str(line).unwrap()).unwrap_or_else(|e| panic!("{line}: {e:?}"));
        }
        let mut tampered = v.clone();
        tampered["surprise"] = Value::Bool(true);
        assert!(check(&report, &tampered).is_err());
    }
}
