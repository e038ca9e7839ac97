mod common;

use std::fs;

use common::{field, ok, p, provmatch, run};

#[test]
fn match_prints_similarity_first() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    ok(&["simulate", "--seed", "4", "--n", "40", "--out", p(&pair)]);
    let stdout = ok(&["match", p(&pair.join("binary.json")), p(&pair.join("source.json"))]);
    let first = stdout.lines().next().unwrap();
    let sim: f64 = first.strip_prefix("similarity: ").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&sim));
    assert_eq!(first.len(), "similarity: 0.000".len());
}

#[test]
fn truth_adds_tallies_and_report_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    let report = dir.path().join("report.json");
    ok(&["simulate", "--seed", "8", "--n", "60", "--out", p(&pair)]);
    let stdout = ok(&[
        "match",
        p(&pair.join("binary.json")),
        p(&pair.join("source.json")),
        "--truth",
        p(&pair.join("truth.json")),
        "--out",
        p(&report),
    ]);
    assert_eq!(field(&stdout, "report"), p(&report));
    let sum: f64 = ["c_matched", "ic_matched", "multi_fraction", "unmatched_fraction"]
        .iter()
        .map(|k| field(&stdout, k).parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-3);

    let text = ok(&["report", p(&report)]);
    assert!(text.starts_with(&stdout[..stdout.find("report:").unwrap()]));
    assert!(text.contains("C-Matched"));
    let json = ok(&["report", p(&report), "--format", "json"]);
    assert_eq!(json, fs::read_to_string(&report).unwrap());
}

#[test]
fn identity_self_match_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    ok(&["simulate", "--seed", "2", "--n", "30", "--profile", "identity", "--out", p(&pair)]);
    let src = p(&pair.join("source.json")).to_string();
    let stdout = ok(&["match", &src, &src, "--no-inline"]);
    assert_eq!(field(&stdout, "similarity"), "1.000");
}

#[test]
fn malformed_input_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        "{\"side\": \"binary\", \"functions\": [{\"id\": \"0x1\", \"num_args\": 0, \"callees\": [\"nowhere\"]}]}",
    )
    .unwrap();
    let out = run(&["match", p(&bad), p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert!(stderr.contains("0x1") && stderr.contains("nowhere"), "{stderr}");

    let missing = run(&["match", p(&dir.path().join("nope.json")), p(&bad)]);
    assert_eq!(missing.status.code(), Some(2));

    fs::write(&bad, "not json").unwrap();
    assert_eq!(run(&["convert", p(&bad), "--to", "dot"]).status.code(), Some(2));
    assert_eq!(run(&["report", p(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--profile", "o9", "--out", p(dir.path())]).status.code(), Some(2));
}

#[test]
fn convert_round_trips_through_dot() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    ok(&["simulate", "--seed", "6", "--n", "40", "--out", p(&pair)]);
    for side in ["source.json", "binary.json"] {
        let json = pair.join(side);
        let dot = dir.path().join("g.dot");
        let back = dir.path().join("back.json");
        ok(&["convert", p(&json), "--out", p(&dot)]);
        ok(&["convert", p(&dot), "--out", p(&back)]);
        assert_eq!(fs::read(&json).unwrap(), fs::read(&back).unwrap());
        let stdout = ok(&["convert", p(&dot), "--to", "json"]);
        assert_eq!(stdout.as_bytes(), fs::read(&json).unwrap());
    }
}

#[test]
fn simulate_is_deterministic_and_counts_up() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--seed", "10", "--n", "30", "--count", "2", "--out", p(&a)]);
    ok(&["simulate", "--seed", "11", "--n", "30", "--out", p(&b)]);
    for name in ["source.json", "binary.json", "truth.json", "profile.json", "inlined.json"] {
        assert_eq!(
            fs::read(a.join("pair-001").join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        fs::read(a.join("pair-000/source.json")).unwrap(),
        fs::read(a.join("pair-001/source.json")).unwrap()
    );
}

#[test]
fn trainers_write_loadable_models() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    let held = dir.path().join("held");
    ok(&["simulate", "--seed", "50", "--n", "120", "--count", "4", "--out", p(&pairs)]);
    ok(&["simulate", "--seed", "90", "--n", "120", "--out", p(&held)]);

    let model = dir.path().join("inline.json");
    let corpus = dir.path().join("inline.jsonl");
    let stdout = ok(&[
        "train-inliner",
        "--pairs",
        p(&pairs),
        "--eval",
        p(&held),
        "--dump-corpus",
        p(&corpus),
        "--out",
        p(&model),
    ]);
    assert!(field(&stdout, "eval_tpr").parse::<f64>().unwrap() >= 0.7);
    let again = dir.path().join("inline2.json");
    ok(&["train-inliner", "--corpus", p(&corpus), "--out", p(&again)]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let weights = dir.path().join("weights.json");
    let stdout = ok(&["train-weights", "--pairs", p(&pairs), "--out", p(&weights)]);
    assert!(field(&stdout, "training_accuracy").parse::<f64>().unwrap() > 0.9);

    let matched = ok(&[
        "match",
        p(&held.join("binary.json")),
        p(&held.join("source.json")),
        "--weights",
        p(&weights),
        "--inline-model",
        p(&model),
    ]);
    assert!(field(&matched, "similarity").parse::<f64>().unwrap() > 0.5);
}

#[test]
fn config_dir_overrides_builtin_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    ok(&["simulate", "--seed", "3", "--n", "40", "--out", p(&pair)]);
    let args = [p(&pair.join("binary.json")).to_string(), p(&pair.join("source.json")).to_string()];
    let builtin = ok(&["match", &args[0], &args[1]]);

    let conf = dir.path().join("conf");
    fs::create_dir(&conf).unwrap();
    fs::write(
        conf.join("weights.json"),
        "{\"string_constants\": 0, \"integer_constants\": 0, \"library_calls\": 0, \"fcg_callers\": 1, \"fcg_callees\": 1, \"num_function_args\": 0, \"cfg_branches\": 0}",
    )
    .unwrap();
    let out = provmatch()
        .args(["match", &args[0], &args[1]])
        .env("PROVMATCH_CONFIG_DIR", &conf)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_ne!(String::from_utf8(out.stdout).unwrap(), builtin);

    fs::write(conf.join("weights.json"), "{\"string_constants\": -1}").unwrap();
    let out = provmatch()
        .args(["match", &args[0], &args[1]])
        .env("PROVMATCH_CONFIG_DIR", &conf)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
