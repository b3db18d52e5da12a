mod common;

use serde_json::Value;

use bsa_timing::cli::{main_with, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_PARSE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["bsa-timing"];
    full.extend_from_slice(args);
    let code = main_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(name: &str) -> String {
    common::scenario_path(name).display().to_string()
}

fn report(out: &str) -> Value {
    serde_json::from_str(out.lines().next().expect("one line")).unwrap()
}

fn lines(out: &str) -> Vec<Value> {
    out.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn validate_valid_truncated_and_broken() {
    let (code, out, _) = cli(&["validate", &path("dsisd_symmetric")]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(report(&out)["payload"]["valid"], true);

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::scenario_path("dsisd_symmetric")).unwrap();
    let cut = write_tmp(&dir, "cut.json", &text[..text.len() / 2]);
    assert_eq!(cli(&["validate", &cut]).0, EXIT_PARSE);

    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["links"].as_array_mut().unwrap().retain(|l| l["id"] != "q2");
    let one_input = write_tmp(&dir, "one_input.json", &doc.to_string());
    let (code, out, _) = cli(&["validate", &one_input]);
    assert_eq!(code, EXIT_CONFIG);
    let v = report(&out);
    let violations = v["payload"]["violations"].as_array().unwrap();
    assert!(violations.iter().any(|x| x["subject"] == "I2"), "{violations:?}");

    let (code, out, _) = cli(&["--human", "validate", &one_input]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(out.contains("INVALID") && out.contains("I2"));
}

#[test]
fn unknown_keys_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(common::scenario_path("dsisd_symmetric")).unwrap();
    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["colour"] = "blue".into();
    let p = write_tmp(&dir, "extra.json", &doc.to_string());
    assert_eq!(cli(&["validate", &p]).0, EXIT_CONFIG);
    let (code, _, err) = cli(&["--lenient", "validate", &p]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("colour"));
    assert_eq!(cli(&["solve", &p]).0, EXIT_CONFIG);
    assert_eq!(cli(&["--lenient", "solve", &p]).0, EXIT_OK);
}

#[test]
fn missing_file_is_a_config_error() {
    assert_eq!(cli(&["validate", "/nonexistent/scenario.json"]).0, EXIT_CONFIG);
}

#[test]
fn solve_symmetric_asymmetric_and_triangle() {
    let (code, out, _) = cli(&["solve", &path("dsisd_symmetric")]);
    assert_eq!(code, EXIT_OK);
    let sol = &report(&out)["payload"]["solution"];
    assert_eq!(sol["status"], "feasible");
    assert!(sol["values"].as_object().unwrap().values().all(|v| v == 0));

    let (code, out, _) = cli(&["solve", &path("asymmetric_12km_10km")]);
    assert_eq!(code, EXIT_OK);
    let sol = &report(&out)["payload"]["solution"];
    let short = sol["values"]["odl:I2:0"].as_i64().unwrap() as f64 * 1e-12;
    assert!((short - 9.793e-6).abs() < 5e-10, "{short}");
    assert_eq!(sol["values"]["odl:I2:1"], 0);

    let (code, out, _) = cli(&["solve", &path("triangle_bounded")]);
    assert_eq!(code, EXIT_INFEASIBLE);
    let sol = &report(&out)["payload"]["solution"];
    assert_eq!(sol["status"], "cycle_infeasible");
    assert_eq!(sol["fixed_imbalance"], 10_000);
}

#[test]
fn solve_overrides() {
    // Emission offsets free the loop but not the bounded triangle's ODLs.
    let (code, out, _) = cli(&["solve", &path("triangle_bounded"), "--strategy", "emission-offset"]);
    assert_eq!(code, EXIT_INFEASIBLE, "{out}");
    let (code, out, _) = cli(&["solve", &path("asymmetric_12km_10km"), "--epsilon", "0.5ns"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(report(&out)["payload"]["epsilon"], 500);
    assert_eq!(cli(&["solve", &path("dsisd_symmetric"), "--strategy", "bogus"]).0, EXIT_CONFIG);
}

#[test]
fn cascade_examples() {
    let run = |strategy: &str, perturb: &str| {
        let (code, out, _) = cli(&["cascade", &path("fig5_chain4"), "--strategy", strategy, "--perturb", perturb]);
        assert_eq!(code, EXIT_OK);
        report(&out)["payload"].clone()
    };
    let odl = run("quantum-odl", "q1=150");
    assert_eq!(odl["affected_bsas"], serde_json::json!(["I2"]));
    assert_eq!(odl["cascade_depth"], 0);
    let pump = run("pump-path", "q1=150");
    assert_eq!(pump["affected_bsas"], serde_json::json!(["I2", "I4", "I6"]));
    assert!(pump["cascade_depth"].as_u64().unwrap() >= 2);
    let emit = run("emission-offset", "q2=-150");
    assert_eq!(emit["cascade_depth"], 2);

    assert_eq!(
        cli(&["cascade", &path("fig5_chain4"), "--perturb", "nope=1"]).0,
        EXIT_CONFIG
    );
    assert_eq!(
        cli(&["cascade", &path("triangle_bounded"), "--perturb", "q1a=1"]).0,
        EXIT_INFEASIBLE
    );
}

#[test]
fn simulate_zero_rate_has_no_swaps() {
    let (code, out, _) = cli(&["sweep", &path("fig1_symmetric"), "--seeds", "3", "--param", "p_gen=0"]);
    assert_eq!(code, EXIT_OK);
    let run = &lines(&out)[0];
    assert_eq!(run["swaps"]["I2"], 0);
    assert_eq!(run["end_to_end"], 0);
}

#[test]
fn simulate_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().display().to_string();
    let a = cli(&["simulate", &path("fig1_symmetric"), "--slots", "5000", "--out", &d]);
    let first = std::fs::read(dir.path().join("fig1_symmetric_seed1.jsonl")).unwrap();
    let b = cli(&["simulate", &path("fig1_symmetric"), "--slots", "5000", "--out", &d]);
    let second = std::fs::read(dir.path().join("fig1_symmetric_seed1.jsonl")).unwrap();
    assert_eq!(a.0, EXIT_OK);
    assert_eq!(a, b);
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    let records = lines(&text);
    assert_eq!(records.first().unwrap()["type"], "header");
    assert_eq!(records.last().unwrap()["type"], "summary");
    assert_eq!(records.iter().filter(|r| r["type"] == "interval").count(), 5);
}

#[test]
fn simulate_stdout_matches_library_writer() {
    let (code, out, _) = cli(&["simulate", &path("memory_two_link"), "--seed", "2", "--slots", "100000"]);
    assert_eq!(code, EXIT_OK);
    let summary = lines(&out).pop().unwrap();
    assert_eq!(summary["type"], "summary");
    let mut s = common::memory_two_link();
    s.simulation.slots = 100_000;
    let topo = s.effective_topology().unwrap();
    let m = bsa_timing::memory::run_hop_by_hop(&topo, s.strategy, &s.simulation, 2).unwrap();
    assert!(m.end_to_end > 0);
    assert_eq!(summary["end_to_end"], m.end_to_end);
    assert_eq!(summary["mean_delivery_latency_slots"], m.mean_delivery_latency_slots.unwrap());
}

/// Simultaneous emission on DSISD is a product of two Bernoulli draws.
#[test]
fn sweep_emission_rates() {
    let slots = 20_000_000u64;
    let (code, out, _) = cli(&[
        "sweep",
        &path("fig1_symmetric"),
        "--seeds",
        "9",
        "--param",
        "p_gen=0.001,0.01",
        "--param",
        &format!("slots={slots}"),
        "--jobs",
        "2",
    ]);
    assert_eq!(code, EXIT_OK);
    let runs = lines(&out);
    assert_eq!(runs.len(), 2);
    for (run, p) in runs.iter().zip([0.001f64, 0.01]) {
        let expect = p * p;
        let got = run["all_sources_fired"].as_u64().unwrap() as f64 / slots as f64;
        let sd = (expect * (1.0 - expect) / slots as f64).sqrt();
        assert!((got - expect).abs() <= 3.0 * sd, "p_gen {p}: {got} vs {expect}");
    }
}

#[test]
fn sweep_order_is_seed_then_grid() {
    let (code, out, _) = cli(&[
        "sweep",
        &path("fig1_symmetric"),
        "--seeds",
        "4..6",
        "--param",
        "p_gen=0.1,0.2",
        "--param",
        "slots=1000",
        "--jobs",
        "3",
    ]);
    assert_eq!(code, EXIT_OK);
    let keys: Vec<(u64, u64)> = lines(&out)
        .iter()
        .map(|r| (r["seed"].as_u64().unwrap(), r["grid_point"].as_u64().unwrap()))
        .collect();
    assert_eq!(keys, [(4, 0), (4, 1), (5, 0), (5, 1)]);
}

#[test]
fn sweep_rejects_bad_parameters() {
    let p = path("fig1_symmetric");
    assert_eq!(cli(&["sweep", &p, "--seeds", "1", "--param", "colour=1"]).0, EXIT_CONFIG);
    assert_eq!(cli(&["sweep", &p, "--seeds", "1", "--param", "p_gen=2"]).0, EXIT_CONFIG);
    assert_eq!(cli(&["sweep", &p, "--seeds", "5..2"]).0, EXIT_CONFIG);
}

#[test]
fn reports_hash_payload_only() {
    let a = report(&cli(&["solve", &path("fig8_cycle")]).1);
    let b = report(&cli(&["solve", &path("fig8_cycle")]).1);
    assert_eq!(a["payload_sha256"], b["payload_sha256"]);
    assert_eq!(a["payload"], b["payload"]);
    let text = serde_json::to_string(&a["payload"]).unwrap();
    assert_eq!(a["payload_sha256"], bsa_timing::scenario::scenario_hash(text.as_bytes()));
    let file = std::fs::read(common::scenario_path("fig8_cycle")).unwrap();
    assert_eq!(a["scenario_hash"], bsa_timing::scenario::scenario_hash(&file));
}
