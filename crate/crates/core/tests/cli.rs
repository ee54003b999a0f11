use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn bipan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bipan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[track_caller]
fn assert_error_line(out: &Output, code: &str) {
    let err = stderr(out);
    let last = err.lines().last().unwrap_or_default();
    assert!(
        last.starts_with(&format!("error: {code}: ")),
        "expected error code {code}, stderr was:\n{err}"
    );
}

#[test]
fn validate_f1_is_clean() {
    let out = bipan(&["validate", path(&data("f1.bipan.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "OK (0 errors, 0 warnings)\n");
}

#[test]
fn validate_json_report() {
    let out = bipan(&["validate", path(&data("f1.bipan.json")), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["errors"], 0);
    assert_eq!(report["diagnostics"], serde_json::json!([]));
}

#[test]
fn validate_mutated_model_lists_v006() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("f1.bipan.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let flows = doc["flows"].as_array_mut().unwrap();
    flows.retain(|f| !(f["product"] == "stage4" && f["role"] == "Input"));
    let mutated = dir.path().join("mutated.json");
    fs::write(&mutated, serde_json::to_vec(&doc).unwrap()).unwrap();

    let out = bipan(&["validate", path(&mutated)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("V006"), "{}", stdout(&out));
    assert_error_line(&out, "validation");
}

#[test]
fn missing_file_is_a_usage_error() {
    let out = bipan(&["validate", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "usage");
}

#[test]
fn unparsable_model_reports_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"id\": \"x\",\n  oops\n}\n").unwrap();
    let out = bipan(&["validate", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "parse-error");
}

#[test]
fn bad_flags_exit_2() {
    let out = bipan(&["plan", "assemble"]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "usage");
    let out = bipan(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(bipan(&["--help"]).status.code(), Some(0));
    assert_eq!(bipan(&["--version"]).status.code(), Some(0));
}

#[test]
fn assemble_matches_golden() {
    let out = bipan(&["plan", "assemble", path(&data("f1.bipan.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(out.stdout, fs::read(data("assemble.plan.json")).unwrap());
}

#[test]
fn repair_matches_golden_and_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("repair.json");
    let out = bipan(&[
        "plan",
        "repair",
        path(&data("f1.bipan.json")),
        "--broken",
        "mod8",
        "--replace",
        "mod8=mod8r",
        "--out",
        path(&plan),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert_eq!(
        fs::read(&plan).unwrap(),
        fs::read(data("repair_mod8.plan.json")).unwrap()
    );
}

#[test]
fn repair_with_unknown_component_exits_2() {
    let out = bipan(&[
        "plan",
        "repair",
        path(&data("f1.bipan.json")),
        "--broken",
        "mod9",
        "--replace",
        "mod9=mod9r",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "unknown-node");
}

#[test]
fn repair_with_malformed_replacement_exits_2() {
    let out = bipan(&[
        "plan",
        "repair",
        path(&data("f1.bipan.json")),
        "--broken",
        "mod8",
        "--replace",
        "mod8",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "usage");
}

#[test]
fn registry_without_cable_skill_blocks_module_extraction() {
    let model = data("f1.bipan.json");
    let registry = data("r_no_cables.json");
    let out = bipan(&[
        "plan",
        "disassemble",
        path(&model),
        "--target",
        "mod5",
        "--mode",
        "extract",
        "--registry",
        path(&registry),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("disconnecting-cables"), "{err}");
    assert_error_line(&out, "infeasible");

    // exposing mod5 stops above the cable process
    let out = bipan(&[
        "plan",
        "disassemble",
        path(&model),
        "--target",
        "mod5",
        "--mode",
        "expose",
        "--registry",
        path(&registry),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn custom_inversion_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let inversion = dir.path().join("inv.json");
    fs::write(&inversion, r#"{"screwing": "unbolting"}"#).unwrap();
    let out = bipan(&[
        "plan",
        "disassemble",
        path(&data("f1.bipan.json")),
        "--inversion",
        path(&inversion),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("unbolting"));
    assert!(text.contains("connecting-cables"));
    assert!(!text.contains("disconnecting-cables"));
}

#[test]
fn exec_replays_assembly_and_repair() {
    let model = data("f1.bipan.json");
    let out = bipan(&["exec", path(&data("assemble.plan.json")), path(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(
        stdout(&out).ends_with("final: {battery}\n"),
        "{}",
        stdout(&out)
    );

    let out = bipan(&[
        "exec",
        path(&data("repair_mod8.plan.json")),
        path(&model),
        "--inventory",
        "final",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).ends_with("final: {battery, mod8} substitutions {mod8=mod8r}\n"));

    let out = bipan(&[
        "exec",
        path(&data("assemble.plan.json")),
        path(&model),
        "--inventory",
        "initial",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let trace: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(trace["entries"].as_array().unwrap().len(), 5);
}

#[test]
fn exec_from_inventory_file_reports_failing_step() {
    let dir = tempfile::tempdir().unwrap();
    let inventory = dir.path().join("inv.json");
    fs::write(&inventory, r#"["box", "cooling"]"#).unwrap();
    let out = bipan(&[
        "exec",
        path(&data("assemble.plan.json")),
        path(&data("f1.bipan.json")),
        "--inventory",
        path(&inventory),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("step 0"), "{err}");
    assert_error_line(&out, "missing-input");
}

#[test]
fn exec_against_edited_model_is_a_digest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("f1.bipan.json")).unwrap();
    let edited = dir.path().join("edited.json");
    fs::write(&edited, text.replace("\"Cover\"", "\"Lid\"")).unwrap();
    let out = bipan(&["exec", path(&data("assemble.plan.json")), path(&edited)]);
    assert_eq!(out.status.code(), Some(3));
    assert_error_line(&out, "digest-mismatch");
}

#[test]
fn export_dot_matches_golden() {
    let out = bipan(&["export-dot", path(&data("f1.bipan.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, fs::read(data("f1.dot")).unwrap());

    let out = bipan(&[
        "export-dot",
        path(&data("f1.bipan.json")),
        "--plan",
        path(&data("repair_mod8.plan.json")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, fs::read(data("f1_repair.dot")).unwrap());
}

#[test]
fn import_aml_standalone_and_merged() {
    let out = bipan(&["import-aml", path(&data("battery_10.aml"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["id"], "battery_10");
    assert_eq!(doc["products"].as_array().unwrap().len(), 10);

    let dir = tempfile::tempdir().unwrap();
    let merged = dir.path().join("merged.json");
    let out = bipan(&[
        "import-aml",
        path(&data("modules_positions.aml")),
        "--merge",
        path(&data("f1.bipan.json")),
        "--out",
        path(&merged),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&merged).unwrap();
    assert_eq!(text.matches("\"position\"").count(), 8);
    let out = bipan(&["validate", path(&merged)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn import_aml_rejects_wrong_root() {
    let dir = tempfile::tempdir().unwrap();
    let aml = dir.path().join("x.aml");
    fs::write(&aml, "<Other/>").unwrap();
    let out = bipan(&["import-aml", path(&aml)]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "unsupported-root");
}

#[test]
fn pdt_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    fs::copy(data("f1.bipan.json"), dir.path().join("f1.bipan.json")).unwrap();
    let model = dir.path().join("f1.bipan.json");

    let out = bipan(&["pdt", "new", "VIN-001", path(&model), "--dir", d]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = bipan(&[
        "pdt",
        "plan-repair",
        "VIN-001",
        "--replace",
        "mod8=mod8r",
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_error_line(&out, "nothing-broken");

    let out = bipan(&[
        "pdt",
        "set-health",
        "VIN-001",
        "mod8",
        "broken",
        "--at",
        "2024-05-01T10:00:00Z",
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = bipan(&[
        "pdt",
        "set-health",
        "VIN-001",
        "mod3",
        "ok",
        "--at",
        "2024-04-01T10:00:00Z",
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_error_line(&out, "time-regression");

    let out = bipan(&["pdt", "set-health", "VIN-001", "mod8", "broken", "--dir", d]);
    assert_eq!(out.status.code(), Some(2));

    let out = bipan(&[
        "pdt",
        "plan-repair",
        "VIN-001",
        "--replace",
        "mod8=mod8r",
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(out.stdout, fs::read(data("repair_mod8.plan.json")).unwrap());

    let out = bipan(&["pdt", "log", "VIN-001", "--dir", d]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out).lines().skip(1).collect::<Vec<_>>(),
        [
            "2024-05-01T10:00:00Z health-update component=mod8 health=broken",
            "2024-05-01T10:00:00Z plan-created broken=mod8 replacements=mod8=mod8r steps=7",
        ]
    );

    let out = bipan(&["pdt", "log", "VIN-404", "--dir", d]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pdt_against_edited_model_is_a_digest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let out = bipan(&[
        "pdt",
        "new",
        "VIN-002",
        path(&data("f1.bipan.json")),
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(0));
    bipan(&[
        "pdt",
        "set-health",
        "VIN-002",
        "mod1",
        "broken",
        "--at",
        "2024-05-01T10:00:00Z",
        "--dir",
        d,
    ]);
    let text = fs::read_to_string(data("f1.bipan.json")).unwrap();
    let edited = dir.path().join("edited.json");
    fs::write(&edited, text.replace("\"Cover\"", "\"Lid\"")).unwrap();
    let out = bipan(&[
        "pdt",
        "plan-repair",
        "VIN-002",
        "--replace",
        "mod1=mod1r",
        "--model",
        path(&edited),
        "--dir",
        d,
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_error_line(&out, "digest-mismatch");
}
