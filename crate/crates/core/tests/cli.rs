use std::io::Cursor;

use powerdesk::service::{run_command, EXIT_ANALYSIS_FAILURE, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn run(args: &[&str], input: &str) -> (i32, String, String) {
    let mut argv = vec!["powerdesk"];
    argv.extend_from_slice(args);
    let mut inp = Cursor::new(input.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_command(argv, &mut inp, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn solve_document_has_objective_cost() {
    let (code, out, _) = run(&["solve", "case57", "--format", "document"], "");
    assert_eq!(code, EXIT_OK);
    let doc: Value = serde_json::from_str(&out).unwrap();
    let cost = doc["payload"]["objective_cost"].as_f64().unwrap();
    assert!(cost > 40_000.0 && cost < 43_000.0);
    assert_eq!(doc["validation"]["gates"][0]["passed"], true);
}

#[test]
fn unknown_case_and_bad_usage_exit_codes() {
    let (code, _, err) = run(&["solve", "nosuchcase"], "");
    assert_eq!(code, EXIT_ANALYSIS_FAILURE);
    assert!(err.contains("unknown case 'nosuchcase'"));
    let (code, _, err) = run(&["frobnicate"], "");
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
    let (code, _, _) = run(&["n1", "case14", "--top", "0"], "");
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = run(&["session", "export", "x"], "");
    assert_eq!(code, EXIT_USAGE);
    let (code, out, _) = run(&["--help"], "");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("serve"));
}

#[test]
fn n1_table_lists_all_outages_and_top_five() {
    let (code, out, _) = run(&["n1", "case118", "--scope", "lines"], "");
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.lines().any(|l| l.starts_with("outages") && l.trim_end().ends_with("175")));
    let header = out.lines().position(|l| l.starts_with("rank")).unwrap();
    let rows: Vec<&str> = out.lines().skip(header + 2).filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with('1'));
}

#[test]
fn outage_command_reports_one_element() {
    let (code, out, _) = run(&["outage", "case14", "3"], "");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("2-4"));
    let (code, _, err) = run(&["outage", "case14", "400"], "");
    assert_eq!(code, EXIT_ANALYSIS_FAILURE);
    assert!(!err.is_empty());
}

#[test]
fn repl_session_save_load_and_export_import() {
    let dir = tempfile::tempdir().unwrap();
    let sessions = dir.path().join("sessions");
    let metrics = dir.path().join("m.ndjson");
    let sd = sessions.to_str().unwrap();
    let mf = metrics.to_str().unwrap();
    let (code, out, _) = run(
        &["chat", "--session-dir", sd, "--metrics-file", mf],
        "Solve IEEE 14.\n:status\nplease do the thing\n:bogus\n:save\n:quit\nnever read\n",
    );
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("case14 solved"));
    assert!(out.contains("objective cost ($/hr)"));
    assert!(out.contains("acopf: fresh"));
    assert!(out.contains("contingency: missing"));
    assert!(out.contains("unknown command :bogus"));
    assert!(out.contains("saved to"));
    assert!(!out.contains("never read"));
    let id = out.split("powerdesk session ").nth(1).unwrap().split('.').next().unwrap().to_string();
    let records = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(records.lines().filter(|l| l.contains("\"kind\":\"turn\"")).count(), 2);

    let (code, out, _) = run(&["chat", "--session-dir", sd, "--session", &id], ":status\n");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("case case14"));
    assert!(out.contains("acopf: fresh"));

    let exported = dir.path().join("copy.json");
    let (code, _, _) = run(
        &["session", "export", &id, "--session-dir", sd, "--out", exported.to_str().unwrap()],
        "",
    );
    assert_eq!(code, EXIT_OK);
    let other = dir.path().join("other");
    let (code, out, _) = run(
        &["session", "import", exported.to_str().unwrap(), "--session-dir", other.to_str().unwrap()],
        "",
    );
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), format!("imported {id}"));
    let (code, out, _) = run(&["session", "export", &id, "--session-dir", other.to_str().unwrap()], "");
    assert_eq!(code, EXIT_OK);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["schema_version"], 1);

    let (code, out, _) = run(&["chat"], ":load missing-id\n:quit\n");
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("no session directory configured"));
}
