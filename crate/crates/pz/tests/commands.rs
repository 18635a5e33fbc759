use std::path::Path;

use clap::Parser;
use pz::cli::{dispatch, Cli};
use pz::context::Context;
use pz_core::dialogue::Session;
use pz_core::gateway::{Gateway, GatewayError, Purpose};
use pz_core::kb::OutlineCatalog;
use pz_core::samples::{pancreatitis_outline, pancreatitis_record};
use pz_core::store::{RecordStore, SessionStore};
use serde_json::Value;
use tempfile::TempDir;

/// Patient always answers "Fine."; the judge finds one entailed claim per
/// reply; rubric and accuracy prompts get fixed verdicts.
fn scripted() -> Gateway {
    Gateway::scripted(|req| match req.purpose {
        Purpose::Patient => Ok("Fine.".into()),
        Purpose::Judge => Ok("E".into()),
        Purpose::Extract => Ok(r#"["Patient feels fine"]"#.into()),
        Purpose::Evaluator if req.full_text().contains("ACCURATE") => Ok("Matches the outline. ACCURATE".into()),
        Purpose::Evaluator => Ok("SCORE: 5".into()),
        purpose => Err(GatewayError::FixtureMiss { purpose }),
    })
}

fn setup() -> (TempDir, Context) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    RecordStore::open(root.join("data/records"))
        .unwrap()
        .append_record(&pancreatitis_record())
        .unwrap();
    OutlineCatalog::open(root.join("kb"))
        .unwrap()
        .add_approved(pancreatitis_outline())
        .unwrap();
    let ctx = Context::new(&root.join("data"), &root.join("kb"), &root.join("banks"), 0, None, scripted()).unwrap();
    (tmp, ctx)
}

fn run(ctx: &Context, args: &[&str]) {
    let cli = Cli::try_parse_from(std::iter::once("pz").chain(args.iter().copied())).unwrap();
    dispatch(ctx, cli.command).unwrap();
}

fn reports(dir: &Path, prefix: &str) -> Vec<Value> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir.join("data/reports")).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap().to_string_lossy().starts_with(prefix) {
            out.push(serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap());
        }
    }
    out
}

#[test]
fn simulate_two_rounds_without_updates() {
    let (tmp, ctx) = setup();
    run(&ctx, &["simulate", "--record", "00001", "--style", "verbose", "--rounds", "2", "--no-memory-update"]);
    let report = &reports(tmp.path(), "simulation-")[0];
    assert_eq!(report["patient_turns"], 26);
    assert_eq!(report["rounds"], 2);
    let hashes = report["round_initial_hashes"].as_array().unwrap();
    assert_eq!(hashes[0], hashes[1]);

    let store = SessionStore::new(tmp.path().join("data/sessions"));
    let mut ids = store.list().unwrap();
    ids.sort();
    assert_eq!(ids.len(), 2);
    for id in ids {
        let s = Session::load(&store, &id).unwrap();
        assert!(s.closed);
        assert_eq!(s.patient_turns().count(), 13);
    }
}

#[test]
fn department_bank_overrides_default() {
    let (tmp, ctx) = setup();
    std::fs::create_dir_all(tmp.path().join("banks")).unwrap();
    std::fs::write(tmp.path().join("banks/General Surgery.txt"), "# short bank\nWhere does it hurt?\nAny fever?\n").unwrap();
    run(&ctx, &["simulate", "--record", "00001", "--memory-format", "structured"]);
    assert_eq!(reports(tmp.path(), "simulation-")[0]["patient_turns"], 2);
}

#[test]
fn evaluate_dialogue_of_stored_session() {
    let (tmp, ctx) = setup();
    run(&ctx, &["simulate", "--record", "00001"]);
    let id = SessionStore::new(tmp.path().join("data/sessions")).list().unwrap().remove(0);
    run(&ctx, &["evaluate", "dialogue", "--session", &id]);
    let report = &reports(tmp.path(), "dialogue-")[0];
    assert_eq!(report["consistency"], "100.00%");
    assert_eq!(report["scores"]["total_claims"], 13);
    assert_eq!(report["scores"]["emotional_consistency"], 5.0);
}

#[test]
fn evaluate_accuracy_of_record_file() {
    let (tmp, ctx) = setup();
    let file = tmp.path().join("data/records/General Surgery.jsonl");
    run(&ctx, &["evaluate", "accuracy", "--records", file.to_str().unwrap()]);
    let report = &reports(tmp.path(), "accuracy-")[0];
    assert_eq!(report["accuracy"], "100.00%");
    assert_eq!(report["summary"]["total"], 1);
}
