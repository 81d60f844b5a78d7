mod common;

use common::*;
use serde_json::Value;
use std::fs;
use std::path::Path;

use scenevote_core::cli::{EXIT_AUTH, EXIT_CONFIG, EXIT_USAGE};
use scenevote_core::metrics::{Prf, RunSummary};
use scenevote_core::predictions::PredictionSet;
use scenevote_core::prompt::{build_prompt, PROMPT_SHA256};

const TOL: f64 = 1e-12;

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= TOL, "{what}: {a} vs {b}");
}

fn assert_prf(got: &Prf, want: &Value, what: &str) {
    close(got.precision, want["precision"].as_f64().unwrap(), &format!("{what} precision"));
    close(got.recall, want["recall"].as_f64().unwrap(), &format!("{what} recall"));
    close(got.f1, want["f1"].as_f64().unwrap(), &format!("{what} f1"));
}

fn assert_matches_oracle(summary: &RunSummary, oracle: &Value) {
    let id = &summary.provider_id;
    assert_eq!(id, oracle["provider_id"].as_str().unwrap());
    assert_eq!(summary.frames_scored as u64, oracle["frames_scored"].as_u64().unwrap(), "{id}");
    assert_eq!(summary.fatal_records as u64, oracle["fatal_records"].as_u64().unwrap(), "{id}");
    let want = oracle["per_attribute"].as_object().unwrap();
    assert_eq!(summary.per_attribute.len(), want.len());
    for ((key, got), (wkey, w)) in summary.per_attribute.iter().zip(want) {
        assert_eq!(key, wkey, "attribute order");
        assert_prf(&got.weighted, w, &format!("{id} {key}"));
        assert_eq!(got.support, w["support"].as_u64().unwrap());
    }
    assert_prf(&summary.macro_avg, &oracle["macro"], &format!("{id} macro"));
    assert_prf(&summary.support_weighted_macro, &oracle["support_weighted_macro"], &format!("{id} support-weighted"));
}

#[test]
fn pipeline_matches_brute_force_oracle() {
    let ws = e2e_workspace();
    pipeline(ws.path());
    let expected = fixtures().join("e2e/expected");

    for p in PROVIDERS {
        let summary: RunSummary = serde_json::from_value(read_json(&ws.path().join(format!("out/metrics/{p}.json")))).unwrap();
        assert_matches_oracle(&summary, &read_json(&expected.join(format!("{p}.json"))));
    }

    let names: Vec<String> = serde_json::from_value(read_json(&expected.join("ensembles.json"))).unwrap();
    let index = read_json(&ws.path().join("out/ensembles/index.json"));
    assert_eq!(index["ensembles"], serde_json::json!(names));
    assert_eq!(index["baseline"], "gpt");
    for name in &names {
        let doc = read_json(&ws.path().join(format!("out/ensembles/{name}.json")));
        let oracle = read_json(&expected.join(format!("{name}.json")));
        let summary: RunSummary = serde_json::from_value(doc["summary"].clone()).unwrap();
        assert_matches_oracle(&summary, &oracle);
        for (key, want) in oracle["delta_vs_gpt"].as_object().unwrap() {
            let got: Prf = serde_json::from_value(doc["delta"]["per_attribute"][key].clone()).unwrap();
            assert_prf(&got, want, &format!("{name} delta {key}"));
        }
        let voted = PredictionSet::read_jsonl(&ws.path().join(format!("out/ensembles/{name}.jsonl"))).unwrap();
        assert_eq!(voted.provider_id, *name);
        assert_eq!(voted.len(), 20);
    }

    for chart in ["radar_f1", "radar_recall", "radar_precision", "summary_macro", "summary_support_weighted", "delta_f1"] {
        for ext in ["json", "csv", "svg"] {
            assert!(ws.path().join(format!("out/charts/{chart}.{ext}")).exists(), "{chart}.{ext}");
        }
    }
    let meta = read_json(&ws.path().join("out/run_meta.json"));
    assert_eq!(meta["prompt_sha256"], PROMPT_SHA256);
    for cmd in ["run", "eval", "ensemble", "report"] {
        assert_eq!(meta["commands"][cmd]["started_at"], "2023-11-14T22:13:20Z", "{cmd}");
    }
    assert_eq!(meta["commands"]["ensemble"]["priority"], serde_json::json!(PROVIDERS));
    assert_eq!(meta["commands"]["ensemble"]["vote_space"], "binarized");
}

#[test]
fn run_records_and_fatal_exclusion() {
    let ws = e2e_workspace();
    let stdout = ok(ws.path(), &["run", "--manifest", "manifest.jsonl", "--providers", "providers.toml"]);
    assert!(stdout.contains("network requests: 80"), "{stdout}");

    let llama = PredictionSet::read_jsonl(&ws.path().join("out/predictions/llama.jsonl")).unwrap();
    let fatal: Vec<&str> = llama.records.values().filter(|r| r.fatal).map(|r| r.frame_id.as_str()).collect();
    assert_eq!(fatal, vec!["f009"]);
    let ids: Vec<&str> = llama.records.keys().map(String::as_str).collect();
    assert_eq!(ids.len(), 20);
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "manifest order");

    ok(ws.path(), &["eval", "--manifest", "manifest.jsonl", "--fatal", "exclude", "out/predictions/llama.jsonl"]);
    let summary: RunSummary = serde_json::from_value(read_json(&ws.path().join("out/metrics/llama.json"))).unwrap();
    assert_eq!(summary.frames_scored, 19);
    assert_eq!(summary.frames_excluded, 1);
    assert_eq!(summary.fatal_records, 1);
}

#[test]
fn warm_cache_makes_no_requests() {
    let ws = e2e_workspace();
    let args = ["run", "--manifest", "manifest.jsonl", "--providers", "providers.toml"];
    ok(ws.path(), &args);
    let second = ok(ws.path(), &args);
    assert!(second.contains("network requests: 0"), "{second}");
    for p in PROVIDERS {
        let set = PredictionSet::read_jsonl(&ws.path().join(format!("out/predictions/{p}.jsonl"))).unwrap();
        assert!(set.records.values().all(|r| r.from_cache && r.attempt_count == 0), "{p}");
    }
}

#[test]
fn ensemble_rejects_two_files() {
    let ws = e2e_workspace();
    ok(ws.path(), &["run", "--manifest", "manifest.jsonl", "--providers", "providers.toml"]);
    let out = scenevote(
        ws.path(),
        &["ensemble", "--manifest", "manifest.jsonl", "out/predictions/gpt.jsonl", "out/predictions/gemini.jsonl"],
    );
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn distinct_exit_codes() {
    let ws = e2e_workspace();
    assert_eq!(scenevote(ws.path(), &["run", "--bogus"]).status.code(), Some(EXIT_USAGE));

    let missing = scenevote(ws.path(), &["run", "--manifest", "manifest.jsonl", "--providers", "nope.toml"]);
    assert_eq!(missing.status.code(), Some(EXIT_CONFIG));

    fs::write(
        ws.path().join("hosted.toml"),
        "[[provider]]\nid = \"gpt\"\nadapter = \"openai_chat_vision\"\nbase_url = \"http://127.0.0.1:9/v1\"\nmodel = \"gpt-4o\"\nauth_env_var = \"SCENEVOTE_CLI_TEST_UNSET_KEY\"\n",
    )
    .unwrap();
    let auth = scenevote(ws.path(), &["run", "--manifest", "manifest.jsonl", "--providers", "hosted.toml"]);
    assert_eq!(auth.status.code(), Some(EXIT_AUTH));
    let err: Value = serde_json::from_slice(&auth.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "auth");
    assert!(!ws.path().join("out/predictions").exists());
}

#[test]
fn prompt_and_dataset_commands() {
    let ws = e2e_workspace();
    assert_eq!(ok(ws.path(), &["prompt", "hash"]).trim(), PROMPT_SHA256);
    assert_eq!(ok(ws.path(), &["prompt", "show"]), build_prompt().unwrap().as_str());

    let stats: Value = serde_json::from_str(&ok(ws.path(), &["dataset", "stats", "--manifest", "manifest.jsonl", "--json"])).unwrap();
    assert_eq!(stats["frames"], 24);
    assert_eq!(stats["exclusions"]["retained"], 20);
    assert_eq!(stats["exclusions"]["by_reason"]["stationary_vehicle"], 2);
    assert_eq!(stats["attributes"].as_object().unwrap().len(), 21);
    let text = ok(ws.path(), &["dataset", "stats", "--manifest", "manifest.jsonl"]);
    assert!(text.starts_with("frames: 24 (20 retained, 4 excluded)"), "{text}");

    let schema = ok(ws.path(), &["schema"]);
    assert_eq!(schema, fs::read_to_string(fixtures().join("schema.golden.json")).unwrap());
}
