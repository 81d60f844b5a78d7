#![allow(dead_code)]

use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scenevote_core::parsing::{parse_text, CoercionPolicy};
use scenevote_core::{attribute_registry, DiagnosticKind};

pub const PROVIDERS: [&str; 4] = ["gpt", "gemini", "llama", "pixtral"];
pub const CLOCK: &str = "1700000000";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A scratch copy of the 24-frame fixture (manifest, images, mock replies, providers.toml).
pub fn e2e_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("e2e"), dir.path());
    fs::remove_dir_all(dir.path().join("expected")).unwrap();
    dir
}

pub fn scenevote(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenevote"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = scenevote(cwd, args);
    assert!(
        out.status.success(),
        "scenevote {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn prediction_files() -> Vec<String> {
    PROVIDERS.iter().map(|p| format!("out/predictions/{p}.jsonl")).collect()
}

/// run → eval → ensemble → report with a pinned clock.
pub fn pipeline(cwd: &Path) {
    ok(cwd, &["--clock-epoch", CLOCK, "run", "--manifest", "manifest.jsonl", "--providers", "providers.toml", "--out", "out"]);
    let preds = prediction_files();
    let mut eval = vec!["--clock-epoch", CLOCK, "eval", "--manifest", "manifest.jsonl", "--out", "out"];
    eval.extend(preds.iter().map(String::as_str));
    ok(cwd, &eval);
    let mut ens = vec!["--clock-epoch", CLOCK, "ensemble", "--manifest", "manifest.jsonl", "--out", "out", "--baseline", "gpt"];
    ens.extend(preds.iter().map(String::as_str));
    ok(cwd, &ens);
    ok(cwd, &["--clock-epoch", CLOCK, "report", "--out", "out"]);
}

/// Relative path → bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[derive(Deserialize)]
pub struct ExpectedParse {
    pub policy: String,
    pub fatal: bool,
    pub label: BTreeMap<String, u8>,
    pub diagnostics: Vec<ExpectedDiag>,
}

#[derive(Deserialize)]
pub struct ExpectedDiag {
    pub kind: DiagnosticKind,
    pub key: Option<String>,
}

pub struct ParseCase {
    pub name: String,
    pub text: String,
    pub expected: ExpectedParse,
}

/// The checked-in malformed-output corpus, sorted by name.
pub fn parsing_corpus() -> Vec<ParseCase> {
    let dir = fixtures().join("parsing");
    let mut txts: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    txts.sort();
    txts.into_iter()
        .map(|txt| {
            let name = txt.file_stem().unwrap().to_string_lossy().into_owned();
            let text = fs::read_to_string(&txt).unwrap();
            let expected = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.expected.json"))).unwrap()).unwrap();
            ParseCase { name, text, expected }
        })
        .collect()
}

/// `None` when the case parses to exactly the expected label, diagnostics and fatality.
pub fn check_parse_case(case: &ParseCase) -> Option<String> {
    let schema = attribute_registry();
    let policy = match case.expected.policy.as_str() {
        "strict" => CoercionPolicy::strict(),
        _ => CoercionPolicy::default(),
    };
    let parsed = parse_text(&case.text, &schema, policy);
    let label: BTreeMap<String, u8> = schema.keys().map(|k| (k.to_string(), parsed.label.get(k).unwrap())).collect();
    let diags: Vec<(DiagnosticKind, Option<String>)> = parsed.diagnostics.iter().map(|d| (d.kind, d.key.clone())).collect();
    let want: Vec<(DiagnosticKind, Option<String>)> = case.expected.diagnostics.iter().map(|d| (d.kind, d.key.clone())).collect();
    let fatal_kind = parsed.diagnostics.iter().any(|d| d.kind.is_fatal());
    if parsed.fatal != case.expected.fatal || label != case.expected.label || diags != want || (fatal_kind && !parsed.fatal) {
        return Some(format!("{}: fatal {} label {:?} diags {:?}", case.name, parsed.fatal, label, diags));
    }
    None
}
