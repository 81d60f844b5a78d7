mod common;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use scenevote_core::attribute_registry;
use scenevote_core::parsing::{parse_response, CoercionPolicy};
use scenevote_core::providers::ModelResponse;

#[test]
fn corpus_has_every_failure_family() {
    let names: Vec<String> = common::parsing_corpus().into_iter().map(|c| c.name).collect();
    assert!(names.len() >= 20, "only {} fixtures", names.len());
    for family in ["fenced", "prose", "refusal", "missing", "string_integer", "out_of_range", "duplicate"] {
        assert!(names.iter().any(|n| n.contains(family)), "no fixture for {family}");
    }
}

#[test]
fn corpus_matches_expectations() {
    let failures: Vec<String> = common::parsing_corpus().iter().filter_map(common::check_parse_case).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

fn random_text(rng: &mut StdRng) -> String {
    const PIECES: &[&str] = &[
        "{", "}", "[", "]", "\"", ":", ",", "\\", "```json", "```", "\n", " ", "Ambient", "\"Weather\"", "\"Types\": \"2\"", "3", "-1",
        "1.5", "null", "true", "1e400", "\u{1F600}", "é", "{\"Tunnel\": 1}",
    ];
    let len = rng.random_range(0..40);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.7) {
                PIECES[rng.random_range(0..PIECES.len())].to_string()
            } else {
                char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?').to_string()
            }
        })
        .collect()
}

#[test]
fn fuzz_parse_response() {
    let schema = attribute_registry();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for i in 0..10_000 {
        let text = random_text(&mut rng);
        let resp = ModelResponse {
            provider_id: "fuzz".into(),
            frame_id: format!("f{i}"),
            raw_text: Some(text),
            latency_ms: 0,
            attempt_count: 1,
            from_cache: false,
            error: None,
        };
        let policy = if i % 2 == 0 { CoercionPolicy::default() } else { CoercionPolicy::strict() };
        let record = parse_response(&resp, &schema, policy);
        assert_eq!(record.label.values().len(), 21);
        if record.fatal {
            assert!(record.label.values().iter().all(|&v| v == 0));
        }
    }
}
