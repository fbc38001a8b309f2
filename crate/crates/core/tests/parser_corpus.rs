use serde::Deserialize;

use mapnav::actions::{default_ruleset, parse_action, Action};

#[derive(Deserialize)]
struct Case {
    text: String,
    action: Action,
    #[serde(default)]
    offset: Option<usize>,
}

#[derive(Deserialize)]
struct Corpus {
    phrases: Vec<Case>,
    variants: Vec<Case>,
    distractors: Vec<String>,
    multi: Vec<Case>,
}

fn corpus() -> Corpus {
    let p = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/parser/corpus.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn phrases_and_variants_parse() {
    let c = corpus();
    let rules = default_ruleset();
    assert!(c.variants.len() >= 50);
    let wrong: Vec<_> = c
        .phrases
        .iter()
        .chain(&c.variants)
        .filter(|k| parse_action(&k.text, &rules).ok() != Some(k.action))
        .map(|k| &k.text)
        .collect();
    assert!(wrong.is_empty(), "misparsed: {wrong:?}");
}

#[test]
fn distractors_do_not_match() {
    let c = corpus();
    let rules = default_ruleset();
    assert_eq!(c.distractors.len(), 50);
    let hits: Vec<_> = c
        .distractors
        .iter()
        .filter_map(|d| rules.find(d).map(|m| (d, m)))
        .collect();
    assert!(hits.is_empty(), "false positives: {hits:?}");
}

#[test]
fn earliest_phrase_wins() {
    let c = corpus();
    let rules = default_ruleset();
    assert_eq!(c.multi.len(), 10);
    for k in &c.multi {
        let m = rules.find(&k.text).unwrap_or_else(|| panic!("{}", k.text));
        assert_eq!((m.action, Some(m.offset)), (k.action, k.offset), "{}", k.text);
    }
}
