use std::path::Path;

use groundkit_core::knowledge_prompts::{build_llm_query, query_subject, AttributeSet, Registry};

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn lung_opacity_query_matches_golden() {
    let reg = Registry::load(&data("lung_opacity_registry.json")).unwrap();
    let def = reg.get("lung opacity").unwrap();
    let q = build_llm_query(def, &AttributeSet::default()).unwrap();
    let golden = std::fs::read_to_string(data("lung_opacity_query.txt")).unwrap();
    assert_eq!(q, golden);
    assert!(q.contains("(e.g., shape, location, density, color)"));
    assert_eq!(query_subject(&q), Some("lung opacity"));
}

#[test]
fn builtin_registry_queries_build() {
    let reg = Registry::builtin();
    assert_eq!(reg.len(), 22);
    for def in reg.definitions() {
        let q = build_llm_query(def, &AttributeSet::default()).unwrap();
        assert_eq!(query_subject(&q), Some(def.name.as_str()));
    }
}
