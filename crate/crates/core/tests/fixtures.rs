use crsynth_core::synthetic::{write_fixture, SyntheticSpec};

#[test]
fn committed_corpus_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &SyntheticSpec::default()).unwrap();
    let committed = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus");
    for f in ["reviews.jsonl", "items.jsonl"] {
        let want = std::fs::read_to_string(committed.join(f)).unwrap();
        let got = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(want == got, "{f} differs from the generator output; rerun `crsynth make-fixtures fixtures/corpus`");
    }
}
