mod support;

use crsynth_core::filters::{apply_filters_with, FilterConfig, Rule, VerdictStatus};
use crsynth_core::gateway::NliScores;

#[test]
fn hand_assigned_verdicts() {
    let n = support::check_filter_fixtures().unwrap();
    assert!(n >= 12);
}

#[test]
fn every_rule_is_covered() {
    let covered: std::collections::BTreeSet<Rule> =
        support::filter_fixtures().iter().flat_map(|f| f.failed.clone()).collect();
    assert_eq!(covered.len(), Rule::ALL.len());
}

#[test]
fn boundary_scores_are_strict() {
    for f in support::filter_fixtures()
        .iter()
        .filter(|f| f.name.starts_with("persona-0.7") || f.name.starts_with("guess-0.7"))
    {
        let v = support::run_fixture(f);
        let fired = !v.failed_rules.is_empty();
        assert_eq!(fired, f.name.ends_with("0.71"), "{}", f.name);
    }
}

#[test]
fn evidence_points_at_the_turns() {
    let f = support::filter_fixtures().into_iter().find(|f| f.name == "guess-0.71").unwrap();
    let v = support::run_fixture(&f);
    let ev = &v.evidence[&Rule::GuessContradiction];
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].turns, vec![4, 5]);
    assert_eq!(ev[0].score, Some(0.71));
}

#[test]
fn report_counts_only_judged_dialogues() {
    let fixtures = support::filter_fixtures();
    let dialogues: Vec<_> = fixtures.iter().map(|f| f.dialogue.clone()).collect();
    let nli = |_: &str, _: &str| Ok(NliScores { entail: 0.5, neutral: 0.5, contradict: 0.0 });
    let out = apply_filters_with(&dialogues, &nli, &FilterConfig::default(), 4);
    let r = &out.report;
    assert_eq!(r.total, dialogues.len());
    assert_eq!(r.incomplete, 1);
    assert_eq!(r.held, 0);
    assert_eq!(r.judged + r.incomplete, r.total);
    assert_eq!(r.kept + r.removed, r.judged);
    assert_eq!(out.kept.len(), r.kept);
    assert!((r.removal_rate - r.removed as f64 / r.judged as f64).abs() < 1e-12);
    assert!(out.verdicts.iter().all(|v| v.status != VerdictStatus::Held));
    // verdicts come back in input order
    let ids: Vec<_> = out.verdicts.iter().map(|v| v.dialogue_id.clone()).collect();
    let want: Vec<_> = dialogues.iter().map(|d| d.dialogue_id.clone()).collect();
    assert_eq!(ids, want);
}
