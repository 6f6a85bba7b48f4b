mod support;

use std::sync::atomic::AtomicBool;

use crsynth_core::dialogue::{Dialogue, Outcome};
use crsynth_core::engine::{run_batch, BatchSpec, SessionConfig};
use crsynth_core::jsonl;

#[test]
fn protocol_holds_over_mock_dialogues() {
    let world = support::mock_world(21, 0.0);
    let dialogues = world.run(2, 4, 8);
    assert_eq!(dialogues.len(), 100);
    let bad = support::protocol_violations(&world, &dialogues);
    assert!(bad.is_empty(), "{bad:#?}");
    let accepted = dialogues.iter().filter(|d| d.outcome == Outcome::AcceptedTarget).count();
    assert!(accepted >= 90, "{accepted}");
}

#[test]
fn output_does_not_depend_on_parallelism() {
    let a = support::mock_world(5, 0.2).run(1, 9, 1);
    let b = support::mock_world(5, 0.2).run(1, 9, 8);
    assert_eq!(a, b);
}

#[test]
fn resume_completes_a_torn_checkpoint() {
    let world = support::mock_world(8, 0.0);
    let spec = BatchSpec {
        users: world.users.users.keys().take(10).cloned().collect(),
        per_user: 2,
        global_seed: 3,
        parallelism: 4,
    };
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("partial.jsonl");
    let never = AtomicBool::new(false);
    let full = run_batch(&world.ctx(), &SessionConfig::default(), &spec, Some(&log), false, &never).unwrap();
    assert_eq!(full.dialogues.len(), 20);

    // keep 7 records and half of the 8th, as after a crash mid-write
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let torn = format!("{}\n{}", lines[..7].join("\n"), &lines[7][..lines[7].len() / 2]);
    std::fs::write(&log, torn).unwrap();

    let resumed = run_batch(&world.ctx(), &SessionConfig::default(), &spec, Some(&log), true, &never).unwrap();
    assert_eq!(resumed.report.resumed, 7);
    assert_eq!(resumed.dialogues, full.dialogues);
    let on_disk: Vec<Dialogue> = jsonl::read_log(&log).unwrap();
    assert_eq!(on_disk.len(), 20);
}

#[test]
fn cancellation_stops_new_sessions() {
    let world = support::mock_world(8, 0.0);
    let spec =
        BatchSpec { users: world.users.users.keys().cloned().collect(), per_user: 1, global_seed: 3, parallelism: 2 };
    let out = run_batch(&world.ctx(), &SessionConfig::default(), &spec, None, false, &AtomicBool::new(true)).unwrap();
    assert!(out.report.interrupted);
    assert!(out.dialogues.is_empty());
}

#[test]
fn cardinality_and_ids() {
    let world = support::mock_world(2, 0.0);
    let d = world.run(3, 1, 8);
    assert_eq!(d.len(), 150);
    let ids: std::collections::BTreeSet<_> = d.iter().map(|d| d.dialogue_id.clone()).collect();
    assert_eq!(ids.len(), 150);
    for w in d.windows(2) {
        assert!((&w[0].user_id, w[0].replica) < (&w[1].user_id, w[1].replica));
    }
}

#[test]
fn defects_are_removed_at_the_injected_rate() {
    let (world, planted) = support::planned_world(1, 12, 7, 0.2);
    assert_eq!(planted, 120);
    let d = world.run(12, 7, 8);
    assert!(d.len() >= 500);
    let out = crsynth_core::filters::apply_filters(&d, &world.gateway, &Default::default(), 8);
    assert!((out.report.removal_rate - 0.2).abs() <= 0.03, "{:?}", out.report);
}
