mod common;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;

use msqgate::evaluate::EscalationRecord;
use msqgate::store::{EscalationKey, StoreError, ESCALATIONS_FILE, EVENTS_FILE, SNAPSHOTS_FILE};
use msqgate::{evaluate_week, init_project, Disposition, ProjectStore, StatusSnapshot};
use proptest::prelude::*;

use common::*;

fn snapshots() -> impl Strategy<Value = Vec<StatusSnapshot>> {
    prop::collection::btree_map(
        (prop::sample::select(vec!["m1", "m2", "Open customer defects"]), 0i64..60),
        prop::collection::btree_map(
            prop::sample::select(vec!["issued", "assigned", "verifying", "exit CCB"]),
            0u64..500,
            0..4,
        ),
        0..25,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|((metric, off), counts)| {
                StatusSnapshot::new(
                    metric,
                    week("2013-W34").offset(off),
                    counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                )
            })
            .collect()
    })
}

fn fresh() -> (tempfile::TempDir, ProjectStore) {
    let dir = tempfile::tempdir().unwrap();
    let store = init_project(dir.path(), "demo").unwrap();
    (dir, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshots_round_trip(snaps in snapshots(), split in any::<prop::sample::Index>()) {
        let (dir, store) = fresh();
        let cut = split.index(snaps.len() + 1);
        store.append_snapshots(&snaps[..cut]).unwrap();
        store.append_snapshots(&snaps[cut..]).unwrap();
        let reopened = ProjectStore::open(dir.path(), "demo").unwrap();
        prop_assert_eq!(reopened.snapshots().unwrap(), snaps.clone());
        if let Some(first) = snaps.first() {
            let again = store.append_snapshots(std::slice::from_ref(first));
            let is_duplicate = matches!(again, Err(StoreError::DuplicateSnapshot { .. }));
            prop_assert!(is_duplicate);
            prop_assert_eq!(reopened.snapshots().unwrap().len(), snaps.len());
        }
    }

    #[test]
    fn latest_disposition_wins(changes in prop::collection::vec(0usize..4, 0..8)) {
        let (_dir, store) = fresh();
        let schedule = pilot_schedule();
        let last = schedule.last_week();
        let event = evaluate_week(&StatusSnapshot::new(METRIC, last, BTreeMap::from([("issued".to_string(), 4)])), &schedule).unwrap();
        let key = store.append_escalation(&event).unwrap();
        let all = [Disposition::Open, Disposition::RootCauseRecorded, Disposition::Replanned, Disposition::Resolved];
        let mut want = Disposition::Open;
        for (i, &c) in changes.iter().enumerate() {
            store.update_disposition(&key, all[c], &format!("step {i}")).unwrap();
            want = all[c];
        }
        let rec = store.escalation(METRIC, last).unwrap().unwrap();
        prop_assert_eq!(rec.disposition, want);
        prop_assert_eq!(store.escalations().unwrap().len(), 1);
        prop_assert_eq!(store.list_open_escalations().unwrap().len(), usize::from(want == Disposition::Open));
        let lines = std::fs::read_to_string(store.path(ESCALATIONS_FILE)).unwrap();
        prop_assert_eq!(lines.lines().count(), 1 + changes.len());
    }
}

#[test]
fn escalation_lines_are_full_records() {
    let (_dir, store) = fresh();
    let schedule = pilot_schedule();
    let w = week("2013-W40");
    let event =
        evaluate_week(&StatusSnapshot::new(METRIC, w, BTreeMap::from([("assigned".to_string(), 491)])), &schedule)
            .unwrap();
    store.append_escalation(&event).unwrap();
    assert!(matches!(store.append_escalation(&event), Err(StoreError::DuplicateEscalation { .. })));
    let key = EscalationKey { metric: METRIC.into(), week: w };
    store.update_disposition(&key, Disposition::RootCauseRecorded, "late reviews").unwrap();

    let text = std::fs::read_to_string(store.path(ESCALATIONS_FILE)).unwrap();
    let lines: Vec<EscalationRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].actual, lines[0].actual);
    assert_eq!(lines[1].level, msqgate::evaluate::Level::Level1);
    assert_eq!(lines[1].from_role.as_deref(), Some("Project Quality Leader"));
    assert_eq!(lines[1].note, "late reviews");
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "actual",
            "disposition",
            "from_role",
            "level",
            "metric",
            "note",
            "out_of_range",
            "pct",
            "threshold",
            "to_role",
            "week"
        ]
    );

    let missing = EscalationKey { metric: METRIC.into(), week: w.succ() };
    assert!(matches!(
        store.update_disposition(&missing, Disposition::Resolved, ""),
        Err(StoreError::UnknownEscalation { .. })
    ));
}

#[test]
fn truncated_tail_is_detected_and_blocks_appends() {
    let (_dir, store) = fresh();
    let w = week("2013-W34");
    store.append_snapshots(&[StatusSnapshot::empty("m1", w)]).unwrap();
    let mut f = OpenOptions::new().append(true).open(store.path(SNAPSHOTS_FILE)).unwrap();
    f.write_all(br#"{"metric":"m1","week":"2013-W3"#).unwrap();
    drop(f);
    assert!(matches!(store.snapshots(), Err(StoreError::TruncatedTail { line: 2, .. })));
    assert!(store.append_snapshots(&[StatusSnapshot::empty("m1", w.succ())]).is_err());

    let mut f = OpenOptions::new().append(true).open(store.path(EVENTS_FILE)).unwrap();
    f.write_all(br#"{"item":"D-1""#).unwrap();
    drop(f);
    let lines: Vec<_> = msqgate::parse_event_log(include_str!("fixtures/events_50.jsonl").as_bytes())
        .unwrap()
        .iter()
        .flat_map(|r| r.to_lines().collect::<Vec<_>>())
        .collect();
    assert!(matches!(store.append_events(&lines), Err(StoreError::TruncatedTail { .. })));
}

#[test]
fn events_round_trip_and_stay_valid() {
    let (_dir, store) = fresh();
    let records = msqgate::parse_event_log(include_str!("fixtures/events_50.jsonl").as_bytes()).unwrap();
    let lines: Vec<_> = records.iter().flat_map(|r| r.to_lines().collect::<Vec<_>>()).collect();
    assert_eq!(store.append_events(&lines).unwrap(), 50);
    assert_eq!(store.load_events().unwrap(), records);
    // replaying the same lines would duplicate events
    assert!(store.append_events(&lines[..1]).is_err());
    assert_eq!(store.load_events().unwrap(), records);
}

#[test]
fn store_layout_and_ids() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(init_project(dir.path(), "../x"), Err(StoreError::InvalidProjectId(_))));
    init_project(dir.path(), "p1").unwrap();
    assert!(init_project(dir.path(), "p1").is_err());
    assert!(matches!(ProjectStore::open(dir.path(), "p2"), Err(StoreError::NotAStore(_))));
}

#[test]
fn concurrent_writer_is_refused() {
    let (_dir, store) = fresh();
    let held = store.lock().unwrap();
    assert!(matches!(
        store.append_snapshots(&[StatusSnapshot::empty("m1", week("2013-W34"))]),
        Err(StoreError::Locked(_))
    ));
    drop(held);
    store.append_snapshots(&[StatusSnapshot::empty("m1", week("2013-W34"))]).unwrap();
}
