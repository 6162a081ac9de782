mod common;

use std::fs;
use std::sync::Arc;

use artrec_service::session::{Feedback, Sessions};
use artrec_service::store::{replay_dir, EVENTS_FILE};
use common::*;

/// Drives a mixed workload and records the state after every event.
fn workload(study: &artrec_service::Study) -> Vec<Sessions> {
    let mut states = Vec::new();
    let mut ids = Vec::new();
    for (k, style) in ["ant", "fish", "grasshopper"].iter().enumerate() {
        let st = study.create_session(Default::default(), Some(style)).unwrap();
        states.push(study.sessions());
        let shown = study.elicitation(&st.session_id).unwrap();
        let ratings: Vec<(String, i64)> = shown
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), 1 + ((i + k) as i64 % 5)))
            .collect();
        study.submit_ratings(&st.session_id, &ratings).unwrap();
        states.push(study.sessions());
        ids.push(st.session_id);
    }
    let fb = Feedback::new(2, 3, 4, 5).unwrap();
    for (k, id) in ids.iter().enumerate() {
        // sessions stop at different depths; the last one finishes
        let depth = [2, 3, 5][k];
        for i in 0..depth {
            let rec = study.recommendations(id, i).unwrap();
            states.push(study.sessions());
            study.submit_feedback(id, rec.engine_id.as_str(), fb).unwrap();
            states.push(study.sessions());
        }
    }
    states
}

#[test]
fn replay_of_every_prefix_matches_live_state() {
    let dir = tempfile::tempdir().unwrap();
    let log_dir = dir.path().join("log");
    let study = synthetic_study(60, &log_dir, 0);
    let states = workload(&study);
    drop(study);

    let text = fs::read_to_string(log_dir.join(EVENTS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), states.len());
    for (k, state) in states.iter().enumerate() {
        let crash = dir.path().join(format!("crash{k}"));
        fs::create_dir_all(&crash).unwrap();
        let prefix: String = lines[..=k].iter().map(|l| format!("{l}\n")).collect();
        fs::write(crash.join(EVENTS_FILE), prefix).unwrap();
        assert_eq!(&replay_dir(&crash).unwrap(), state, "after event {}", k + 1);
    }
}

#[test]
fn reopen_with_snapshots_restores_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let log_dir = dir.path().join("log");
    let study = synthetic_study(60, &log_dir, 4);
    let states = workload(&study);
    let before = study.sessions();
    assert_eq!(&before, states.last().unwrap());
    drop(study);
    assert!(log_dir.join("snapshot.json").exists());

    let reopened = synthetic_study(60, &log_dir, 4);
    assert_eq!(reopened.sessions(), before);
    // new sessions continue without id clashes and the log stays replayable
    let st = reopened.create_session(Default::default(), Some("butterfly")).unwrap();
    assert!(!before.contains_key(&st.session_id));
    let after = reopened.sessions();
    drop(reopened);
    assert_eq!(replay_dir(&log_dir).unwrap(), after);
}

#[test]
fn torn_write_after_crash_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let log_dir = dir.path().join("log");
    let study = synthetic_study(40, &log_dir, 0);
    let states = workload(&study);
    drop(study);
    let path = log_dir.join(EVENTS_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(br#"{"seq":999,"at":"2026-01-01T00:00"#);
    fs::write(&path, bytes).unwrap();
    let reopened = Arc::new(synthetic_study(40, &log_dir, 0));
    assert_eq!(&reopened.sessions(), states.last().unwrap());
    reopened.create_session(Default::default(), Some("ant")).unwrap();
}
