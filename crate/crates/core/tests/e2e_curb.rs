// SPDX-License-Identifier: Apache-2.0

mod common;

use chipforge::llm::Role;
use chipforge::prompter::Prompter;
use common::curb;

#[test]
#[ignore]
fn record_curb_cassette() {
    let tmp = tempfile::tempdir().unwrap();
    let path = curb::dir().join("cassette.json");
    let _ = std::fs::remove_file(&path);
    let gw = curb::recording_gateway(&path);
    let (r, _) = curb::validate(&gw, tmp.path());
    r.unwrap();
}

#[test]
fn five_failing_rounds_ask_for_one_manual() {
    let tmp = tempfile::tempdir().unwrap();
    let gw = curb::replay_gateway();
    let (r, prompter) = curb::validate(&gw, tmp.path());
    let out = r.unwrap();
    assert_eq!(prompter.asked(), 1);
    assert_eq!(out.manual_requests, 1);
    assert_eq!(out.iterations, 8);
    assert_eq!(out.rounds.last().unwrap().chosen, 0);
    assert!(out.code.contains("count + 8'd1"));
    assert_eq!(gw.network_calls(), 0);

    let manual = curb::manual();
    let thinker = gw.transcript_for(Role::Thinker);
    assert_eq!(thinker.len(), 16);
    for (i, t) in thinker.iter().enumerate() {
        // rounds 1..=5 come before the manual, 6..=8 after it
        assert_eq!(
            t.user_prompt.contains(manual.as_str()),
            i >= 10,
            "thinker call {i}"
        );
    }
    for t in gw.transcript_for(Role::Coder) {
        assert!(!t.user_prompt.contains(manual.as_str()));
    }
}

#[test]
fn recording_matches_committed_cassette() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cassette.json");
    let gw = curb::recording_gateway(&path);
    curb::validate(&gw, &tmp.path().join("work")).0.unwrap();
    assert_eq!(
        std::fs::read_to_string(path).unwrap(),
        std::fs::read_to_string(curb::dir().join("cassette.json")).unwrap()
    );
}
