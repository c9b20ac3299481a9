use serde_json::json;

use super::*;
use crate::domain::GuesthouseId;
use crate::protocol::Outgoing;
use crate::protocol::{AgentId, Envelope, Payload, SorryReason};
use crate::router::trace::digest;
use crate::router::{seal, AuthKey, TraceEvent, TraceLine};

fn envelopes(trace: &str) -> Vec<Envelope> {
    trace
        .lines()
        .filter_map(|l| match TraceLine::parse(l).unwrap() {
            TraceLine::Envelope(e) => Some(e),
            TraceLine::Event(_) => None,
        })
        .collect()
}

fn events(trace: &str) -> Vec<TraceEvent> {
    trace
        .lines()
        .filter_map(|l| match TraceLine::parse(l).unwrap() {
            TraceLine::Event(e) => Some(e),
            TraceLine::Envelope(_) => None,
        })
        .collect()
}

fn id(s: &str) -> AgentId {
    s.parse().unwrap()
}

#[test]
fn bundled_scenarios_pass() {
    for name in bundled_names() {
        let out = run(&bundled(name).unwrap(), RunOptions::default()).unwrap();
        assert!(out.report.passed(), "{name}:\n{}", out.report);
        assert!(out.report.quiescent, "{name}");
    }
}

#[test]
fn figure4_finds_the_composite_and_the_single() {
    let out = run(&bundled("figure4").unwrap(), RunOptions::default()).unwrap();
    let trip = out.report.request("trip").unwrap();
    let chains: Vec<Vec<GuesthouseId>> = trip.proposals.iter().map(|p| p.guesthouses.clone()).collect();
    assert_eq!(
        chains,
        vec![vec!["g1".into(), "g3".into()], vec![GuesthouseId::from("g2")]]
    );
    assert_eq!(trip.outcome, Outcome::Booked);
    let sorry = envelopes(&out.trace).into_iter().any(|e| {
        e.sender == id("ga:g2")
            && e.receiver == id("ga:g1")
            && e.payload
                == Payload::CollabSorry {
                    reason: SorryReason::AlreadyParticipating,
                }
    });
    assert!(sorry);
}

#[test]
fn timeout_scenario_records_the_silent_guesthouse() {
    let out = run(&bundled("timeout").unwrap(), RunOptions::default()).unwrap();
    assert_eq!(out.report.request("stay").unwrap().proposals.len(), 2);
    let timed_out = events(&out.trace).into_iter().any(|e| {
        matches!(e, TraceEvent::Timeout { agent, pending, .. } if agent == id("za:z1") && pending == vec![id("ga:g2")])
    });
    assert!(timed_out);
}

#[test]
fn last_room_goes_to_one_user() {
    let out = run(&bundled("race-lastroom").unwrap(), RunOptions::default()).unwrap();
    let outcomes: Vec<Outcome> = out.report.requests.iter().map(|r| r.outcome).collect();
    assert_eq!(outcomes, [Outcome::Booked, Outcome::Failed]);
}

#[test]
fn empty_scenario_runs_clean() {
    let s = Scenario::parse(r#"{"version":1,"name":"empty","seed":0,"horizon":10,"topology":{"zones":[]}}"#).unwrap();
    let out = run(&s, RunOptions::default()).unwrap();
    assert!(envelopes(&out.trace).is_empty());
    assert!(out.report.passed());
    assert!(out.report.requests.is_empty());
}

#[test]
fn horizon_zero_leaves_everything_pending() {
    let out = run(
        &bundled("figure4").unwrap(),
        RunOptions {
            seed: None,
            horizon: Some(0),
        },
    )
    .unwrap();
    assert!(envelopes(&out.trace).is_empty());
    assert!(!out.report.quiescent);
    assert_eq!(out.report.requests[0].outcome, Outcome::Pending);
    assert!(out.report.passed());
}

#[test]
fn same_seed_same_digest() {
    let s = random_scenario(3, 40);
    let a = run(&s, RunOptions::default()).unwrap();
    let b = run(&s, RunOptions::default()).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_eq!(a.digest, digest(&a.trace));
    let c = run(
        &s,
        RunOptions {
            seed: Some(4),
            horizon: None,
        },
    )
    .unwrap();
    assert_ne!(a.digest, c.digest);
}

#[test]
fn random_scenarios_pass_every_property() {
    for seed in 1..=10 {
        let out = run(&random_scenario(seed, 30), RunOptions::default()).unwrap();
        assert!(out.report.passed(), "seed {seed}:\n{}", out.report);
    }
}

fn with_inject(tamper_bit: Option<usize>, from: &str, to: &str) -> Scenario {
    let mut s = bundled("figure4").unwrap();
    s.events.insert(
        1,
        ScenarioEvent::Inject {
            at: 5,
            from: id(from),
            to: id(to),
            performative: "release".into(),
            reference: Some("trip".into()),
            body: json!({"booking_id": "bk-x"}),
            tamper_bit,
        },
    );
    s
}

#[test]
fn forbidden_and_tampered_injections_are_rejected() {
    for (from, to) in [("pa:u1", "ga:g1"), ("pa:u1", "ga:g2")] {
        let out = run(&with_inject(None, from, to), RunOptions::default()).unwrap();
        assert_eq!(out.report.rejected, 1);
        assert!(!envelopes(&out.trace).iter().any(|e| e.msg_id.starts_with('x')));
        assert!(out.report.passed());
    }
    // Untampered and allowed, the forged envelope goes through.
    let out = run(&with_inject(None, "za:z1", "ga:g1"), RunOptions::default()).unwrap();
    assert_eq!(out.report.rejected, 0);
    for bit in [0, 77, 300, 901] {
        let out = run(&with_inject(Some(bit), "za:z1", "ga:g1"), RunOptions::default()).unwrap();
        assert_eq!(out.report.rejected, 1, "bit {bit}");
    }
}

#[test]
fn fault_on_second_leg_fails_the_booking_cleanly() {
    let mut s = bundled("figure4").unwrap();
    s.events.insert(
        1,
        ScenarioEvent::Fault {
            at: 150,
            guesthouse: "g3".into(),
        },
    );
    let out = run(&s, RunOptions::default()).unwrap();
    let trip = out.report.request("trip").unwrap();
    assert_eq!(trip.outcome, Outcome::Failed);
    assert!(out.report.passed(), "{}", out.report);
    assert!(events(&out.trace)
        .iter()
        .any(|e| matches!(e, TraceEvent::FaultArmed { .. })));
}

#[test]
fn admin_updates_are_recorded() {
    let mut s = bundled("figure4").unwrap();
    s.events.insert(
        0,
        ScenarioEvent::Admin {
            at: 0,
            guesthouse: "g2".into(),
            update: serde_json::from_value(
                json!({"calendar": [{"date": "2025-07-03", "room_type": "double", "free": 0}]}),
            )
            .unwrap(),
        },
    );
    let out = run(&s, RunOptions::default()).unwrap();
    let trip = out.report.request("trip").unwrap();
    assert_eq!(trip.proposals.len(), 1, "{}", out.report);
    assert!(events(&out.trace)
        .iter()
        .any(|e| matches!(e, TraceEvent::Admin { result, .. } if result == "applied")));
}

fn planted(trace: &str, extra: &str) -> PropertyReport {
    let mut text = trace.to_owned();
    text.push_str(extra);
    text.push('\n');
    check_trace(&text).unwrap()
}

#[test]
fn planted_pa_to_ga_fails_permission() {
    let out = run(&bundled("figure4").unwrap(), RunOptions::default()).unwrap();
    let rid = out.report.requests[0].request_id.clone();
    let (_, wire) = seal(
        &AuthKey::derive(0, "pa:u1"),
        "p1".into(),
        id("pa:u1"),
        Outgoing {
            to: id("ga:g1"),
            request_id: Some(rid),
            payload: Payload::Release(crate::protocol::BookRef { booking_id: "b".into() }),
        },
        999,
    );
    let report = planted(&out.trace, &wire);
    assert!(!report.get("permission").unwrap().passed);
    assert!(report.get("exclusivity").unwrap().passed);
}

#[test]
fn planted_duplicate_tell_fails_exclusivity() {
    let out = run(&bundled("figure4").unwrap(), RunOptions::default()).unwrap();
    let mut tell = envelopes(&out.trace)
        .into_iter()
        .find(|e| e.sender == id("ga:g2") && matches!(e.payload, Payload::Tell { .. }))
        .unwrap();
    tell.msg_id = "dup".into();
    let report = planted(&out.trace, &tell.encode());
    assert!(!report.get("exclusivity").unwrap().passed);
    assert!(report.get("permission").unwrap().passed);
}

#[test]
fn planted_non_canonical_line_fails_canonical() {
    let out = run(&bundled("figure4").unwrap(), RunOptions::default()).unwrap();
    let first = envelopes(&out.trace).remove(0);
    let spaced = first.encode().replacen(",", ", ", 1).replace("m00000001", "q1");
    let report = planted(&out.trace, &spaced);
    assert!(!report.get("canonical").unwrap().passed);
}

#[test]
fn unknown_bundle_names() {
    assert!(bundled("nope").is_none());
    assert!(bundled("random-x").is_none());
    assert_eq!(bundled("random-3").unwrap().name, "random-3");
}
