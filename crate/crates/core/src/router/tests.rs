use std::sync::Arc;

use super::*;
use crate::domain::{BookingId, RequestId};
use crate::protocol::{Action, Agent, BookRef, Command, Payload, ProtocolConfig, Timer};
use crate::store::{Store, StoreConfig};

fn id(s: &str) -> AgentId {
    s.parse().unwrap()
}

fn key_of(a: &AgentId) -> AuthKey {
    AuthKey::derive(1, &a.to_string())
}

fn router() -> Router {
    let mut reg = Registry::new();
    for a in ["na", "za:z1", "za:z2", "pa:u1", "cma:u1"] {
        reg.register(AgentRecord::new(id(a), key_of(&id(a))), None).unwrap();
    }
    for (g, z) in [("ga:g1", "z1"), ("ga:g2", "z1"), ("ga:g9", "z2")] {
        reg.register(AgentRecord::new(id(g), key_of(&id(g))), Some(z.into()))
            .unwrap();
    }
    Router::new(reg, PermissionMatrix::default())
}

fn wire(from: &str, to: &str) -> String {
    let out = Outgoing {
        to: id(to),
        request_id: Some(RequestId::from("r1")),
        payload: Payload::Release(BookRef {
            booking_id: BookingId::from("b1"),
        }),
    };
    seal(&key_of(&id(from)), "m1".into(), id(from), out, 0).1
}

#[test]
fn allowed_pair_is_admitted() {
    let r = router();
    let env = r.admit(wire("za:z1", "ga:g1").as_bytes()).unwrap();
    assert_eq!(env.sender, id("za:z1"));
    r.admit(wire("ga:g1", "ga:g2").as_bytes()).unwrap();
}

#[test]
fn forbidden_pairs_are_refused() {
    let r = router();
    for (from, to) in [
        ("pa:u1", "ga:g1"),
        ("cma:u1", "za:z1"),
        ("na", "ga:g1"),
        ("cma:u1", "na"),
    ] {
        let err = r.admit(wire(from, to).as_bytes()).unwrap_err();
        assert_eq!(err.reason, RejectReason::Permission, "{from}->{to}");
    }
    let err = r.admit(wire("ga:g1", "ga:g9").as_bytes()).unwrap_err();
    assert_eq!(err.reason, RejectReason::Permission);
}

#[test]
fn unknown_parties() {
    let r = router();
    assert_eq!(
        r.admit(wire("za:z1", "ga:nope").as_bytes()).unwrap_err().reason,
        RejectReason::Routing
    );
    assert_eq!(
        r.admit(wire("za:z7", "ga:g1").as_bytes()).unwrap_err().reason,
        RejectReason::Auth
    );
}

#[test]
fn wrong_key_and_missing_tag() {
    let r = router();
    let out = Outgoing {
        to: id("ga:g1"),
        request_id: None,
        payload: Payload::Confirm(BookRef { booking_id: "b".into() }),
    };
    let (mut env, forged) = seal(&AuthKey::derive(2, "za:z1"), "m1".into(), id("za:z1"), out, 0);
    assert_eq!(r.admit(forged.as_bytes()).unwrap_err().reason, RejectReason::Auth);
    env.auth_tag.clear();
    assert_eq!(r.admit(env.encode().as_bytes()).unwrap_err().reason, RejectReason::Auth);
}

#[test]
fn every_single_bit_flip_is_rejected() {
    let r = router();
    let good = wire("za:z1", "ga:g1");
    let bytes = good.as_bytes();
    for i in 0..bytes.len() {
        for bit in 0..8 {
            let mut b = bytes.to_vec();
            b[i] ^= 1 << bit;
            assert!(r.admit(&b).is_err(), "flip of byte {i} bit {bit} was admitted");
        }
    }
}

#[test]
fn non_canonical_spelling_is_malformed() {
    let r = router();
    let good = wire("za:z1", "ga:g1");
    let spaced = good.replacen(':', ": ", 1);
    assert_eq!(r.admit(spaced.as_bytes()).unwrap_err().reason, RejectReason::Malformed);
}

/// Answers every envelope with a release back to the sender after a timer.
struct Echo {
    id: AgentId,
    peer: AgentId,
}

impl Agent for Echo {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, _now: u64, env: &Envelope) -> Vec<Action> {
        vec![Action::Timer {
            after: 1,
            timer: Timer::Forget {
                request_id: env.request_id.clone().unwrap(),
            },
        }]
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        let Timer::Forget { request_id } = timer else {
            unreachable!()
        };
        vec![Action::send(
            self.peer.clone(),
            request_id,
            Payload::Release(BookRef { booking_id: "b".into() }),
        )]
    }

    fn on_command(&mut self, _now: u64, command: Command) -> Vec<Action> {
        let Command::Line { text } = command else {
            unreachable!()
        };
        (0..3)
            .map(|i| {
                Action::send(
                    self.peer.clone(),
                    RequestId::from(format!("{text}{i}")),
                    Payload::Release(BookRef { booking_id: "b".into() }),
                )
            })
            .collect()
    }
}

fn sim(seed: u64) -> SimNet {
    let mut net = SimNet::new(
        router(),
        Arc::new(Store::in_memory(StoreConfig::default())),
        seed,
        Latency::Uniform(1, 10),
        ProtocolConfig::default(),
    );
    net.add_agent(Box::new(Echo {
        id: id("za:z1"),
        peer: id("ga:g1"),
    }));
    net.add_agent(Box::new(Echo {
        id: id("ga:g1"),
        peer: id("ga:g2"),
    }));
    net.add_agent(Box::new(Echo {
        id: id("ga:g2"),
        peer: id("za:z1"),
    }));
    net
}

fn envelopes(lines: &[String]) -> Vec<Envelope> {
    lines
        .iter()
        .filter_map(|l| match TraceLine::parse(l).unwrap() {
            TraceLine::Envelope(e) => Some(e),
            TraceLine::Event(_) => None,
        })
        .collect()
}

#[test]
fn same_seed_same_trace() {
    let run = |seed| {
        let mut net = sim(seed);
        net.schedule_command(0, id("za:z1"), Command::Line { text: "r".into() });
        net.run(200).lines
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn horizon_zero_delivers_nothing() {
    let mut net = sim(1);
    net.schedule_command(0, id("za:z1"), Command::Line { text: "r".into() });
    let run = net.run(0);
    assert!(envelopes(&run.lines).is_empty());
    assert!(!run.quiescent);
    let last = TraceLine::parse(run.lines.last().unwrap()).unwrap();
    assert!(matches!(
        last,
        TraceLine::Event(TraceEvent::End {
            quiescent: false,
            pending_events: 1,
            ..
        })
    ));
}

#[test]
fn runs_until_quiet_and_delivers_exactly_once() {
    let mut net = sim(3);
    net.schedule_command(0, id("za:z1"), Command::Line { text: "r".into() });
    // The ring z1 -> g1 -> g2 -> z1 never stops, so cut it.
    let run = net.run(100);
    let envs = envelopes(&run.lines);
    assert_eq!(run.stats.accepted as usize, envs.len());
    assert!(run.stats.delivered <= run.stats.accepted);
    let ids: std::collections::BTreeSet<_> = envs.iter().map(|e| e.msg_id.clone()).collect();
    assert_eq!(ids.len(), envs.len());
    assert_eq!(envs[0].msg_id, "m00000001");
}

#[test]
fn links_are_fifo() {
    let mut net = sim(9);
    net.schedule_command(0, id("za:z1"), Command::Line { text: "r".into() });
    let run = net.run(1);
    // Three sends on one link at time 0, none delivered yet.
    assert_eq!(envelopes(&run.lines).len(), 3);
    let mut net = sim(9);
    net.schedule_command(0, id("za:z1"), Command::Line { text: "r".into() });
    let run = net.run(40);
    let firsts: Vec<_> = envelopes(&run.lines)
        .into_iter()
        .filter(|e| e.sender == id("ga:g1"))
        .map(|e| e.request_id.unwrap().to_string())
        .take(3)
        .collect();
    assert_eq!(firsts, ["r0", "r1", "r2"]);
}

#[test]
fn agent_layer_refuses_forbidden_sends() {
    let mut net = sim(1);
    net.add_agent(Box::new(Echo {
        id: id("pa:u1"),
        peer: id("ga:g1"),
    }));
    net.schedule_command(0, id("pa:u1"), Command::Line { text: "x".into() });
    let run = net.run(50);
    assert!(envelopes(&run.lines).is_empty());
    assert_eq!(run.stats.rejected, 0);
    let faults = run.lines.iter().filter(|l| l.contains(r#""event":"fault""#)).count();
    assert_eq!(faults, 3);
}

#[test]
fn injected_bytes_are_screened() {
    let mut net = sim(1);
    net.schedule_raw(0, wire("pa:u1", "ga:g1").into_bytes());
    let run = net.run(10);
    assert_eq!(run.stats.rejected, 1);
    assert_eq!(run.stats.delivered, 0);
    assert!(run.lines.iter().any(|l| l.contains(r#""reason":"permission""#)));
}

#[tokio::test]
async fn live_transport_delivers_and_rejects() {
    let notices = Arc::new(parking_lot::Mutex::new(0));
    let n2 = Arc::clone(&notices);
    let net = LiveNet::new(
        router(),
        Arc::new(Store::in_memory(StoreConfig::default())),
        LiveOptions {
            unit: std::time::Duration::from_millis(1),
            record_trace: true,
        },
        Arc::new(move |_, _| *n2.lock() += 1),
    );
    net.spawn(Box::new(Echo {
        id: id("ga:g1"),
        peer: id("ga:g2"),
    }));
    net.spawn(Box::new(Echo {
        id: id("ga:g2"),
        peer: id("ga:g1"),
    }));
    assert!(net.command(&id("ga:g1"), Command::Line { text: "q".into() }));
    assert!(!net.command(&id("ga:g9"), Command::Line { text: "q".into() }));
    assert_eq!(
        net.inject(wire("pa:u1", "ga:g1")).unwrap_err().reason,
        RejectReason::Permission
    );
    tokio::time::sleep(std::time::Duration::from_millis(30)).await;
    net.shutdown().await;
    let trace = net.trace();
    let envs = envelopes(&trace);
    assert!(envs.len() > 3);
    assert!(envs.iter().all(|e| e.msg_id.contains('#')));
    assert!(trace.iter().any(|l| l.contains(r#""event":"rejected""#)));
}
