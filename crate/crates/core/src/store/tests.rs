use std::sync::Barrier;

use proptest::prelude::*;

use super::*;
use crate::domain::{ProposalLeg, StayInterval};

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn profile(id: &str, inventory: ByRoomType<u32>) -> GuesthouseProfile {
    GuesthouseProfile {
        guesthouse_id: id.into(),
        zone_id: "z1".into(),
        name: format!("House {id}"),
        address: String::new(),
        telephone: String::new(),
        facilities: FacilitySet::new(),
        inventory,
        nightly_rate: ByRoomType::new(Money::new(40), Money::new(60), Money::new(80)),
    }
}

fn store_with(houses: &[(&str, ByRoomType<u32>)]) -> Store {
    let store = Store::in_memory(StoreConfig::default());
    for (id, inv) in houses {
        store.add_guesthouse(profile(id, *inv), None).unwrap();
    }
    store
}

fn leg(store: &Store, gh: &str, from: &str, to: &str, rooms: ByRoomType<u32>) -> ProposalLeg {
    let p = store.profile(&gh.into()).unwrap();
    ProposalLeg::priced(&p, StayInterval::new(d(from), d(to)).unwrap(), rooms).unwrap()
}

fn spec(id: &str, legs: Vec<ProposalLeg>) -> BookingSpec {
    BookingSpec {
        booking_id: id.into(),
        request_id: "r1".into(),
        user_id: "u1".into(),
        legs,
    }
}

fn one_double() -> ByRoomType<u32> {
    ByRoomType::new(0, 1, 0)
}

#[test]
fn hold_decrements_and_recount_balances() {
    let store = store_with(&[("g1", ByRoomType::new(1, 2, 0))]);
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-04", one_double())]);
    assert_eq!(store.hold(&s, &"g1".into(), 0).unwrap(), HoldOutcome::Held);
    let cal = store.calendar(&"g1".into()).unwrap();
    for night in ["2026-07-01", "2026-07-02", "2026-07-03"] {
        assert_eq!(cal.free(d(night), RoomType::Double), 1);
    }
    assert_eq!(cal.free(d("2026-07-04"), RoomType::Double), 2);
    assert!(store.audit().is_empty());
    // Holding the same leg again changes nothing.
    assert_eq!(store.hold(&s, &"g1".into(), 1).unwrap(), HoldOutcome::Held);
    assert_eq!(store.calendar(&"g1".into()).unwrap(), cal);
}

#[test]
fn hold_then_release_restores_identical_calendar() {
    let store = store_with(&[("g1", ByRoomType::new(1, 2, 0))]);
    let before = store.calendar(&"g1".into()).unwrap();
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-04", one_double())]);
    store.hold(&s, &"g1".into(), 0).unwrap();
    store.release(&"b1".into()).unwrap();
    assert_eq!(store.calendar(&"g1".into()).unwrap(), before);
    assert_eq!(store.booking(&"b1".into()).unwrap().state, BookingState::Released);
    assert!(store.audit().is_empty());
}

#[test]
fn shortfall_leaves_calendar_untouched() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0))]);
    let first = spec("b1", vec![leg(&store, "g1", "2026-07-02", "2026-07-03", one_double())]);
    store.hold(&first, &"g1".into(), 0).unwrap();
    let before = store.calendar(&"g1".into()).unwrap();
    let second = spec("b2", vec![leg(&store, "g1", "2026-07-01", "2026-07-04", one_double())]);
    assert_eq!(
        store.hold(&second, &"g1".into(), 0).unwrap(),
        HoldOutcome::Short {
            date: d("2026-07-02"),
            room_type: RoomType::Double
        }
    );
    assert_eq!(store.calendar(&"g1".into()).unwrap(), before);
    assert_eq!(store.booking(&"b2".into()).unwrap().state, BookingState::Failed);
}

#[test]
fn forged_price_is_rejected() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0))]);
    let mut l = leg(&store, "g1", "2026-07-01", "2026-07-02", one_double());
    l.leg_price = Money::new(1);
    let err = store.hold(&spec("b1", vec![l]), &"g1".into(), 0).unwrap_err();
    assert_eq!(err, StoreError::Invalid(DomainError::PriceMismatch));
}

#[test]
fn zero_night_leg_cannot_be_decoded() {
    let raw = r#"{"guesthouse_id":"g1","interval":{"arrival":"2026-07-01","departure":"2026-07-01"},
        "rooms":{"single":0,"double":1,"triple":0},"leg_price":0}"#;
    assert!(serde_json::from_str::<ProposalLeg>(raw).is_err());
}

#[test]
fn concurrent_holds_on_last_room_admit_exactly_one() {
    let store = Arc::new(store_with(&[("g1", ByRoomType::new(0, 1, 0))]));
    let threads = 16;
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|i| {
            let store = Arc::clone(&store);
            let barrier = Arc::clone(&barrier);
            std::thread::spawn(move || {
                let s = spec(
                    &format!("b{i}"),
                    vec![leg(&store, "g1", "2026-07-01", "2026-07-03", one_double())],
                );
                barrier.wait();
                store.hold(&s, &"g1".into(), 0).unwrap()
            })
        })
        .collect();
    let held = handles
        .into_iter()
        .map(|h| h.join().unwrap())
        .filter(|o| *o == HoldOutcome::Held)
        .count();
    assert_eq!(held, 1);
    assert!(store.audit().is_empty());
}

#[test]
fn confirmed_booking_cannot_be_released() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0))]);
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    store.hold(&s, &"g1".into(), 0).unwrap();
    assert_eq!(store.confirm(&"b1".into(), 5).unwrap(), BookingState::Confirmed);
    assert_eq!(store.confirm(&"b1".into(), 6).unwrap(), BookingState::Confirmed);
    assert_eq!(
        store.release(&"b1".into()).unwrap_err(),
        StoreError::AlreadyConfirmed("b1".into())
    );
    assert_eq!(
        store
            .calendar(&"g1".into())
            .unwrap()
            .free(d("2026-07-01"), RoomType::Double),
        0
    );
    assert!(store.audit().is_empty());
}

#[test]
fn expired_hold_cannot_be_confirmed() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0))]);
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    store.hold(&s, &"g1".into(), 10).unwrap();
    assert_eq!(
        store.confirm(&"b1".into(), 10 + DEFAULT_HOLD_TTL + 1).unwrap_err(),
        StoreError::Expired("b1".into())
    );
    assert_eq!(store.booking(&"b1".into()).unwrap().state, BookingState::Failed);
    assert_eq!(
        store
            .calendar(&"g1".into())
            .unwrap()
            .free(d("2026-07-01"), RoomType::Double),
        1
    );
}

#[test]
fn expire_releases_only_overdue_holds() {
    let store = store_with(&[("g1", ByRoomType::new(0, 2, 0))]);
    let a = spec("a", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    let b = spec("b", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    store.hold(&a, &"g1".into(), 0).unwrap();
    store.hold(&b, &"g1".into(), 100).unwrap();
    assert_eq!(store.expire(DEFAULT_HOLD_TTL).unwrap(), Vec::<BookingId>::new());
    assert_eq!(store.expire(DEFAULT_HOLD_TTL + 1).unwrap(), vec![BookingId::from("a")]);
    assert_eq!(store.booking(&"b".into()).unwrap().state, BookingState::Held);
    assert!(store.audit().is_empty());
}

#[test]
fn composite_second_leg_failure_releases_first() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0)), ("g2", ByRoomType::new(0, 1, 0))]);
    let blocker = spec("blk", vec![leg(&store, "g2", "2026-07-03", "2026-07-04", one_double())]);
    store.hold(&blocker, &"g2".into(), 0).unwrap();
    let before_g1 = store.calendar(&"g1".into()).unwrap();
    let composite = spec(
        "b1",
        vec![
            leg(&store, "g1", "2026-07-01", "2026-07-03", one_double()),
            leg(&store, "g2", "2026-07-03", "2026-07-05", one_double()),
        ],
    );
    assert!(matches!(
        store.hold_all(&composite, 0).unwrap(),
        HoldOutcome::Short { .. }
    ));
    assert_eq!(store.calendar(&"g1".into()).unwrap(), before_g1);
    let b = store.booking(&"b1".into()).unwrap();
    assert_eq!(b.state, BookingState::Failed);
    assert!(b.occupying().next().is_none());
    assert!(store.audit().is_empty());
}

#[test]
fn composite_fault_on_second_leg_releases_first() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0)), ("g2", ByRoomType::new(0, 1, 0))]);
    store.inject_hold_fault("g2".into());
    let composite = spec(
        "b1",
        vec![
            leg(&store, "g1", "2026-07-01", "2026-07-03", one_double()),
            leg(&store, "g2", "2026-07-03", "2026-07-05", one_double()),
        ],
    );
    assert_eq!(
        store.hold_all(&composite, 0).unwrap_err(),
        StoreError::Fault("g2".into())
    );
    assert_eq!(store.calendar(&"g1".into()).unwrap().listed().count(), 0);
    assert_eq!(store.booking(&"b1".into()).unwrap().state, BookingState::Failed);
}

#[test]
fn confirm_leg_by_leg() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0)), ("g2", ByRoomType::new(0, 1, 0))]);
    let composite = spec(
        "b1",
        vec![
            leg(&store, "g1", "2026-07-01", "2026-07-03", one_double()),
            leg(&store, "g2", "2026-07-03", "2026-07-05", one_double()),
        ],
    );
    store.hold_all(&composite, 0).unwrap();
    assert_eq!(
        store.confirm_leg(&"b1".into(), &"g2".into(), 1).unwrap(),
        BookingState::Held
    );
    assert_eq!(
        store.confirm_leg(&"b1".into(), &"g1".into(), 1).unwrap(),
        BookingState::Confirmed
    );
    assert!(store.audit().is_empty());
}

#[test]
fn history_is_partitioned_and_newest_first() {
    let store = store_with(&[]);
    let req = |user: &str, id: &str| crate::domain::ReservationRequest {
        request_id: id.into(),
        user_id: user.into(),
        zone: None,
        persons: 1,
        interval: StayInterval::new(d("2026-07-01"), d("2026-07-02")).unwrap(),
        rooms: ByRoomType::new(1, 0, 0),
        max_total_price: None,
        required_facilities: FacilitySet::new(),
    };
    for (user, id, ts) in [("u1", "r1", 5), ("u2", "r2", 6), ("u1", "r3", 9), ("u1", "r4", 9)] {
        store
            .append_history(HistoryEntry {
                user_id: user.into(),
                timestamp: ts,
                request: req(user, id),
                classification: vec![],
                outcome: None,
            })
            .unwrap();
    }
    let ids: Vec<_> = store
        .query_history(&"u1".into())
        .into_iter()
        .map(|e| e.request.request_id.to_string())
        .collect();
    assert_eq!(ids, ["r4", "r3", "r1"]);
    assert_eq!(store.query_history(&"u2".into()).len(), 1);
    assert!(store.query_history(&"nobody".into()).is_empty());
}

#[test]
fn inventory_raise_adds_free_rooms() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0))]);
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    store.hold(&s, &"g1".into(), 0).unwrap();
    let admin = AdminPrincipal {
        guesthouse_id: "g1".into(),
    };
    let update = GuesthouseUpdate::Profile(ProfileUpdate {
        inventory: Some(ByRoomType::new(0, 3, 0)),
        ..Default::default()
    });
    store.update_guesthouse(&admin, &"g1".into(), update).unwrap();
    let cal = store.calendar(&"g1".into()).unwrap();
    assert_eq!(cal.free(d("2026-07-01"), RoomType::Double), 2);
    assert_eq!(cal.free(d("2026-07-02"), RoomType::Double), 3);
    assert!(store.audit().is_empty());
}

#[test]
fn inventory_shrink_below_commitments_is_rejected() {
    let store = store_with(&[("g1", ByRoomType::new(0, 2, 0))]);
    let s = spec(
        "b1",
        vec![leg(&store, "g1", "2026-07-01", "2026-07-02", ByRoomType::new(0, 2, 0))],
    );
    store.hold(&s, &"g1".into(), 0).unwrap();
    let before = store.guesthouse_snapshot(&"g1".into()).unwrap();
    let admin = AdminPrincipal {
        guesthouse_id: "g1".into(),
    };
    let update = GuesthouseUpdate::Profile(ProfileUpdate {
        name: Some("Renamed".into()),
        inventory: Some(ByRoomType::new(0, 1, 0)),
        ..Default::default()
    });
    assert!(matches!(
        store.update_guesthouse(&admin, &"g1".into(), update),
        Err(StoreError::Conflict(_))
    ));
    assert_eq!(store.guesthouse_snapshot(&"g1".into()).unwrap(), before);
}

#[test]
fn calendar_update_records_closures() {
    let store = store_with(&[("g1", ByRoomType::new(0, 3, 0))]);
    let s = spec("b1", vec![leg(&store, "g1", "2026-07-01", "2026-07-02", one_double())]);
    store.hold(&s, &"g1".into(), 0).unwrap();
    let admin = AdminPrincipal {
        guesthouse_id: "g1".into(),
    };
    let entry = |free| {
        GuesthouseUpdate::Calendar(vec![CalendarEntry {
            date: d("2026-07-01"),
            room_type: RoomType::Double,
            free,
        }])
    };
    store.update_guesthouse(&admin, &"g1".into(), entry(1)).unwrap();
    let snap = store.guesthouse_snapshot(&"g1".into()).unwrap();
    assert_eq!(snap.calendar.free(d("2026-07-01"), RoomType::Double), 1);
    assert_eq!(snap.closed[&d("2026-07-01")].double, 1);
    assert!(store.audit().is_empty());
    // One room is booked, so at most two can be offered.
    assert!(matches!(
        store.update_guesthouse(&admin, &"g1".into(), entry(3)),
        Err(StoreError::Conflict(_))
    ));
    store.update_guesthouse(&admin, &"g1".into(), entry(2)).unwrap();
    let snap = store.guesthouse_snapshot(&"g1".into()).unwrap();
    assert!(snap.closed.is_empty());
    assert!(store.audit().is_empty());
}

#[test]
fn admin_cannot_touch_another_guesthouse() {
    let store = store_with(&[("g1", ByRoomType::new(0, 1, 0)), ("g2", ByRoomType::new(0, 1, 0))]);
    let admin = AdminPrincipal {
        guesthouse_id: "g1".into(),
    };
    let err = store
        .update_guesthouse(&admin, &"g2".into(), GuesthouseUpdate::Calendar(vec![]))
        .unwrap_err();
    assert!(matches!(err, StoreError::Forbidden { .. }));
}

#[test]
fn file_store_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let (calendar, booking) = {
        let store = Store::open(dir.path(), StoreConfig::default()).unwrap();
        store
            .add_guesthouse(profile("g/1", ByRoomType::new(1, 1, 0)), None)
            .unwrap();
        let s = spec("b1", vec![leg(&store, "g/1", "2026-07-01", "2026-07-03", one_double())]);
        store.hold(&s, &"g/1".into(), 0).unwrap();
        store.confirm(&"b1".into(), 1).unwrap();
        let admin = AdminPrincipal {
            guesthouse_id: "g/1".into(),
        };
        store
            .update_guesthouse(
                &admin,
                &"g/1".into(),
                GuesthouseUpdate::Calendar(vec![CalendarEntry {
                    date: d("2026-08-01"),
                    room_type: RoomType::Single,
                    free: 0,
                }]),
            )
            .unwrap();
        (
            store.guesthouse_snapshot(&"g/1".into()).unwrap(),
            store.booking(&"b1".into()).unwrap(),
        )
    };
    let reopened = Store::open(dir.path(), StoreConfig::default()).unwrap();
    assert_eq!(reopened.guesthouse_snapshot(&"g/1".into()).unwrap(), calendar);
    assert_eq!(reopened.booking(&"b1".into()).unwrap(), booking);
    assert!(reopened.audit().is_empty());
}

#[derive(Debug, Clone)]
enum Op {
    Hold {
        booking: usize,
        from: u32,
        nights: u32,
        gh: usize,
        rooms: u32,
    },
    Confirm(usize),
    Release(usize),
    Expire(u64),
    Close {
        gh: usize,
        day: u32,
        free: u32,
    },
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0usize..12, 0u32..6, 1u32..4, 0usize..2, 1u32..3)
            .prop_map(|(booking, from, nights, gh, rooms)| Op::Hold { booking, from, nights, gh, rooms }),
        2 => (0usize..12).prop_map(Op::Confirm),
        2 => (0usize..12).prop_map(Op::Release),
        1 => (0u64..800).prop_map(Op::Expire),
        1 => (0usize..2, 0u32..8, 0u32..3).prop_map(|(gh, day, free)| Op::Close { gh, day, free }),
    ]
}

proptest! {
    #[test]
    fn conservation_holds_after_any_sequence(ops in proptest::collection::vec(arb_op(), 1..40)) {
        let store = store_with(&[("g0", ByRoomType::new(1, 2, 1)), ("g1", ByRoomType::new(0, 2, 0))]);
        let base = d("2026-07-01");
        let mut now = 0;
        for op in ops {
            now += 7;
            match op {
                Op::Hold { booking, from, nights, gh, rooms } => {
                    let gh = format!("g{gh}");
                    let arrival = crate::domain::add_days(base, from);
                    let departure = crate::domain::add_days(arrival, nights);
                    let p = store.profile(&gh.as_str().into()).unwrap();
                    let leg = ProposalLeg::priced(
                        &p,
                        StayInterval::new(arrival, departure).unwrap(),
                        ByRoomType::new(0, rooms, 0),
                    )
                    .unwrap();
                    let _ = store.hold(&spec(&format!("b{booking}"), vec![leg]), &gh.as_str().into(), now);
                }
                Op::Confirm(b) => {
                    let _ = store.confirm(&format!("b{b}").into(), now);
                }
                Op::Release(b) => {
                    let _ = store.release(&format!("b{b}").into());
                }
                Op::Expire(t) => {
                    store.expire(t).unwrap();
                }
                Op::Close { gh, day, free } => {
                    let gh: GuesthouseId = format!("g{gh}").into();
                    let admin = AdminPrincipal { guesthouse_id: gh.clone() };
                    let _ = store.update_guesthouse(
                        &admin,
                        &gh,
                        GuesthouseUpdate::Calendar(vec![CalendarEntry {
                            date: crate::domain::add_days(base, day),
                            room_type: RoomType::Double,
                            free,
                        }]),
                    );
                }
            }
            let violations = store.audit();
            prop_assert!(violations.is_empty(), "{:?}", violations);
        }
    }
}
