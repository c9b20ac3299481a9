use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Scenario, ScenarioEvent, SCENARIO_VERSION};
use crate::agents::{GuesthouseSpec, Topology, UserProfile};
use crate::domain::{
    add_days, ByRoomType, Facility, FacilitySet, GuesthouseProfile, Money, RequestDraft, RoomType, StayInterval, ZoneId,
};
use crate::protocol::ProtocolConfig;
use crate::router::Latency;
use crate::store::CalendarEntry;

/// Nights covered by generated calendars.
pub const WINDOW: u32 = 31;

const POOL: [Facility; 5] = [
    Facility::Parking,
    Facility::Restaurant,
    Facility::Internet,
    Facility::Garden,
    Facility::PetsAllowed,
];

fn window_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 7, 1).expect("valid date")
}

/// A seeded scenario: 1 to 3 zones, 2 to 10 guesthouses with sparse
/// calendars over 31 nights, up to 8 users and `requests` submissions,
/// half of them followed by a booking of the top-ranked proposal.
pub fn random_scenario(seed: u64, requests: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let houses = rng.gen_range(2..=10usize);
    let zones: Vec<ZoneId> = (1..=rng.gen_range(1..=3usize))
        .map(|i| format!("z{i}").into())
        .collect();
    let start = window_start();

    let guesthouses = (0..houses)
        .map(|i| {
            let zone_id = zones[i % zones.len()].clone();
            let mut inventory = ByRoomType::new(rng.gen_range(0..=2), rng.gen_range(0..=2), rng.gen_range(0..=2));
            if inventory.total() == 0 {
                inventory.double = 1;
            }
            let facilities: FacilitySet = POOL.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            let mut rate = || Money::new(rng.gen_range(40..=200));
            let nightly_rate = ByRoomType::new(rate(), rate(), rate());
            let mut calendar = Vec::new();
            for n in 0..WINDOW {
                for ty in RoomType::ALL {
                    let inv = inventory.get(ty);
                    if inv > 0 && rng.gen_bool(0.2) {
                        calendar.push(CalendarEntry {
                            date: add_days(start, n),
                            room_type: ty,
                            free: rng.gen_range(0..inv),
                        });
                    }
                }
            }
            let id = format!("g{:02}", i + 1);
            GuesthouseSpec {
                profile: GuesthouseProfile {
                    guesthouse_id: id.as_str().into(),
                    zone_id,
                    name: format!("Guesthouse {id}"),
                    address: String::new(),
                    telephone: String::new(),
                    facilities,
                    inventory,
                    nightly_rate,
                },
                calendar,
                admin_credential_hash: None,
                silent: false,
            }
        })
        .collect();

    let users: Vec<UserProfile> = (1..=rng.gen_range(1..=8))
        .map(|i| UserProfile {
            user_id: format!("u{i}").into(),
            display_name: format!("User {i}"),
            default_zone: None,
            default_facilities: FacilitySet::new(),
            credential_hash: None,
            text_channel: false,
        })
        .collect();

    let mut events = Vec::new();
    let mut at = 0;
    for i in 0..requests {
        at += rng.gen_range(5..=25);
        let user = users.choose(&mut rng).expect("at least one user").user_id.clone();
        let nights = rng.gen_range(1..=7);
        let arrival = add_days(start, rng.gen_range(0..=WINDOW - nights));
        let interval = StayInterval::new(arrival, add_days(arrival, nights)).expect("positive stay");
        let ty = *RoomType::ALL.choose(&mut rng).expect("three room types");
        let mut rooms = ByRoomType::default();
        *rooms.get_mut(ty) = if rng.gen_bool(0.2) { 2 } else { 1 };
        let persons = rng.gen_range(1..=rooms.capacity() as u32);
        let draft = RequestDraft {
            zone: rng
                .gen_bool(0.3)
                .then(|| zones.choose(&mut rng).expect("a zone").clone()),
            persons,
            interval,
            rooms,
            max_total_price: rng.gen_bool(0.5).then(|| Money::new(rng.gen_range(100..=3000))),
            required_facilities: if rng.gen_bool(0.3) {
                FacilitySet::from([*POOL.choose(&mut rng).expect("non-empty pool")])
            } else {
                FacilitySet::new()
            },
        };
        let reference = format!("r{}", i + 1);
        if rng.gen_bool(0.5) {
            events.push(ScenarioEvent::Select {
                at: at + 250,
                user: user.clone(),
                reference: reference.clone(),
                rank: Some(1),
                proposal_id: None,
            });
        }
        events.push(ScenarioEvent::Submit {
            at,
            user,
            reference,
            request: draft,
        });
    }
    // Each select sits 250 units after its submit, so the sort keeps the order.
    events.sort_by_key(|e| (e.at(), !matches!(e, ScenarioEvent::Submit { .. })));
    let last = events.last().map_or(0, ScenarioEvent::at);

    Scenario {
        version: SCENARIO_VERSION,
        name: format!("random-{requests}"),
        seed,
        horizon: last + 1000,
        latency: Latency::Uniform(1, 10),
        config: ProtocolConfig::default(),
        topology: Topology {
            zones,
            guesthouses,
            users,
        },
        events,
    }
}
