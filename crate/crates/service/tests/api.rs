use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use guestnet::agents::{hash_credential, LiveSystem, Topology};
use guestnet::harness::bundled;
use guestnet::protocol::ProtocolConfig;
use guestnet::router::LiveOptions;
use guestnet::store::{BookingState, Store, StoreConfig};
use guestnet_service::{app, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn with_credentials(mut t: Topology) -> Topology {
    for u in &mut t.users {
        u.credential_hash = Some(hash_credential(
            &format!("s-{}", u.user_id),
            &format!("pw-{}", u.user_id),
        ));
    }
    for g in &mut t.guesthouses {
        let id = &g.profile.guesthouse_id;
        g.admin_credential_hash = Some(hash_credential(&format!("s-{id}"), &format!("pw-{id}")));
    }
    t
}

struct Harness {
    app: Router,
    system: Arc<LiveSystem>,
}

fn start(scenario: &str, unit_ms: u64, config: ServiceConfig) -> Harness {
    let topology = with_credentials(bundled(scenario).unwrap().topology);
    let store = Arc::new(Store::in_memory(StoreConfig::default()));
    let system = Arc::new(
        LiveSystem::start(
            topology,
            store,
            ProtocolConfig::default(),
            LiveOptions {
                unit: Duration::from_millis(unit_ms),
                record_trace: false,
            },
        )
        .unwrap(),
    );
    Harness {
        app: app(Arc::clone(&system), config),
        system,
    }
}

impl Harness {
    async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        self.call_with(method, uri, token, body, &[]).await
    }

    async fn call_with(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
        headers: &[(&str, &str)],
    ) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let body = body.map_or(Body::empty(), |b| Body::from(b.to_string()));
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn login_user(&self, user: &str) -> String {
        let (s, v) = self
            .call(
                Method::POST,
                "/api/login",
                None,
                Some(json!({"user_id": user, "password": format!("pw-{user}")})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["token"].as_str().unwrap().to_owned()
    }

    async fn login_admin(&self, gh: &str) -> String {
        let (s, v) = self
            .call(
                Method::POST,
                "/api/login",
                None,
                Some(json!({"guesthouse_id": gh, "password": format!("pw-{gh}")})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["token"].as_str().unwrap().to_owned()
    }

    async fn submit(&self, token: &str, body: Value) -> String {
        let (s, v) = self.call(Method::POST, "/api/requests", Some(token), Some(body)).await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        v["request_id"].as_str().unwrap().to_owned()
    }

    async fn classified(&self, token: &str, rid: &str) -> Value {
        let (s, v) = self
            .call(
                Method::GET,
                &format!("/api/requests/{rid}/classification?wait_ms=10000"),
                Some(token),
                None,
            )
            .await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["status"], "classified", "{v}");
        v
    }
}

fn figure4_request() -> Value {
    json!({
        "persons": 2,
        "interval": {"arrival": "2025-07-01", "departure": "2025-07-08"},
        "rooms": {"single": 0, "double": 1, "triple": 0},
        "max_total_price": 1000,
        "required_facilities": ["parking"]
    })
}

#[tokio::test(flavor = "multi_thread")]
async fn login_and_session_checks() {
    let h = start("figure4", 2, ServiceConfig::default());
    let (s, _) = h
        .call(
            Method::POST,
            "/api/login",
            None,
            Some(json!({"user_id": "u1", "password": "nope"})),
        )
        .await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h
        .call(
            Method::POST,
            "/api/login",
            None,
            Some(json!({"user_id": "u1", "guesthouse_id": "g1", "password": "x"})),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h.call(Method::GET, "/api/users/me/history", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.call(Method::GET, "/api/users/me/history", Some("forged"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let token = h.login_user("u1").await;
    let (s, v) = h.call(Method::GET, "/api/users/me/history", Some(&token), None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));
    let (s, _) = h.call(Method::POST, "/api/logout", Some(&token), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = h.call(Method::GET, "/api/users/me/history", Some(&token), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn expired_sessions_are_refused() {
    let h = start(
        "figure4",
        2,
        ServiceConfig {
            session_ttl: Duration::from_millis(30),
            ..ServiceConfig::default()
        },
    );
    let token = h.login_user("u1").await;
    tokio::time::sleep(Duration::from_millis(50)).await;
    let (s, _) = h.call(Method::GET, "/api/users/me/history", Some(&token), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn search_select_and_history() {
    let h = start("figure4", 2, ServiceConfig::default());
    let token = h.login_user("u1").await;
    let rid = h.submit(&token, figure4_request()).await;
    let v = h.classified(&token, &rid).await;
    let proposals = v["classification"]["proposals"].as_array().unwrap();
    let totals: Vec<u64> = proposals.iter().map(|p| p["total_price"].as_u64().unwrap()).collect();
    assert_eq!(totals, [650, 700]);
    let composite = proposals[0]["proposal_id"].as_str().unwrap().to_owned();

    // A double click: the same key twice, at the same time.
    let body = json!({"proposal_id": composite});
    let uri = format!("/api/requests/{rid}/select");
    let key = [("idempotency-key", "click-1")];
    let (a, b) = tokio::join!(
        h.call_with(Method::POST, &uri, Some(&token), Some(body.clone()), &key),
        h.call_with(Method::POST, &uri, Some(&token), Some(body.clone()), &key),
    );
    assert_eq!(a.0, StatusCode::OK, "{}", a.1);
    assert_eq!(a, b);
    assert_eq!(a.1["status"], "booked");
    let bookings = h.system.store().bookings();
    assert_eq!(bookings.len(), 1);
    assert_eq!(bookings[0].state, BookingState::Confirmed);

    let (s, _) = h
        .call_with(
            Method::POST,
            &uri,
            Some(&token),
            Some(json!({"proposal_id": "other"})),
            &key,
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, v) = h.call(Method::GET, "/api/users/me/history", Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(!v.as_array().unwrap().is_empty(), "{v}");
    assert!(h.system.store().audit().is_empty());
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn classification_is_pending_before_the_deadline() {
    // g2 never answers, so the zone waits out its whole window.
    let h = start("timeout", 50, ServiceConfig::default());
    let token = h.login_user("u1").await;
    let rid = h
        .submit(
            &token,
            json!({
                "persons": 1,
                "interval": {"arrival": "2025-07-01", "departure": "2025-07-02"},
                "rooms": {"single": 0, "double": 1, "triple": 0}
            }),
        )
        .await;
    let (s, v) = h
        .call(
            Method::GET,
            &format!("/api/requests/{rid}/classification"),
            Some(&token),
            None,
        )
        .await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "pending"})));
    let (s, _) = h
        .call(
            Method::POST,
            &format!("/api/requests/{rid}/select"),
            Some(&token),
            Some(json!({"proposal_id": "x"})),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn the_loser_of_a_race_gets_409() {
    let h = start("race-lastroom", 2, ServiceConfig::default());
    let night = json!({
        "persons": 2,
        "interval": {"arrival": "2025-07-10", "departure": "2025-07-11"},
        "rooms": {"single": 0, "double": 1, "triple": 0}
    });
    let t1 = h.login_user("u1").await;
    let t2 = h.login_user("u2").await;
    let r1 = h.submit(&t1, night.clone()).await;
    let r2 = h.submit(&t2, night).await;
    let p1 = h.classified(&t1, &r1).await["classification"]["proposals"][0]["proposal_id"].clone();
    let p2 = h.classified(&t2, &r2).await["classification"]["proposals"][0]["proposal_id"].clone();
    let (u1, u2) = (
        format!("/api/requests/{r1}/select"),
        format!("/api/requests/{r2}/select"),
    );
    let (a, b) = tokio::join!(
        h.call(Method::POST, &u1, Some(&t1), Some(json!({"proposal_id": p1}))),
        h.call(Method::POST, &u2, Some(&t2), Some(json!({"proposal_id": p2}))),
    );
    let mut statuses = [a.0, b.0];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT], "{} {}", a.1, b.1);
    let loser = if a.0 == StatusCode::CONFLICT { a.1 } else { b.1 };
    assert_eq!(loser["status"], "failed");
    let snap = h.system.store().guesthouse_snapshot(&"g1".into()).unwrap();
    assert_eq!(
        snap.calendar
            .free("2025-07-10".parse().unwrap(), guestnet::domain::RoomType::Double),
        0
    );
    let confirmed = h
        .system
        .store()
        .bookings()
        .into_iter()
        .filter(|b| b.state == BookingState::Confirmed)
        .count();
    assert_eq!(confirmed, 1);
    assert!(h.system.store().audit().is_empty());
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn requests_are_private_and_validated() {
    let h = start("race-lastroom", 2, ServiceConfig::default());
    let t1 = h.login_user("u1").await;
    let t2 = h.login_user("u2").await;
    let (s, _) = h
        .call(
            Method::POST,
            "/api/requests",
            Some(&t1),
            Some(json!({
                "persons": 5,
                "interval": {"arrival": "2025-07-10", "departure": "2025-07-11"},
                "rooms": {"single": 0, "double": 1, "triple": 0}
            })),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h
        .call(
            Method::POST,
            "/api/requests",
            Some(&t1),
            Some(json!({"persons": "two"})),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let rid = h.submit(&t1, figure4_request()).await;
    let (s, _) = h
        .call(
            Method::GET,
            &format!("/api/requests/{rid}/classification"),
            Some(&t2),
            None,
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h
        .call(Method::GET, "/api/requests/nope/classification", Some(&t1), None)
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call(Method::GET, "/api/nothing", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn zones_and_rosters() {
    let h = start("bypass", 2, ServiceConfig::default());
    let (s, v) = h.call(Method::GET, "/api/zones", None, None).await;
    assert_eq!((s, v), (StatusCode::OK, json!(["z1", "z2"])));
    let (s, v) = h.call(Method::GET, "/api/zones/z1/guesthouses", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["guesthouse_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["g1", "g2"]);
    assert_eq!(v[0]["name"], "Guesthouse 1");
    let (s, _) = h.call(Method::GET, "/api/zones/z9/guesthouses", None, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    h.system.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn admin_updates() {
    let h = start("race-lastroom", 2, ServiceConfig::default());
    let admin = h.login_admin("g1").await;
    let user = h.login_user("u1").await;
    let entries = json!([{"date": "2025-07-15", "room_type": "double", "free": 0}]);
    let (s, _) = h
        .call(
            Method::PUT,
            "/api/guesthouses/g2/calendar",
            Some(&admin),
            Some(entries.clone()),
        )
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = h
        .call(
            Method::PUT,
            "/api/guesthouses/g1/calendar",
            Some(&user),
            Some(entries.clone()),
        )
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = h
        .call(Method::POST, "/api/requests", Some(&admin), Some(figure4_request()))
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, v) = h
        .call(Method::PUT, "/api/guesthouses/g1/calendar", Some(&admin), Some(entries))
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["closed"]["2025-07-15"]["double"], 1);
    let (s, _) = h
        .call(
            Method::PUT,
            "/api/guesthouses/g1/calendar",
            Some(&admin),
            Some(json!({"date": 1})),
        )
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // Book the only double, then try to take it out of inventory.
    let rid = h
        .submit(
            &user,
            json!({
                "persons": 1,
                "interval": {"arrival": "2025-07-10", "departure": "2025-07-11"},
                "rooms": {"single": 0, "double": 1, "triple": 0}
            }),
        )
        .await;
    let pid = h.classified(&user, &rid).await["classification"]["proposals"][0]["proposal_id"].clone();
    let (s, _) = h
        .call(
            Method::POST,
            &format!("/api/requests/{rid}/select"),
            Some(&user),
            Some(json!({"proposal_id": pid})),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = h
        .call(
            Method::PUT,
            "/api/guesthouses/g1/profile",
            Some(&admin),
            Some(json!({"inventory": {"single": 0, "double": 0, "triple": 0}})),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, v) = h
        .call(
            Method::PUT,
            "/api/guesthouses/g1/profile",
            Some(&admin),
            Some(json!({"name": "Renamed"})),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["profile"]["name"], "Renamed");
    let (s, v) = h.call(Method::GET, "/api/guesthouses/g1", Some(&admin), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["profile"]["inventory"]["double"], 1);
    h.system.shutdown().await;
}
