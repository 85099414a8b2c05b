//! The operations the wallet console relies on, driven as the console would.

mod support;

use chrono::Duration;
use serde_json::{json, Value};
use ups_core::gateway::{ApiRequest, Method};

use support::*;

fn console() -> (Harness, Vec<Member>) {
    let members = population(2, 21);
    let h = Harness::new(|_| {});
    for req in setup_requests(&members) {
        assert!(h.call(&req).status < 300);
    }
    let r = h.call(&outlet(
        ApiRequest::post_json(
            "/outlets/o3/cash-in",
            &json!({ "customer": { "aadhaar": members[0].aadhaar }, "amount_paise": 250_000 }),
        ),
        "o3",
    ));
    assert_eq!(r.status, 200);
    (h, members)
}

fn login(h: &Harness, who: Value, password: &str) -> (u16, Value) {
    let mut body = who;
    body["password"] = json!(password);
    h.json(&ApiRequest::post_json("/sessions", &body))
}

#[test]
fn login_by_aadhaar_phone_or_email() {
    let (h, m) = console();
    let a = &m[0];
    for who in [
        json!({ "aadhaar": a.aadhaar }),
        json!({ "kind": "PHONE", "value": format!("+91 {}", a.phone) }),
        json!({ "kind": "EMAIL", "value": a.email.to_uppercase() }),
    ] {
        let (s, body) = login(&h, who.clone(), &a.password);
        assert_eq!(s, 201, "{who} {body}");
        assert_eq!(body["owner"], a.aadhaar.as_str());
        assert!(body["token"].as_str().unwrap().len() >= 32);
    }
    let (s, body) = login(&h, json!({ "aadhaar": a.aadhaar }), "nope");
    assert_eq!(s, 401);
    assert_eq!(body["error"], "InvalidCredentials");
    let (s, _) = login(&h, json!({ "kind": "PHONE", "value": "9000000000" }), &a.password);
    assert_eq!(s, 401);
}

#[test]
fn balance_aliases_transfer_and_history_through_a_session() {
    let (h, m) = console();
    let (a, b) = (&m[0], &m[1]);
    let token = login(&h, json!({ "aadhaar": a.aadhaar }), &a.password).1["token"].as_str().unwrap().to_string();
    let base = format!("/wallets/{}", a.aadhaar);

    let (s, bal) = h.json(&ApiRequest::get(&format!("{base}/balance")).bearer(&token));
    assert_eq!(s, 200);
    assert_eq!(bal["balance_paise"], 250_000);
    assert_eq!(bal["balance"], "₹2500.00");

    let add = |kind: &str, value: &str| {
        h.json(&ApiRequest::post_json(&format!("{base}/aliases"), &json!({ "kind": kind, "value": value })).bearer(&token))
    };
    assert_eq!(add("EMAIL", "second@example.in").0, 200);
    let (s, err) = add("EMAIL", &b.email);
    assert_eq!(s, 409);
    assert_eq!(err["error"], "DuplicateAlias");
    let (s, removed) = h.json(
        &ApiRequest::post_json(&format!("{base}/aliases/remove"), &json!({ "kind": "EMAIL", "value": a.email }))
            .bearer(&token),
    );
    assert_eq!(s, 200, "{removed}");
    let (_, list) = h.json(&ApiRequest::get(&format!("{base}/aliases")).bearer(&token));
    let values: Vec<&str> = list["aliases"].as_array().unwrap().iter().map(|x| x["value"].as_str().unwrap()).collect();
    assert_eq!(values, vec![format!("91{}", a.phone).as_str(), "second@example.in"]);
    let export = list["export"].as_str().unwrap();
    assert_eq!(export.lines().count(), 2);
    assert!(values.iter().all(|v| export.contains(v)));

    let transfer = ApiRequest::post_json(
        "/transfers",
        &json!({ "receiver": { "kind": "EMAIL", "value": b.email }, "amount_paise": 12_345 }),
    )
    .bearer(&token)
    .with_header("Idempotency-Key", "console-1");
    let (s, t1) = h.json(&transfer);
    assert_eq!(s, 200);
    assert_eq!(t1["state"]["state"], "SETTLED");
    let (_, t2) = h.json(&transfer);
    assert_eq!(t1["id"], t2["id"]);

    let (_, hist) = h.json(&ApiRequest::get(&format!("{base}/transactions?limit=5")).bearer(&token));
    let txns = hist["transactions"].as_array().unwrap();
    assert_eq!(txns.len(), 2);
    assert!(txns.iter().any(|t| t["id"] == t1["id"]));

    let (_, bal) = h.json(&ApiRequest::get(&format!("{base}/balance")).bearer(&token));
    assert_eq!(bal["balance_paise"], 250_000 - 12_345);
    let (_, st) = h.json(&ApiRequest::get(&format!("{base}/statement")).bearer(&token));
    assert_eq!(st["closing_paise"], bal["balance_paise"]);
}

#[test]
fn sessions_guard_wallets() {
    let (h, m) = console();
    let (a, b) = (&m[0], &m[1]);
    let token = login(&h, json!({ "aadhaar": a.aadhaar }), &a.password).1["token"].as_str().unwrap().to_string();
    let mine = format!("/wallets/{}/balance", a.aadhaar);
    let theirs = format!("/wallets/{}/balance", b.aadhaar);

    assert_eq!(h.call(&ApiRequest::get(&mine)).status, 401);
    assert_eq!(h.call(&ApiRequest::get(&theirs).bearer(&token)).status, 403);
    assert_eq!(h.call(&ApiRequest::get(&mine).bearer("forged")).status, 401);
    assert_eq!(h.call(&ApiRequest::get(&mine).bearer(&token)).status, 200);

    h.clock.advance(Duration::seconds(901));
    assert_eq!(h.call(&ApiRequest::get(&mine).bearer(&token)).status, 401);

    let token = login(&h, json!({ "aadhaar": a.aadhaar }), &a.password).1["token"].as_str().unwrap().to_string();
    let out = h.call(&ApiRequest::new(Method::Delete, "/sessions").bearer(&token));
    assert_eq!(out.status, 200);
    assert_eq!(h.call(&ApiRequest::get(&mine).bearer(&token)).status, 401);
}

#[test]
fn sessions_do_not_survive_a_restart_but_wallets_do() {
    let (mut h, m) = console();
    let a = &m[0];
    let token = login(&h, json!({ "aadhaar": a.aadhaar }), &a.password).1["token"].as_str().unwrap().to_string();
    h.restart();
    let mine = format!("/wallets/{}/balance", a.aadhaar);
    assert_eq!(h.call(&ApiRequest::get(&mine).bearer(&token)).status, 401);
    let token = login(&h, json!({ "aadhaar": a.aadhaar }), &a.password).1["token"].as_str().unwrap().to_string();
    assert_eq!(h.json(&ApiRequest::get(&mine).bearer(&token)).1["balance_paise"], 250_000);
}

#[test]
fn errors_are_structured() {
    let (h, _) = console();
    let (s, body) = h.json(&ApiRequest::post_json("/wallets", &json!({ "aadhaar": "234567890123" })));
    assert_eq!(s, 400);
    assert_eq!(body["error"], "InvalidAadhaar");
    let (s, body) = h.json(&ApiRequest::post_bytes("/transfers", "{"));
    assert_eq!(s, 400);
    assert!(body["message"].is_string());
    assert_eq!(h.call(&ApiRequest::get("/nowhere")).status, 404);
    let (s, body) = h.json(&ApiRequest::get("/health"));
    assert_eq!(s, 200, "{body}");
}
