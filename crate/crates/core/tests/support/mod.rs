//! Shared fixtures for the integration and acceptance tests: an independent
//! Verhoeff oracle, a gateway harness over a temporary directory, and a
//! seeded mixed workload driven through the gateway API.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ups_core::bank::{StubBank, StubMode};
use ups_core::channels::pos::{PosFrame, PosPayload, TerminalId};
use ups_core::clock::ManualClock;
use ups_core::gateway::{ApiRequest, ApiResponse, Config, Gateway};
use ups_core::Template;

/// Verhoeff over the dihedral group D5 computed from its definition rather
/// than from multiplication tables. Elements 0..4 are rotations r^k and 5..9
/// are reflections s·r^k.
pub mod verhoeff {
    fn mul(a: u8, b: u8) -> u8 {
        match (a < 5, b < 5) {
            (true, true) => (a + b) % 5,
            (true, false) => 5 + (a + (b - 5)) % 5,
            (false, true) => 5 + ((a - 5) + 5 - b) % 5,
            (false, false) => ((a - 5) + 5 - (b - 5)) % 5,
        }
    }

    fn inverse(a: u8) -> u8 {
        (0..10).find(|&b| mul(a, b) == 0).expect("group element has an inverse")
    }

    /// The position permutation (0 1 5 8 9 4 2 7)(3 6) applied `times` times.
    fn permute(d: u8, times: usize) -> u8 {
        const ONE: [u8; 10] = [1, 5, 7, 6, 2, 8, 3, 0, 9, 4];
        (0..times).fold(d, |x, _| ONE[x as usize])
    }

    fn fold(digits: &[u8], shift: usize) -> u8 {
        digits
            .iter()
            .rev()
            .enumerate()
            .fold(0, |c, (i, &d)| mul(c, permute(d, (i + shift) % 8)))
    }

    pub fn checksum_ok(digits: &[u8]) -> bool {
        fold(digits, 0) == 0
    }

    pub fn check_digit(digits: &[u8]) -> u8 {
        inverse(fold(digits, 1))
    }

    /// The oracle's verdict on a candidate Aadhaar string.
    pub fn valid_aadhaar(text: &str) -> bool {
        let bytes = text.as_bytes();
        bytes.len() == 12
            && bytes.iter().all(u8::is_ascii_digit)
            && bytes[0] >= b'2'
            && checksum_ok(&bytes.iter().map(|b| b - b'0').collect::<Vec<_>>())
    }
}

pub fn random_aadhaar(rng: &mut impl Rng) -> String {
    let mut digits = vec![rng.random_range(2..10u8)];
    digits.extend((0..10).map(|_| rng.random_range(0..10u8)));
    digits.push(verhoeff::check_digit(&digits));
    digits.iter().map(|d| char::from(b'0' + d)).collect()
}

pub fn template(seed: u64) -> Template {
    let mut bytes = [0u8; 64];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
    Template::from_bytes(&bytes).unwrap()
}

pub fn noisy(base: &Template, flips: usize, rng: &mut impl Rng) -> Template {
    base.with_flipped_bits(sample(rng, 512, flips))
}

pub const OUTLET_KEY: &str = "k";
pub const OUTLETS: [&str; 5] = ["o1", "o2", "o3", "o4", "o5"];

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 2, 3, 0, 0).unwrap()
}

/// A gateway over a temporary directory that can be killed and reopened on
/// the same files.
pub struct Harness {
    pub gw: Option<Gateway>,
    pub clock: Arc<ManualClock>,
    pub bank: Arc<StubBank>,
    pub config: Config,
    pub dir: tempfile::TempDir,
}

impl Harness {
    pub fn new(adjust: impl FnOnce(&mut Config)) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let mut config = Config::in_dir(dir.path());
        config.sync = false;
        for o in OUTLETS {
            config.outlets.insert(o.to_string(), OUTLET_KEY.to_string());
        }
        adjust(&mut config);
        let clock = Arc::new(ManualClock::new(t0()));
        let bank = Arc::new(StubBank::new(StubMode::Ack));
        let gw = Gateway::open_with(&config, clock.clone(), bank.clone()).unwrap();
        Harness {
            gw: Some(gw),
            clock,
            bank,
            config,
            dir,
        }
    }

    pub fn gw(&self) -> &Gateway {
        self.gw.as_ref().expect("gateway running")
    }

    pub fn call(&self, req: &ApiRequest) -> ApiResponse {
        self.gw().handle(req)
    }

    pub fn json(&self, req: &ApiRequest) -> (u16, Value) {
        let r = self.call(req);
        (r.status, r.json_body())
    }

    pub fn kill(&mut self) {
        self.gw = None;
    }

    pub fn restart(&mut self) {
        self.gw = None;
        self.gw = Some(Gateway::open_with(&self.config, self.clock.clone(), self.bank.clone()).unwrap());
    }

    pub fn log_path(&self) -> std::path::PathBuf {
        self.config.log_path.clone()
    }

    pub fn snapshot(&self) -> String {
        self.gw().with_engine(|e| e.state().snapshot())
    }
}

pub fn outlet(req: ApiRequest, id: &str) -> ApiRequest {
    req.outlet(id, OUTLET_KEY)
}

#[derive(Clone, Debug)]
pub struct Member {
    pub aadhaar: String,
    pub phone: String,
    pub email: String,
    pub password: String,
    pub card: String,
    pub pin: String,
    pub finger: Template,
    pub voice: Template,
}

pub fn population(n: usize, seed: u64) -> Vec<Member> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let aadhaar = random_aadhaar(&mut rng);
        if !seen.insert(aadhaar.clone()) {
            continue;
        }
        let i = out.len();
        out.push(Member {
            aadhaar,
            phone: format!("9{:09}", 100_000_000 + i * 7919),
            email: format!("member{i}@example.in"),
            password: format!("pw-{i}-{}", rng.random_range(1000..9999)),
            card: format!("4{:015}", 111_111_111_111_000u64 + i as u64 * 13),
            pin: format!("{:04}", rng.random_range(0..10_000)),
            finger: template(seed * 1000 + 2 * i as u64),
            voice: template(seed * 1000 + 2 * i as u64 + 1),
        });
    }
    out
}

/// Terminal `SHOP000k` is registered to member `k`.
pub fn terminal_id(k: usize) -> TerminalId {
    format!("SHOP{k:04}").parse().unwrap()
}

pub fn register_terminals(config: &mut Config, members: &[Member], count: usize) {
    for (k, m) in members.iter().take(count).enumerate() {
        config.terminals.register(terminal_id(k), m.aadhaar.parse().unwrap());
    }
}

/// Requests that open and equip every member's wallet.
pub fn setup_requests(members: &[Member]) -> Vec<ApiRequest> {
    let mut out = Vec::new();
    for m in members {
        out.push(ApiRequest::post_json("/wallets", &json!({ "aadhaar": m.aadhaar })));
        let base = format!("/wallets/{}", m.aadhaar);
        out.push(outlet(
            ApiRequest::post_json(&format!("{base}/aliases"), &json!({ "kind": "PHONE", "value": m.phone })),
            "o1",
        ));
        out.push(outlet(
            ApiRequest::post_json(&format!("{base}/aliases"), &json!({ "kind": "EMAIL", "value": m.email })),
            "o1",
        ));
        for body in [
            json!({ "factor": "PASSWORD", "password": m.password }),
            json!({ "factor": "FINGERPRINT", "template": m.finger.to_hex() }),
            json!({ "factor": "VOICE", "template": m.voice.to_hex() }),
            json!({ "factor": "CARD", "number": m.card, "pin": m.pin }),
        ] {
            out.push(outlet(ApiRequest::post_json(&format!("{base}/credentials"), &body), "o1"));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum Op {
    CashIn { outlet: usize, w: usize, paise: i64 },
    CashOut { outlet: usize, w: usize, paise: i64 },
    Web { from: usize, to: usize, by: u8, paise: i64, second_factor: bool },
    Sms { from: usize, to: usize, paise: i64 },
    Email { from: usize, to: usize, paise: i64 },
    PosCard { w: usize, terminal: usize, paise: i64, wrong_pin: bool },
    PosFinger { w: usize, to: usize, paise: i64, flips: Vec<usize> },
    Voice { w: usize, to: usize, paise: i64, flips: Vec<usize>, state_id: bool },
    MoOut { w: usize, paise: i64 },
    MoAdvance { nth: usize, to: &'static str },
    Intake { to: Option<usize>, paise: i64 },
    BankOut { w: usize, paise: i64 },
}

#[derive(Clone, Debug)]
pub struct TimedOp {
    pub index: usize,
    pub at: DateTime<Utc>,
    pub op: Op,
}

fn amount(rng: &mut impl Rng) -> i64 {
    match rng.random_range(0..20) {
        0 => rng.random_range(1_000_000..2_000_000),
        1 => 0,
        2..=4 => rng.random_range(1..10_000),
        _ => rng.random_range(10_000..300_000),
    }
}

pub fn workload(seed: u64, n: usize, members: usize, terminals: usize) -> Vec<TimedOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = t0();
    let mut out = Vec::with_capacity(n);
    let mut issued = 0usize;
    for index in 0..n {
        at += Duration::seconds(rng.random_range(0..4 * 3600));
        let w = rng.random_range(0..members);
        let mut other = rng.random_range(0..members - 1);
        if other >= w {
            other += 1;
        }
        let flips = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(0..40);
            sample(rng, 512, n).into_vec()
        };
        let op = match rng.random_range(0..100) {
            0..=19 => Op::CashIn {
                outlet: rng.random_range(0..5),
                w,
                paise: rng.random_range(100..2_000_000),
            },
            20..=26 => Op::CashOut { outlet: rng.random_range(0..5), w, paise: amount(&mut rng) },
            27..=41 => Op::Web {
                from: w,
                to: other,
                by: rng.random_range(0..3),
                paise: amount(&mut rng),
                second_factor: rng.random_bool(0.5),
            },
            42..=51 => Op::Sms { from: w, to: other, paise: amount(&mut rng) },
            52..=59 => Op::Email { from: w, to: other, paise: amount(&mut rng) },
            60..=66 => Op::PosCard {
                w,
                terminal: rng.random_range(0..terminals),
                paise: amount(&mut rng),
                wrong_pin: rng.random_bool(0.1),
            },
            67..=72 => Op::PosFinger { w, to: other, paise: amount(&mut rng), flips: flips(&mut rng) },
            73..=78 => Op::Voice {
                w,
                to: other,
                paise: amount(&mut rng),
                flips: flips(&mut rng),
                state_id: rng.random_bool(0.5),
            },
            79..=83 => {
                issued += 1;
                Op::MoOut { w, paise: amount(&mut rng) }
            }
            84..=89 if issued > 0 => Op::MoAdvance {
                nth: rng.random_range(0..issued),
                to: ["DISPATCHED", "DELIVERED", "RETURNED"][rng.random_range(0..3)],
            },
            84..=94 => Op::Intake {
                to: (!rng.random_bool(0.2)).then_some(w),
                paise: rng.random_range(100..500_000),
            },
            _ => Op::BankOut { w, paise: amount(&mut rng) },
        };
        out.push(TimedOp { index, at, op });
    }
    out
}

fn rupees(paise: i64) -> String {
    format!("{}.{:02}", paise / 100, paise % 100)
}

/// Turns workload operations into requests and remembers the money orders
/// they create.
pub struct Driver {
    pub members: Vec<Member>,
    pub orders: Vec<String>,
}

impl Driver {
    pub fn new(members: Vec<Member>) -> Driver {
        Driver { members, orders: Vec::new() }
    }

    pub fn request(&self, t: &TimedOp) -> Option<ApiRequest> {
        let m = &self.members;
        let key = format!("op-{}", t.index);
        let pw = |w: usize| json!({ "factor": "PASSWORD", "password": m[w].password });
        Some(match &t.op {
            Op::CashIn { outlet: o, w, paise } => outlet(
                ApiRequest::post_json(
                    &format!("/outlets/{}/cash-in", OUTLETS[*o]),
                    &json!({ "customer": { "aadhaar": m[*w].aadhaar }, "amount_paise": paise, "idempotency_key": key }),
                ),
                OUTLETS[*o],
            ),
            Op::CashOut { outlet: o, w, paise } => outlet(
                ApiRequest::post_json(
                    &format!("/outlets/{}/cash-out", OUTLETS[*o]),
                    &json!({
                        "customer": { "kind": "PHONE", "value": m[*w].phone },
                        "amount_paise": paise,
                        "idempotency_key": key,
                        "proofs": [pw(*w)],
                    }),
                ),
                OUTLETS[*o],
            ),
            Op::Web { from, to, by, paise, second_factor } => {
                let receiver = match by {
                    0 => json!({ "aadhaar": m[*to].aadhaar }),
                    1 => json!({ "kind": "PHONE", "value": m[*to].phone }),
                    _ => json!({ "kind": "EMAIL", "value": m[*to].email }),
                };
                let mut proofs = vec![pw(*from)];
                if *second_factor {
                    proofs.push(json!({ "factor": "FINGERPRINT", "template": m[*from].finger.to_hex() }));
                }
                ApiRequest::post_json(
                    "/transfers",
                    &json!({
                        "sender": { "kind": "EMAIL", "value": m[*from].email },
                        "receiver": receiver,
                        "amount_paise": paise,
                        "proofs": proofs,
                    }),
                )
                .with_header("idempotency-key", &key)
            }
            Op::Sms { from, to, paise } => ApiRequest::post_json(
                "/channels/sms",
                &json!({
                    "from": m[*from].phone,
                    "body": format!("PAY {} TO PHONE:{} REF {key}", rupees(*paise), m[*to].phone),
                }),
            ),
            Op::Email { from, to, paise } => ApiRequest::post_json(
                "/channels/email",
                &json!({
                    "from": m[*from].email,
                    "body": format!("PAY {} TO EMAIL:{} REF {key}", rupees(*paise), m[*to].email),
                }),
            ),
            Op::PosCard { w, terminal, paise, wrong_pin } => {
                let pin = if *wrong_pin { format!("{:04}", (m[*w].pin.parse::<u32>().unwrap() + 1) % 10_000) } else { m[*w].pin.clone() };
                let frame = PosFrame {
                    terminal_id: terminal_id(*terminal),
                    amount: *paise as u64,
                    payload: PosPayload::CardPay { card: m[*w].card.clone(), pin },
                };
                ApiRequest::post_bytes("/channels/pos", frame.encode().unwrap())
            }
            Op::PosFinger { w, to, paise, flips } => {
                let frame = PosFrame {
                    terminal_id: "WALKUP01".parse().unwrap(),
                    amount: *paise as u64,
                    payload: PosPayload::FingerprintPay {
                        template: m[*w].finger.with_flipped_bits(flips.iter().copied()),
                        receiver_phone: Some(format!("91{}", m[*to].phone)),
                    },
                };
                ApiRequest::post_bytes("/channels/pos", frame.encode().unwrap())
            }
            Op::Voice { w, to, paise, flips, state_id } => {
                let lead = if *state_id { format!("my aadhaar {} ", m[*w].aadhaar) } else { String::new() };
                ApiRequest::post_json(
                    "/channels/voice",
                    &json!({
                        "template": m[*w].voice.with_flipped_bits(flips.iter().copied()).to_hex(),
                        "transcript": format!("{lead}transfer {} rupees to email {}", rupees(*paise), m[*to].email),
                    }),
                )
            }
            Op::MoOut { w, paise } => ApiRequest::post_json(
                "/money-orders",
                &json!({
                    "sender": { "aadhaar": m[*w].aadhaar },
                    "destination": format!("House {}, Village Road, Block {}", t.index, w),
                    "amount_paise": paise,
                    "idempotency_key": key,
                    "proofs": [pw(*w)],
                }),
            ),
            Op::MoAdvance { nth, to } => {
                let id = self.orders.get(*nth)?;
                outlet(
                    ApiRequest::post_json(&format!("/money-orders/{id}/advance"), &json!({ "state": to })),
                    "o1",
                )
            }
            Op::Intake { to, paise } => {
                let phone = match to {
                    Some(w) => m[*w].phone.clone(),
                    None => format!("8{:09}", t.index),
                };
                let form = format!(
                    "sender_name=Sender {i}\nsender_address=House {i}, Rampur\nreceiver_phone={phone}\n\
                     amount={a}\nenclosed_cash={a}\nreference=R{i}\n",
                    i = t.index,
                    a = rupees(*paise),
                );
                outlet(ApiRequest::post_bytes("/money-orders/intake", form), "o1")
            }
            Op::BankOut { w, paise } => ApiRequest::post_json(
                &format!("/wallets/{}/bank-transfer", m[*w].aadhaar),
                &json!({ "amount_paise": paise, "idempotency_key": key, "proofs": [pw(*w)] }),
            ),
        })
    }

    pub fn observe(&mut self, t: &TimedOp, resp: &ApiResponse) {
        if let Op::MoOut { .. } = t.op {
            if let Some(id) = resp.json_body()["money_order"].as_str() {
                if !self.orders.iter().any(|o| o == id) {
                    self.orders.push(id.to_string());
                }
            }
        }
    }

    /// Sends one operation at its scheduled time.
    pub fn run(&mut self, h: &Harness, t: &TimedOp) -> Option<ApiResponse> {
        h.clock.set(t.at);
        let req = self.request(t)?;
        let resp = h.call(&req);
        assert!(resp.status < 500, "op {} {:?} -> {} {:?}", t.index, t.op, resp.status, String::from_utf8_lossy(&resp.body));
        self.observe(t, &resp);
        Some(resp)
    }
}

/// Sets up a harness with `n` equipped wallets and terminals for the first
/// five of them.
pub fn equipped(n: usize, seed: u64) -> (Harness, Driver) {
    let members = population(n, seed);
    let h = Harness::new(|c| register_terminals(c, &members, 5));
    for req in setup_requests(&members) {
        let r = h.call(&req);
        assert!(r.status < 300, "{} -> {} {}", req.path, r.status, String::from_utf8_lossy(&r.body));
    }
    (h, Driver::new(members))
}

/// Every wallet and system balance, by account name.
pub fn balances(h: &Harness) -> BTreeMap<String, i64> {
    h.gw().with_engine(|e| {
        let ledger = e.state().ledger();
        let mut out: BTreeMap<String, i64> = ledger
            .wallets()
            .map(|w| (w.owner.to_string(), w.balance.paise()))
            .collect();
        for (acct, bal) in ledger.system_accounts() {
            out.insert(acct.to_string(), bal.paise());
        }
        out
    })
}
