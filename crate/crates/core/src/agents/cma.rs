//! The text-channel gateway and its line grammar:
//!
//! ```text
//! REQ [zone=<z>] persons=<n> from=<date> to=<date> rooms=<s,d,t> [max=<m>] [fac=<f1;f2...>]
//! BOOK <proposal_id>
//! ```
//!
//! Fields appear in this order. Optional fields may be left out or given an
//! empty value.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{
    parse_facilities, DomainError, FacilitySet, Money, ProposalId, RequestDraft, RequestId, ReservationRequest,
    RoomRequest, StayInterval, UserId, ZoneId,
};
use crate::protocol::{Action, Agent, AgentId, Classification, Command, Envelope, Notice, Payload, Timer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CmaError {
    #[error("empty line")]
    Empty,
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("expected key=value, got `{0}`")]
    NotAField(String),
    #[error("field `{0}` is unknown, repeated or out of order")]
    FieldOrder(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("bad value for `{field}`: {detail}")]
    BadValue { field: &'static str, detail: String },
    #[error("BOOK takes exactly one proposal id")]
    BookArity,
    #[error(transparent)]
    Invalid(#[from] DomainError),
}

/// The fields of a `REQ` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLine {
    pub zone: Option<ZoneId>,
    pub persons: u32,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub rooms: RoomRequest,
    pub max: Option<Money>,
    pub fac: FacilitySet,
}

impl RequestLine {
    /// Checks the line as a request and assigns it an identity.
    pub fn to_request(&self, request_id: RequestId, user_id: UserId) -> Result<ReservationRequest, CmaError> {
        let draft = RequestDraft {
            zone: self.zone.clone(),
            persons: self.persons,
            interval: StayInterval::new(self.from, self.to)?,
            rooms: self.rooms,
            max_total_price: self.max,
            required_facilities: self.fac.clone(),
        };
        let request = draft.into_request(request_id, user_id);
        request.validate()?;
        request.validate_capacity()?;
        Ok(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CmaLine {
    Req(RequestLine),
    Book(ProposalId),
}

const FIELDS: [&str; 7] = ["zone", "persons", "from", "to", "rooms", "max", "fac"];

fn bad(field: &'static str, detail: impl ToString) -> CmaError {
    CmaError::BadValue {
        field,
        detail: detail.to_string(),
    }
}

pub fn parse_line(line: &str) -> Result<CmaLine, CmaError> {
    let mut words = line.split_whitespace();
    let command = words.next().ok_or(CmaError::Empty)?;
    match command {
        "BOOK" => {
            let (Some(id), None) = (words.next(), words.next()) else {
                return Err(CmaError::BookArity);
            };
            Ok(CmaLine::Book(ProposalId::from(id)))
        }
        "REQ" => parse_request(words).map(CmaLine::Req),
        other => Err(CmaError::UnknownCommand(other.to_owned())),
    }
}

fn parse_request<'a>(words: impl Iterator<Item = &'a str>) -> Result<RequestLine, CmaError> {
    let mut values: [Option<&str>; 7] = [None; 7];
    let mut next = 0;
    for word in words {
        let (key, value) = word
            .split_once('=')
            .ok_or_else(|| CmaError::NotAField(word.to_owned()))?;
        let pos = FIELDS[next..]
            .iter()
            .position(|f| *f == key)
            .ok_or_else(|| CmaError::FieldOrder(key.to_owned()))?;
        values[next + pos] = Some(value);
        next += pos + 1;
    }
    let [zone, persons, from, to, rooms, max, fac] = values;
    let present = |v: Option<&'a str>| v.filter(|s| !s.is_empty());
    let date = |field: &'static str, v: Option<&str>| -> Result<NaiveDate, CmaError> {
        let v = v.ok_or(CmaError::Missing(field))?;
        NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|e| bad(field, e))
    };
    let persons = persons
        .ok_or(CmaError::Missing("persons"))?
        .parse::<u32>()
        .map_err(|e| bad("persons", e))?;
    let rooms = {
        let v = rooms.ok_or(CmaError::Missing("rooms"))?;
        let counts: Vec<u32> = v
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad("rooms", e))?;
        let [s, d, t] = counts[..] else {
            return Err(bad("rooms", "expected three counts: single,double,triple"));
        };
        RoomRequest::new(s, d, t)
    };
    let max = present(max)
        .map(|v| v.parse::<u64>().map(Money::new).map_err(|e| bad("max", e)))
        .transpose()?;
    let fac = match present(fac) {
        Some(v) => parse_facilities(v.split(';'))?,
        None => FacilitySet::new(),
    };
    Ok(RequestLine {
        zone: present(zone).map(ZoneId::from),
        persons,
        from: date("from", from)?,
        to: date("to", to)?,
        rooms,
        max,
        fac,
    })
}

/// The canonical spelling of a line; `parse_line(render_line(l))` gives `l` back.
pub fn render_line(line: &CmaLine) -> String {
    match line {
        CmaLine::Book(id) => format!("BOOK {id}"),
        CmaLine::Req(r) => {
            let mut out = String::from("REQ");
            if let Some(z) = &r.zone {
                out.push_str(&format!(" zone={z}"));
            }
            out.push_str(&format!(
                " persons={} from={} to={} rooms={},{},{}",
                r.persons, r.from, r.to, r.rooms.single, r.rooms.double, r.rooms.triple
            ));
            if let Some(m) = r.max {
                out.push_str(&format!(" max={m}"));
            }
            if !r.fac.is_empty() {
                let tokens: Vec<&str> = r.fac.iter().map(|f| f.token()).collect();
                out.push_str(&format!(" fac={}", tokens.join(";")));
            }
            out
        }
    }
}

/// Communication manager for one user's text channel. Turns lines into
/// requests and selections for the user's personal agent, and renders
/// what comes back as lines.
#[derive(Debug)]
pub struct GatewayAgent {
    id: AgentId,
    user_id: UserId,
    personal: AgentId,
    rng: ChaCha8Rng,
    offers: BTreeMap<ProposalId, RequestId>,
}

impl GatewayAgent {
    /// `seed` drives request id generation.
    pub fn new(user_id: UserId, seed: u64) -> Self {
        Self {
            id: AgentId::gateway(&user_id),
            personal: AgentId::personal(&user_id),
            user_id,
            rng: ChaCha8Rng::seed_from_u64(seed),
            offers: BTreeMap::new(),
        }
    }

    fn say(&self, text: impl Into<String>) -> Action {
        Action::Notify {
            user: self.user_id.clone(),
            notice: Notice::Line { text: text.into() },
        }
    }

    fn ingest(&mut self, text: &str) -> Vec<Action> {
        let line = match parse_line(text) {
            Ok(l) => l,
            Err(e) => return vec![self.say(format!("ERR {e}"))],
        };
        match line {
            CmaLine::Req(req) => {
                let rid = RequestId::from_bits(self.rng.gen());
                match req.to_request(rid.clone(), self.user_id.clone()) {
                    Ok(request) => vec![
                        Action::send(self.personal.clone(), rid.clone(), Payload::Ask { request }),
                        self.say(format!("OK {rid}")),
                    ],
                    Err(e) => vec![self.say(format!("ERR {e}"))],
                }
            }
            CmaLine::Book(pid) => match self.offers.get(&pid) {
                Some(rid) => vec![
                    Action::send(
                        self.personal.clone(),
                        rid.clone(),
                        Payload::Book {
                            proposal_id: pid.clone(),
                            booking_id: None,
                            user_id: self.user_id.clone(),
                            proposal: None,
                        },
                    ),
                    self.say(format!("BOOKING {pid}")),
                ],
                None => vec![self.say(format!("ERR unknown proposal {pid}"))],
            },
        }
    }

    fn offers(&mut self, c: &Classification) -> Vec<Action> {
        let mut out = vec![self.say(format!("OFFERS {} {}", c.request_id, c.proposals.len()))];
        for (i, p) in c.proposals.iter().enumerate() {
            self.offers.insert(p.proposal_id.clone(), c.request_id.clone());
            let legs: Vec<String> = p
                .legs
                .iter()
                .map(|l| {
                    format!(
                        "{}:{}..{}",
                        l.guesthouse_id,
                        l.interval.arrival(),
                        l.interval.departure()
                    )
                })
                .collect();
            out.push(self.say(format!(
                "{} {} {} {}",
                i + 1,
                p.proposal_id,
                p.total_price,
                legs.join(" ")
            )));
        }
        out
    }
}

impl Agent for GatewayAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, _now: u64, env: &Envelope) -> Vec<Action> {
        if env.sender != self.personal {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected sender {}", env.sender),
            )];
        }
        match &env.payload {
            Payload::Classify { classification } => self.offers(classification),
            Payload::Booked { booking_id, proposal } => {
                vec![self.say(format!(
                    "BOOKED {booking_id} {} {}",
                    proposal.proposal_id, proposal.total_price
                ))]
            }
            Payload::Failed { reason, .. } => {
                let rid = env.request_id.as_ref().map(|r| r.as_str()).unwrap_or("-");
                vec![self.say(format!("FAILED {rid} {reason}"))]
            }
            other => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {}", other.performative()),
            )],
        }
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        vec![Action::fault(None, format!("unexpected timer {timer:?}"))]
    }

    fn on_command(&mut self, _now: u64, command: Command) -> Vec<Action> {
        match command {
            Command::Line { text } => self.ingest(&text),
            other => vec![self.say(format!("ERR the text channel takes lines, got {other:?}"))],
        }
    }
}
