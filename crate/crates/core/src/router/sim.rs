use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::TraceEvent;
use super::{seal, Router};
use crate::domain::{RequestId, UserId};
use crate::protocol::{Action, Agent, AgentId, Command, Envelope, Note, Notice, ProtocolConfig, Timer};
use crate::store::Store;

/// Per-message delivery delay in logical units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Latency {
    Fixed(u64),
    /// Inclusive bounds.
    Uniform(u64, u64),
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Uniform(1, 10)
    }
}

/// Scripted work run against the store at a point in logical time, such as
/// an admin update. Returns the events to record.
pub type Hook = Box<dyn FnOnce(u64, &Store) -> Vec<TraceEvent>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub accepted: u64,
    pub rejected: u64,
    pub delivered: u64,
}

enum Work {
    Command(AgentId, Command),
    Raw(Vec<u8>),
    Hook(Hook),
    Deliver(Envelope),
    Timer(AgentId, Timer),
}

impl Work {
    /// Scripted input goes before deliveries, deliveries before timers.
    fn kind(&self) -> u8 {
        match self {
            Work::Command(..) | Work::Raw(_) | Work::Hook(_) => 0,
            Work::Deliver(_) => 1,
            Work::Timer(..) => 2,
        }
    }

    fn request_id(&self) -> Option<RequestId> {
        match self {
            Work::Command(_, Command::Submit { request_id, .. } | Command::Select { request_id, .. }) => {
                Some(request_id.clone())
            }
            Work::Deliver(env) => env.request_id.clone(),
            Work::Timer(
                _,
                Timer::Collection { request_id } | Timer::Collaboration { request_id } | Timer::Forget { request_id },
            ) => Some(request_id.clone()),
            _ => None,
        }
    }
}

/// Deterministic single-threaded transport.
///
/// Work is ordered by `(time, kind, sequence)`. Message ids are minted in
/// send order, latencies come from a ChaCha stream seeded once, and each
/// link delivers in send order, so a seed fixes the whole trace.
pub struct SimNet {
    router: Router,
    store: Arc<Store>,
    agents: BTreeMap<AgentId, Box<dyn Agent>>,
    queue: BTreeMap<(u64, u8, u64), Work>,
    seq: u64,
    next_msg: u64,
    now: u64,
    latency: Latency,
    rng: ChaCha8Rng,
    links: BTreeMap<(AgentId, AgentId), u64>,
    lines: Vec<String>,
    notices: Vec<(u64, UserId, Notice)>,
    stats: SimStats,
}

/// Everything a finished simulation produced.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub lines: Vec<String>,
    pub notices: Vec<(u64, UserId, Notice)>,
    pub stats: SimStats,
    pub quiescent: bool,
}

impl SimNet {
    pub fn new(router: Router, store: Arc<Store>, seed: u64, latency: Latency, config: ProtocolConfig) -> Self {
        let topology = TraceEvent::Topology {
            agents: router.registry().agents().collect(),
            config,
        };
        Self {
            router,
            store,
            agents: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            next_msg: 1,
            now: 0,
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
            links: BTreeMap::new(),
            lines: vec![topology.to_line()],
            notices: Vec::new(),
            stats: SimStats::default(),
        }
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Attaches an agent's logic to its registered mailbox.
    pub fn add_agent(&mut self, agent: Box<dyn Agent>) {
        assert!(
            self.router.registry().contains(agent.id()),
            "{} is not registered",
            agent.id()
        );
        self.agents.insert(agent.id().clone(), agent);
    }

    fn push(&mut self, at: u64, work: Work) {
        self.seq += 1;
        self.queue.insert((at, work.kind(), self.seq), work);
    }

    pub fn schedule_command(&mut self, at: u64, agent: AgentId, command: Command) {
        self.push(at, Work::Command(agent, command));
    }

    /// Hands raw wire bytes to the router at `at`, as an outside party would.
    pub fn schedule_raw(&mut self, at: u64, wire: Vec<u8>) {
        self.push(at, Work::Raw(wire));
    }

    pub fn schedule_hook(&mut self, at: u64, hook: Hook) {
        self.push(at, Work::Hook(hook));
    }

    /// Processes all work strictly before `horizon`, then closes the trace
    /// with a store snapshot and an end record.
    pub fn run(mut self, horizon: u64) -> SimRun {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 >= horizon {
                break;
            }
            let ((at, _, _), work) = entry.remove_entry();
            self.now = at;
            self.step(work);
        }
        let quiescent = self.queue.is_empty();
        let at = if quiescent { self.now } else { horizon };
        let pending_requests: BTreeSet<RequestId> = self.queue.values().filter_map(Work::request_id).collect();
        self.lines.push(
            TraceEvent::Snapshot {
                at,
                store: self.store.snapshot(),
            }
            .to_line(),
        );
        self.lines.push(
            TraceEvent::End {
                at,
                quiescent,
                pending_events: self.queue.len(),
                pending_requests: pending_requests.into_iter().collect(),
            }
            .to_line(),
        );
        SimRun {
            lines: self.lines,
            notices: self.notices,
            stats: self.stats,
            quiescent,
        }
    }

    fn event(&mut self, event: TraceEvent) {
        self.lines.push(event.to_line());
    }

    fn step(&mut self, work: Work) {
        let now = self.now;
        match work {
            Work::Command(id, command) => {
                self.event(TraceEvent::Command {
                    at: now,
                    agent: id.clone(),
                    command: command.clone(),
                });
                self.with_agent(&id, |agent| agent.on_command(now, command));
            }
            Work::Raw(wire) => self.transmit(wire),
            Work::Hook(hook) => {
                for ev in hook(now, &self.store) {
                    self.event(ev);
                }
            }
            Work::Deliver(env) => {
                self.stats.delivered += 1;
                let id = env.receiver.clone();
                self.with_agent(&id, |agent| agent.on_envelope(now, &env));
            }
            Work::Timer(id, timer) => self.with_agent(&id, |agent| agent.on_timer(now, timer)),
        }
    }

    fn with_agent(&mut self, id: &AgentId, f: impl FnOnce(&mut dyn Agent) -> Vec<Action>) {
        let Some(agent) = self.agents.get_mut(id) else {
            self.event(TraceEvent::Fault {
                at: self.now,
                agent: id.clone(),
                request_id: None,
                detail: "no agent is running for this id".into(),
            });
            return;
        };
        let actions = f(agent.as_mut());
        self.apply(id, actions);
    }

    fn apply(&mut self, from: &AgentId, actions: Vec<Action>) {
        let now = self.now;
        for action in actions {
            match action {
                Action::Send(out) => {
                    // Agents check the matrix themselves before anything
                    // reaches the router.
                    if let Err(r) = self.router.permits(from, &out.to) {
                        self.event(TraceEvent::Fault {
                            at: now,
                            agent: from.clone(),
                            request_id: out.request_id,
                            detail: format!("refused to send: {}", r.detail),
                        });
                        continue;
                    }
                    let key = self
                        .router
                        .registry()
                        .key(from)
                        .expect("running agents are registered")
                        .clone();
                    let msg_id = format!("m{:08}", self.next_msg);
                    self.next_msg += 1;
                    let (_, wire) = seal(&key, msg_id, from.clone(), out, now);
                    self.transmit(wire.into_bytes());
                }
                Action::Timer { after, timer } => self.push(now + after, Work::Timer(from.clone(), timer)),
                Action::Note(Note::Timeout { request_id, pending }) => self.event(TraceEvent::Timeout {
                    at: now,
                    agent: from.clone(),
                    request_id,
                    pending,
                }),
                Action::Note(Note::Fault { request_id, detail }) => self.event(TraceEvent::Fault {
                    at: now,
                    agent: from.clone(),
                    request_id,
                    detail,
                }),
                Action::Notify { user, notice } => {
                    self.event(TraceEvent::Notice {
                        at: now,
                        user: user.clone(),
                        notice: notice.clone(),
                    });
                    self.notices.push((now, user, notice));
                }
                Action::History(entry) => {
                    if let Err(e) = self.store.append_history(entry) {
                        self.event(TraceEvent::Fault {
                            at: now,
                            agent: from.clone(),
                            request_id: None,
                            detail: format!("history write failed: {e}"),
                        });
                    }
                }
            }
        }
    }

    fn transmit(&mut self, wire: Vec<u8>) {
        match self.router.admit(&wire) {
            Ok(env) => {
                self.stats.accepted += 1;
                let delay = match self.latency {
                    Latency::Fixed(d) => d,
                    Latency::Uniform(lo, hi) => self.rng.gen_range(lo..=hi.max(lo)),
                };
                let link = (env.sender.clone(), env.receiver.clone());
                let last = self.links.get(&link).copied().unwrap_or(0);
                let at = (self.now + delay).max(last);
                self.links.insert(link, at);
                self.lines
                    .push(String::from_utf8(wire).expect("admitted envelopes are UTF-8"));
                self.push(at, Work::Deliver(env));
            }
            Err(r) => {
                self.stats.rejected += 1;
                self.event(TraceEvent::Rejected {
                    at: self.now,
                    reason: r.reason,
                    detail: r.detail,
                    raw: String::from_utf8_lossy(&wire).into_owned(),
                });
            }
        }
    }
}
