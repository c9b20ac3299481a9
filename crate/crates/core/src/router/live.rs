use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use super::trace::TraceEvent;
use super::{seal, Rejection, Router};
use crate::domain::UserId;
use crate::protocol::{Action, Agent, AgentId, Command, Envelope, Note, Notice, Timer};
use crate::store::Store;

/// Receives every notice a personal agent addresses to its user.
pub type NoticeSink = Arc<dyn Fn(UserId, Notice) + Send + Sync>;

#[derive(Debug, Clone, Copy)]
pub struct LiveOptions {
    /// Wall-clock length of one logical time unit.
    pub unit: Duration,
    /// Keep an in-memory trace of accepted envelopes and events.
    pub record_trace: bool,
}

impl Default for LiveOptions {
    fn default() -> Self {
        Self {
            unit: Duration::from_secs(1),
            record_trace: false,
        }
    }
}

enum Input {
    Envelope(Envelope),
    Timer(Timer),
    Command(Command),
}

struct Shared {
    router: Router,
    store: Arc<Store>,
    mailboxes: RwLock<BTreeMap<AgentId, UnboundedSender<Input>>>,
    start: Instant,
    unit: Duration,
    trace: Option<Mutex<Vec<String>>>,
    sink: NoticeSink,
}

impl Shared {
    fn now(&self) -> u64 {
        (self.start.elapsed().as_nanos() / self.unit.as_nanos().max(1)) as u64
    }

    fn record(&self, line: impl FnOnce() -> String) {
        if let Some(t) = &self.trace {
            t.lock().push(line());
        }
    }

    fn event(&self, event: TraceEvent) {
        self.record(|| event.to_line());
    }

    /// Admits wire bytes and queues them on the receiver's mailbox. Each
    /// mailbox is a single FIFO queue, so order per link is preserved.
    fn transmit(&self, wire: String) -> Result<(), Rejection> {
        match self.router.admit(wire.as_bytes()) {
            Ok(env) => {
                let tx = self.mailboxes.read().get(&env.receiver).cloned();
                self.record(|| wire);
                match tx {
                    Some(tx) => {
                        let _ = tx.send(Input::Envelope(env));
                    }
                    None => self.event(TraceEvent::Fault {
                        at: self.now(),
                        agent: env.receiver.clone(),
                        request_id: env.request_id.clone(),
                        detail: "no agent is running for this id".into(),
                    }),
                }
                Ok(())
            }
            Err(r) => {
                tracing::warn!(reason = %r.reason, detail = %r.detail, "envelope rejected");
                self.event(TraceEvent::Rejected {
                    at: self.now(),
                    reason: r.reason,
                    detail: r.detail.clone(),
                    raw: wire,
                });
                Err(r)
            }
        }
    }
}

/// Concurrent in-process transport: one tokio task and one mailbox per
/// agent. Each agent handles its inputs strictly one at a time.
pub struct LiveNet {
    shared: Arc<Shared>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

impl LiveNet {
    pub fn new(router: Router, store: Arc<Store>, options: LiveOptions, sink: NoticeSink) -> Self {
        Self {
            shared: Arc::new(Shared {
                router,
                store,
                mailboxes: RwLock::new(BTreeMap::new()),
                start: Instant::now(),
                unit: options.unit,
                trace: options.record_trace.then(|| Mutex::new(Vec::new())),
                sink,
            }),
            tasks: Mutex::new(Vec::new()),
        }
    }

    pub fn router(&self) -> &Router {
        &self.shared.router
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.shared.store
    }

    /// Current logical time.
    pub fn now(&self) -> u64 {
        self.shared.now()
    }

    /// Starts an agent's task. Must be called from within a tokio runtime.
    pub fn spawn(&self, agent: Box<dyn Agent>) {
        let id = agent.id().clone();
        assert!(self.shared.router.registry().contains(&id), "{id} is not registered");
        let (tx, mut rx) = unbounded_channel();
        self.shared.mailboxes.write().insert(id, tx.clone());
        let shared = Arc::clone(&self.shared);
        let handle = tokio::spawn(async move {
            let mut agent = agent;
            let mut sent = 0u64;
            while let Some(input) = rx.recv().await {
                let now = shared.now();
                let actions = match input {
                    Input::Envelope(env) => agent.on_envelope(now, &env),
                    Input::Timer(timer) => agent.on_timer(now, timer),
                    Input::Command(command) => agent.on_command(now, command),
                };
                apply(&shared, agent.id(), &tx, &mut sent, now, actions);
            }
        });
        self.tasks.lock().push(handle);
    }

    /// Hands user input to an agent. False if no such agent is running.
    pub fn command(&self, agent: &AgentId, command: Command) -> bool {
        let tx = self.shared.mailboxes.read().get(agent).cloned();
        let Some(tx) = tx else {
            return false;
        };
        self.shared.event(TraceEvent::Command {
            at: self.now(),
            agent: agent.clone(),
            command: command.clone(),
        });
        tx.send(Input::Command(command)).is_ok()
    }

    /// Offers raw wire bytes to the router as an outside party would.
    pub fn inject(&self, wire: String) -> Result<(), Rejection> {
        self.shared.transmit(wire)
    }

    /// Trace lines recorded so far; empty unless recording was enabled.
    pub fn trace(&self) -> Vec<String> {
        self.shared.trace.as_ref().map(|t| t.lock().clone()).unwrap_or_default()
    }

    /// Stops every agent task.
    pub async fn shutdown(&self) {
        let tasks: Vec<_> = self.tasks.lock().drain(..).collect();
        for t in &tasks {
            t.abort();
        }
        for t in tasks {
            let _ = t.await;
        }
        self.shared.mailboxes.write().clear();
    }
}

impl Drop for LiveNet {
    fn drop(&mut self) {
        for t in self.tasks.lock().iter() {
            t.abort();
        }
    }
}

fn apply(
    shared: &Arc<Shared>,
    from: &AgentId,
    own: &UnboundedSender<Input>,
    sent: &mut u64,
    now: u64,
    actions: Vec<Action>,
) {
    for action in actions {
        match action {
            Action::Send(out) => {
                if let Err(r) = shared.router.permits(from, &out.to) {
                    shared.event(TraceEvent::Fault {
                        at: now,
                        agent: from.clone(),
                        request_id: out.request_id,
                        detail: format!("refused to send: {}", r.detail),
                    });
                    continue;
                }
                let key = shared
                    .router
                    .registry()
                    .key(from)
                    .expect("running agents are registered")
                    .clone();
                *sent += 1;
                let (_, wire) = seal(&key, format!("{from}#{sent}"), from.clone(), out, now);
                let _ = shared.transmit(wire);
            }
            Action::Timer { after, timer } => {
                let tx = own.clone();
                let delay = shared.unit * u32::try_from(after).unwrap_or(u32::MAX);
                tokio::spawn(async move {
                    tokio::time::sleep(delay).await;
                    let _ = tx.send(Input::Timer(timer));
                });
            }
            Action::Note(Note::Timeout { request_id, pending }) => {
                tracing::debug!(agent = %from, %request_id, ?pending, "deadline passed");
                shared.event(TraceEvent::Timeout {
                    at: now,
                    agent: from.clone(),
                    request_id,
                    pending,
                });
            }
            Action::Note(Note::Fault { request_id, detail }) => {
                tracing::debug!(agent = %from, ?request_id, %detail, "protocol fault");
                shared.event(TraceEvent::Fault {
                    at: now,
                    agent: from.clone(),
                    request_id,
                    detail,
                });
            }
            Action::Notify { user, notice } => {
                shared.event(TraceEvent::Notice {
                    at: now,
                    user: user.clone(),
                    notice: notice.clone(),
                });
                (shared.sink)(user, notice);
            }
            Action::History(entry) => {
                if let Err(e) = shared.store.append_history(entry) {
                    tracing::error!(agent = %from, error = %e, "history write failed");
                }
            }
        }
    }
}
