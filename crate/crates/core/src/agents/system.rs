use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;

use super::{build_cast, zone_roster, BuildError, Topology, ZoneRoster};
use crate::domain::{BookingId, DomainError, Proposal, RequestDraft, RequestId, UserId, ZoneId};
use crate::protocol::{AgentId, Choice, Classification, Command, Notice, ProtocolConfig};
use crate::router::{AuthKey, LiveNet, LiveOptions};
use crate::store::{HistoryEntry, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchState {
    Pending,
    Classified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BookingOutcome {
    Booked {
        booking_id: BookingId,
        proposal: Proposal,
    },
    Failed {
        booking_id: Option<BookingId>,
        reason: String,
    },
}

/// What a front end can see of one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestView {
    pub request_id: RequestId,
    pub user_id: UserId,
    pub state: SearchState,
    pub classification: Option<Classification>,
    /// Why the search was rejected.
    pub reason: Option<String>,
    /// Booking attempts in order.
    pub outcomes: Vec<BookingOutcome>,
    /// Refused user actions, such as selecting an unknown proposal.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown zone {0}")]
    UnknownZone(ZoneId),
    #[error(transparent)]
    Invalid(#[from] DomainError),
    #[error("the personal agent is not running")]
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("no such request")]
    NotFound,
    #[error("the classification is not ready")]
    NotReady,
    #[error("{0}")]
    Refused(String),
    #[error("no outcome in time")]
    Timeout,
}

type Board = Mutex<HashMap<RequestId, watch::Sender<RequestView>>>;

/// A running system: every agent of a topology on the live transport, plus
/// the request bookkeeping front ends need. Stands in for the user
/// interface: it holds no mailbox and acts only through personal agents.
pub struct LiveSystem {
    net: LiveNet,
    topology: Topology,
    board: Arc<Board>,
    lines: broadcast::Sender<(UserId, String)>,
    locks: Mutex<HashMap<RequestId, Arc<tokio::sync::Mutex<()>>>>,
    unit: Duration,
    sweeper: JoinHandle<()>,
}

fn apply_notice(board: &Board, notice: Notice) {
    let rid = match &notice {
        Notice::Submitted { request_id } => request_id.clone(),
        Notice::Rejected {
            request_id: Some(r), ..
        } => r.clone(),
        Notice::Classified { classification } => classification.request_id.clone(),
        Notice::Booked { request_id, .. } | Notice::Failed { request_id, .. } => request_id.clone(),
        Notice::Rejected { request_id: None, .. } | Notice::Line { .. } => return,
    };
    let Some(tx) = board.lock().get(&rid).cloned() else {
        return;
    };
    tx.send_modify(|view| match notice {
        Notice::Submitted { .. } | Notice::Line { .. } => {}
        Notice::Rejected { reason, .. } => {
            if view.state == SearchState::Pending {
                view.state = SearchState::Rejected;
                view.reason = Some(reason.clone());
            }
            view.errors.push(reason);
        }
        Notice::Classified { classification } => {
            view.state = SearchState::Classified;
            view.classification = Some(classification);
        }
        Notice::Booked {
            booking_id, proposal, ..
        } => view.outcomes.push(BookingOutcome::Booked { booking_id, proposal }),
        Notice::Failed { booking_id, reason, .. } => {
            if view.state == SearchState::Pending {
                view.state = SearchState::Rejected;
                view.reason = Some(reason);
            } else {
                view.outcomes.push(BookingOutcome::Failed { booking_id, reason });
            }
        }
    });
}

impl LiveSystem {
    /// Seeds the store from the topology and starts every agent. Must be
    /// called from within a tokio runtime.
    pub fn start(
        topology: Topology,
        store: Arc<Store>,
        config: ProtocolConfig,
        options: LiveOptions,
    ) -> Result<Self, BuildError> {
        topology.seed_store(&store)?;
        let mut rng = rand::thread_rng();
        let cast = build_cast(&topology, &store, config, |_| AuthKey::random(&mut rng), rand::random())?;
        let board: Arc<Board> = Arc::default();
        let sink_board = Arc::clone(&board);
        let (lines, _) = broadcast::channel(256);
        let sink_lines = lines.clone();
        let net = LiveNet::new(
            cast.router,
            Arc::clone(&store),
            options,
            Arc::new(move |user, notice| match notice {
                Notice::Line { text } => {
                    let _ = sink_lines.send((user, text));
                }
                notice => apply_notice(&sink_board, notice),
            }),
        );
        for agent in cast.agents {
            net.spawn(agent);
        }
        let unit = options.unit;
        let start = tokio::time::Instant::now();
        let sweep_store = Arc::clone(&store);
        let sweeper = tokio::spawn(async move {
            let mut tick = tokio::time::interval(unit * 10);
            loop {
                tick.tick().await;
                let now = (start.elapsed().as_nanos() / unit.as_nanos().max(1)) as u64;
                if let Err(e) = sweep_store.expire(now) {
                    tracing::error!(error = %e, "hold expiry sweep failed");
                }
            }
        });
        Ok(Self {
            net,
            topology,
            board,
            lines,
            locks: Mutex::default(),
            unit,
            sweeper,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn store(&self) -> &Arc<Store> {
        self.net.store()
    }

    pub fn net(&self) -> &LiveNet {
        &self.net
    }

    /// Converts logical units to wall-clock time.
    pub fn units(&self, n: u64) -> Duration {
        self.unit * u32::try_from(n).unwrap_or(u32::MAX)
    }

    pub fn zones(&self) -> &[ZoneId] {
        &self.topology.zones
    }

    pub fn roster(&self, zone: &ZoneId) -> Option<ZoneRoster> {
        self.topology
            .zones
            .contains(zone)
            .then(|| zone_roster(self.store(), zone))
    }

    pub fn history(&self, user: &UserId) -> Vec<HistoryEntry> {
        self.store().query_history(user)
    }

    /// Validates a draft, assigns a fresh request id and hands the request
    /// to the user's personal agent. The search continues in the background.
    pub fn submit(&self, user: &UserId, draft: RequestDraft) -> Result<RequestId, SubmitError> {
        if self.topology.user(user).is_none() {
            return Err(SubmitError::UnknownUser(user.clone()));
        }
        if let Some(z) = &draft.zone {
            if !self.topology.zones.contains(z) {
                return Err(SubmitError::UnknownZone(z.clone()));
            }
        }
        let request_id = RequestId::from_bits(rand::thread_rng().gen());
        let request = draft.clone().into_request(request_id.clone(), user.clone());
        request.validate()?;
        request.validate_capacity()?;
        let (tx, _) = watch::channel(RequestView {
            request_id: request_id.clone(),
            user_id: user.clone(),
            state: SearchState::Pending,
            classification: None,
            reason: None,
            outcomes: Vec::new(),
            errors: Vec::new(),
        });
        self.board.lock().insert(request_id.clone(), tx);
        let sent = self.net.command(
            &AgentId::personal(user),
            Command::Submit {
                request_id: request_id.clone(),
                draft,
            },
        );
        if !sent {
            self.board.lock().remove(&request_id);
            return Err(SubmitError::Unavailable);
        }
        Ok(request_id)
    }

    /// The request as its owner sees it; `None` for other users' requests.
    pub fn view(&self, user: &UserId, request_id: &RequestId) -> Option<RequestView> {
        let view = self.board.lock().get(request_id)?.borrow().clone();
        (&view.user_id == user).then_some(view)
    }

    /// Waits until the search has finished one way or the other.
    pub async fn wait_searched(&self, user: &UserId, request_id: &RequestId, timeout: Duration) -> Option<RequestView> {
        let mut rx = {
            let board = self.board.lock();
            let tx = board.get(request_id)?;
            if &tx.borrow().user_id != user {
                return None;
            }
            tx.subscribe()
        };
        let done = tokio::time::timeout(timeout, rx.wait_for(|v| v.state != SearchState::Pending))
            .await
            .ok()
            .and_then(Result::ok)
            .map(|v| v.clone());
        Some(done.unwrap_or_else(|| rx.borrow().clone()))
    }

    /// Books a proposal of a classified request and waits for the outcome.
    /// Selections on one request are handled one at a time.
    pub async fn select(
        &self,
        user: &UserId,
        request_id: &RequestId,
        choice: Choice,
        timeout: Duration,
    ) -> Result<BookingOutcome, SelectError> {
        let mut rx = {
            let board = self.board.lock();
            let tx = board.get(request_id).ok_or(SelectError::NotFound)?;
            if &tx.borrow().user_id != user {
                return Err(SelectError::NotFound);
            }
            tx.subscribe()
        };
        let lock = Arc::clone(self.locks.lock().entry(request_id.clone()).or_default());
        let _guard = lock.lock().await;
        let (outcomes, errors) = {
            let v = rx.borrow_and_update();
            match v.state {
                SearchState::Pending => return Err(SelectError::NotReady),
                SearchState::Rejected => {
                    return Err(SelectError::Refused(
                        v.reason.clone().unwrap_or_else(|| "rejected".into()),
                    ))
                }
                SearchState::Classified => {}
            }
            (v.outcomes.len(), v.errors.len())
        };
        let sent = self.net.command(
            &AgentId::personal(user),
            Command::Select {
                request_id: request_id.clone(),
                choice,
            },
        );
        if !sent {
            return Err(SelectError::Refused("the personal agent is not running".into()));
        }
        let waited = tokio::time::timeout(
            timeout,
            rx.wait_for(|v| v.outcomes.len() > outcomes || v.errors.len() > errors),
        )
        .await;
        let view = match waited {
            Ok(Ok(v)) => v.clone(),
            _ => return Err(SelectError::Timeout),
        };
        if let Some(outcome) = view.outcomes.get(outcomes) {
            return Ok(outcome.clone());
        }
        Err(SelectError::Refused(view.errors[errors].clone()))
    }

    /// Sends one line of the text grammar through the user's gateway.
    /// False when the user has no text channel.
    pub fn text_line(&self, user: &UserId, text: &str) -> bool {
        self.topology.user(user).is_some_and(|u| u.text_channel)
            && self
                .net
                .command(&AgentId::gateway(user), Command::Line { text: text.into() })
    }

    /// Replies written by every gateway, tagged with their user.
    pub fn subscribe_lines(&self) -> broadcast::Receiver<(UserId, String)> {
        self.lines.subscribe()
    }

    pub async fn shutdown(&self) {
        self.sweeper.abort();
        self.net.shutdown().await;
    }
}

impl Drop for LiveSystem {
    fn drop(&mut self) {
        self.sweeper.abort();
    }
}
