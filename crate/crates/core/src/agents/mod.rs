//! Runnable agents: the topology file, the cast builder that registers and
//! constructs every agent, the text-channel gateway and the live system
//! facade used by front ends.

mod cma;
mod credential;
mod system;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cma::{parse_line, render_line, CmaError, CmaLine, GatewayAgent, RequestLine};
pub use credential::{hash_credential, verify_credential};
pub use system::{BookingOutcome, LiveSystem, RequestView, SearchState, SelectError, SubmitError};

use crate::domain::{FacilitySet, GuesthouseId, GuesthouseProfile, UserId, ZoneId};
use crate::protocol::{Agent, AgentId, GuesthouseAgent, NationalAgent, PersonalAgent, ProtocolConfig, ZonalAgent};
use crate::router::{AgentRecord, AuthKey, PermissionMatrix, Registry, RegistryError, Router};
use crate::store::{AdminPrincipal, CalendarEntry, GuesthouseUpdate, Store, StoreError};

/// A user as known to their personal agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub user_id: UserId,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub default_zone: Option<ZoneId>,
    #[serde(default)]
    pub default_facilities: FacilitySet,
    /// `salt$sha256hex`, see [`hash_credential`].
    #[serde(default)]
    pub credential_hash: Option<String>,
    /// Whether the user also has a text-channel gateway.
    #[serde(default)]
    pub text_channel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuesthouseSpec {
    pub profile: GuesthouseProfile,
    /// Nights offered below full inventory; the rest is closed by staff.
    #[serde(default)]
    pub calendar: Vec<CalendarEntry>,
    /// Credentials for the guesthouse's staff login.
    #[serde(default)]
    pub admin_credential_hash: Option<String>,
    /// The agent never answers. For exercising deadlines.
    #[serde(default)]
    pub silent: bool,
}

/// The static cast of a deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub zones: Vec<ZoneId>,
    #[serde(default)]
    pub guesthouses: Vec<GuesthouseSpec>,
    #[serde(default)]
    pub users: Vec<UserProfile>,
}

/// General information a zonal agent holds about one guesthouse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuesthouseInfo {
    pub guesthouse_id: GuesthouseId,
    pub name: String,
    pub address: String,
    pub telephone: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneRoster {
    pub zone_id: ZoneId,
    pub guesthouses: Vec<GuesthouseInfo>,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid topology: {0}")]
    Topology(String),
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Self, BuildError> {
        let t: Topology = serde_json::from_str(text).map_err(|e| BuildError::Topology(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// Cross-reference checks serde cannot express.
    pub fn validate(&self) -> Result<(), BuildError> {
        let bad = |m: String| Err(BuildError::Topology(m));
        let zones: BTreeSet<_> = self.zones.iter().collect();
        if zones.len() != self.zones.len() {
            return bad("duplicate zone".into());
        }
        let mut ghs = BTreeSet::new();
        for g in &self.guesthouses {
            let p = &g.profile;
            if !zones.contains(&p.zone_id) {
                return bad(format!(
                    "guesthouse {} names unknown zone {}",
                    p.guesthouse_id, p.zone_id
                ));
            }
            if !ghs.insert(&p.guesthouse_id) {
                return bad(format!("duplicate guesthouse {}", p.guesthouse_id));
            }
        }
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(&u.user_id) {
                return bad(format!("duplicate user {}", u.user_id));
            }
            if let Some(z) = &u.default_zone {
                if !zones.contains(z) {
                    return bad(format!("user {} defaults to unknown zone {z}", u.user_id));
                }
            }
        }
        Ok(())
    }

    pub fn user(&self, id: &UserId) -> Option<&UserProfile> {
        self.users.iter().find(|u| &u.user_id == id)
    }

    pub fn guesthouse(&self, id: &GuesthouseId) -> Option<&GuesthouseSpec> {
        self.guesthouses.iter().find(|g| &g.profile.guesthouse_id == id)
    }

    /// Guesthouse ids per zone, sorted.
    pub fn rosters(&self) -> BTreeMap<ZoneId, Vec<GuesthouseId>> {
        let mut out: BTreeMap<ZoneId, Vec<GuesthouseId>> = self.zones.iter().map(|z| (z.clone(), Vec::new())).collect();
        for g in &self.guesthouses {
            out.entry(g.profile.zone_id.clone())
                .or_default()
                .push(g.profile.guesthouse_id.clone());
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    /// Adds every guesthouse the store does not know yet, with its
    /// calendar. Guesthouses already present (a reopened store) are kept.
    pub fn seed_store(&self, store: &Store) -> Result<(), BuildError> {
        for g in &self.guesthouses {
            let id = &g.profile.guesthouse_id;
            if store.has_guesthouse(id) {
                continue;
            }
            store.add_guesthouse(g.profile.clone(), None)?;
            if !g.calendar.is_empty() {
                store.update_guesthouse(
                    &AdminPrincipal {
                        guesthouse_id: id.clone(),
                    },
                    id,
                    GuesthouseUpdate::Calendar(g.calendar.clone()),
                )?;
            }
        }
        Ok(())
    }
}

/// What to start, for [`spawn_agent`].
#[derive(Debug, Clone)]
pub enum AgentSpec {
    National {
        zones: Vec<ZoneId>,
        personals: Vec<UserId>,
    },
    Zonal {
        zone: ZoneId,
        roster: Vec<GuesthouseId>,
    },
    Guesthouse {
        guesthouse_id: GuesthouseId,
        zone: ZoneId,
        siblings: Vec<GuesthouseId>,
        silent: bool,
    },
    Personal {
        user_id: UserId,
    },
    Gateway {
        user_id: UserId,
        seed: u64,
    },
}

impl AgentSpec {
    pub fn agent_id(&self) -> AgentId {
        match self {
            AgentSpec::National { .. } => AgentId::national(),
            AgentSpec::Zonal { zone, .. } => AgentId::zonal(zone),
            AgentSpec::Guesthouse { guesthouse_id, .. } => AgentId::guesthouse(guesthouse_id),
            AgentSpec::Personal { user_id } => AgentId::personal(user_id),
            AgentSpec::Gateway { user_id, .. } => AgentId::gateway(user_id),
        }
    }
}

/// Registers an agent and constructs its logic. Registration happens only
/// once construction has succeeded.
pub fn spawn_agent(
    registry: &mut Registry,
    store: &Arc<Store>,
    spec: AgentSpec,
    key: AuthKey,
    config: ProtocolConfig,
) -> Result<Box<dyn Agent>, BuildError> {
    let id = spec.agent_id();
    let (agent, zone): (Box<dyn Agent>, Option<ZoneId>) = match spec {
        AgentSpec::National { zones, personals } => (
            Box::new(NationalAgent::new(
                zones,
                personals.iter().map(AgentId::personal),
                config,
            )),
            None,
        ),
        AgentSpec::Zonal { zone, roster } => (Box::new(ZonalAgent::new(zone, roster, config)), None),
        AgentSpec::Guesthouse {
            guesthouse_id,
            zone,
            siblings,
            silent,
        } => {
            let ga = GuesthouseAgent::new(guesthouse_id, &zone, siblings, Arc::clone(store), config)?;
            (Box::new(if silent { ga.silenced() } else { ga }), Some(zone))
        }
        AgentSpec::Personal { user_id } => (Box::new(PersonalAgent::new(user_id, config)), None),
        AgentSpec::Gateway { user_id, seed } => (Box::new(GatewayAgent::new(user_id, seed)), None),
    };
    registry.register(AgentRecord::new(id, key), zone)?;
    Ok(agent)
}

/// A registered, constructed cast ready to be attached to a transport.
pub struct Cast {
    pub router: Router,
    pub agents: Vec<Box<dyn Agent>>,
}

impl std::fmt::Debug for Cast {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cast")
            .field(
                "agents",
                &self.agents.iter().map(|a| a.id().to_string()).collect::<Vec<_>>(),
            )
            .finish()
    }
}

/// Builds the whole cast of a topology: one NA, a ZA per zone, a GA per
/// guesthouse, a PA per user and a gateway for text-channel users.
///
/// The store must already hold every guesthouse (see
/// [`Topology::seed_store`]). `key_for` supplies each agent's key.
pub fn build_cast(
    topology: &Topology,
    store: &Arc<Store>,
    config: ProtocolConfig,
    mut key_for: impl FnMut(&AgentId) -> AuthKey,
    gateway_seed: u64,
) -> Result<Cast, BuildError> {
    topology.validate()?;
    let rosters = topology.rosters();
    let mut specs = vec![AgentSpec::National {
        zones: topology.zones.clone(),
        personals: topology.users.iter().map(|u| u.user_id.clone()).collect(),
    }];
    for (zone, roster) in &rosters {
        specs.push(AgentSpec::Zonal {
            zone: zone.clone(),
            roster: roster.clone(),
        });
    }
    for g in &topology.guesthouses {
        let zone = g.profile.zone_id.clone();
        specs.push(AgentSpec::Guesthouse {
            guesthouse_id: g.profile.guesthouse_id.clone(),
            siblings: rosters[&zone].clone(),
            zone,
            silent: g.silent,
        });
    }
    for (i, u) in topology.users.iter().enumerate() {
        specs.push(AgentSpec::Personal {
            user_id: u.user_id.clone(),
        });
        if u.text_channel {
            specs.push(AgentSpec::Gateway {
                user_id: u.user_id.clone(),
                seed: gateway_seed.wrapping_add(i as u64),
            });
        }
    }
    let mut registry = Registry::new();
    let mut agents = Vec::with_capacity(specs.len());
    for spec in specs {
        let key = key_for(&spec.agent_id());
        agents.push(spawn_agent(&mut registry, store, spec, key, config)?);
    }
    Ok(Cast {
        router: Router::new(registry, PermissionMatrix::default()),
        agents,
    })
}

/// General information of a zone's guesthouses, from the store.
pub fn zone_roster(store: &Store, zone: &ZoneId) -> ZoneRoster {
    let guesthouses = store
        .guesthouse_ids()
        .into_iter()
        .filter_map(|id| store.profile(&id).ok())
        .filter(|p| &p.zone_id == zone)
        .map(|p| GuesthouseInfo {
            guesthouse_id: p.guesthouse_id,
            name: p.name,
            address: p.address,
            telephone: p.telephone,
        })
        .collect();
    ZoneRoster {
        zone_id: zone.clone(),
        guesthouses,
    }
}
