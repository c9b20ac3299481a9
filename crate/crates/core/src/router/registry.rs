use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AuthKey;
use crate::domain::{GuesthouseId, ZoneId};
use crate::protocol::{AgentId, Role};

#[derive(Debug, Clone)]
pub struct AgentRecord {
    pub agent_id: AgentId,
    pub key: AuthKey,
}

impl AgentRecord {
    pub fn new(agent_id: AgentId, key: AuthKey) -> Self {
        Self { agent_id, key }
    }
}

/// Public part of a registration, as written to trace headers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInfo {
    pub agent_id: AgentId,
    pub role: Role,
    #[serde(default)]
    pub zone: Option<ZoneId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("agent {0} is already registered")]
    Duplicate(AgentId),
    #[error("a national agent is already registered")]
    SecondNational,
    #[error("zone {0} already has a zonal agent")]
    SecondZonal(ZoneId),
    #[error("zone {0} has no zonal agent")]
    UnknownZone(ZoneId),
    #[error("{0} needs a zone")]
    MissingZone(AgentId),
}

#[derive(Debug, Clone)]
struct Entry {
    key: AuthKey,
    zone: Option<ZoneId>,
}

/// Registered agents, their verification keys and zone membership.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    agents: BTreeMap<AgentId, Entry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an agent. ZAs are keyed by their zone; a GA must name the zone
    /// of an already registered ZA.
    pub fn register(&mut self, record: AgentRecord, zone: Option<ZoneId>) -> Result<(), RegistryError> {
        let id = record.agent_id;
        if self.agents.contains_key(&id) {
            return Err(match id.role() {
                Role::Na => RegistryError::SecondNational,
                Role::Za => RegistryError::SecondZonal(ZoneId::from(id.name())),
                _ => RegistryError::Duplicate(id),
            });
        }
        let zone = match id.role() {
            Role::Za => Some(ZoneId::from(id.name())),
            Role::Ga => {
                let zone = zone.ok_or_else(|| RegistryError::MissingZone(id.clone()))?;
                if !self.agents.contains_key(&AgentId::zonal(&zone)) {
                    return Err(RegistryError::UnknownZone(zone));
                }
                Some(zone)
            }
            _ => None,
        };
        self.agents.insert(id, Entry { key: record.key, zone });
        Ok(())
    }

    pub fn contains(&self, id: &AgentId) -> bool {
        self.agents.contains_key(id)
    }

    pub fn key(&self, id: &AgentId) -> Option<&AuthKey> {
        self.agents.get(id).map(|e| &e.key)
    }

    pub fn zone_of(&self, id: &AgentId) -> Option<&ZoneId> {
        self.agents.get(id).and_then(|e| e.zone.as_ref())
    }

    pub fn zones(&self) -> BTreeSet<ZoneId> {
        self.agents
            .keys()
            .filter(|id| id.role() == Role::Za)
            .map(|id| ZoneId::from(id.name()))
            .collect()
    }

    /// Guesthouses registered in a zone.
    pub fn roster(&self, zone: &ZoneId) -> Vec<GuesthouseId> {
        self.agents
            .iter()
            .filter(|(id, e)| id.role() == Role::Ga && e.zone.as_ref() == Some(zone))
            .map(|(id, _)| GuesthouseId::from(id.name()))
            .collect()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentInfo> + '_ {
        self.agents.iter().map(|(id, e)| AgentInfo {
            agent_id: id.clone(),
            role: id.role(),
            zone: e.zone.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: AgentId) -> AgentRecord {
        let key = AuthKey::derive(0, &id.to_string());
        AgentRecord::new(id, key)
    }

    #[test]
    fn one_national_and_one_zonal_per_zone() {
        let mut r = Registry::new();
        r.register(rec(AgentId::national()), None).unwrap();
        assert_eq!(
            r.register(rec(AgentId::national()), None),
            Err(RegistryError::SecondNational)
        );
        r.register(rec(AgentId::zonal(&"z1".into())), None).unwrap();
        assert_eq!(
            r.register(rec(AgentId::zonal(&"z1".into())), None),
            Err(RegistryError::SecondZonal("z1".into()))
        );
    }

    #[test]
    fn guesthouse_needs_a_known_zone() {
        let mut r = Registry::new();
        assert_eq!(
            r.register(rec(AgentId::guesthouse(&"g1".into())), Some("z9".into())),
            Err(RegistryError::UnknownZone("z9".into()))
        );
        assert!(matches!(
            r.register(rec(AgentId::guesthouse(&"g1".into())), None),
            Err(RegistryError::MissingZone(_))
        ));
    }

    #[test]
    fn roster_lists_exactly_the_zone_members() {
        let mut r = Registry::new();
        r.register(rec(AgentId::zonal(&"z1".into())), None).unwrap();
        r.register(rec(AgentId::zonal(&"z2".into())), None).unwrap();
        for (g, z) in [("g1", "z1"), ("g2", "z1"), ("g3", "z1"), ("g4", "z2")] {
            r.register(rec(AgentId::guesthouse(&g.into())), Some(z.into())).unwrap();
        }
        let want: Vec<GuesthouseId> = vec!["g1".into(), "g2".into(), "g3".into()];
        assert_eq!(r.roster(&"z1".into()), want);
        assert_eq!(r.zones().len(), 2);
        assert_eq!(
            r.register(rec(AgentId::guesthouse(&"g1".into())), Some("z2".into())),
            Err(RegistryError::Duplicate(AgentId::guesthouse(&"g1".into())))
        );
    }
}
