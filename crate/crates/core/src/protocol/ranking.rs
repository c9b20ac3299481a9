use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::domain::{Proposal, RequestId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankKey {
    #[default]
    TotalPrice,
    LegCount,
}

/// How a classification was ordered. Whatever the primary key, ties fall
/// back to price, then fewer legs, then the guesthouse-id sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criteria {
    #[serde(default)]
    pub primary: RankKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    pub request_id: RequestId,
    pub proposals: Vec<Proposal>,
    pub criteria: Criteria,
}

impl Classification {
    pub fn rank(request_id: RequestId, proposals: Vec<Proposal>, criteria: Criteria) -> Result<Self, ProtocolError> {
        if let Some(p) = proposals.iter().find(|p| p.request_id != request_id) {
            return Err(ProtocolError::MixedRequests(request_id, p.request_id.clone()));
        }
        Ok(Self {
            request_id,
            proposals: rank_proposals(proposals, criteria)?,
            criteria,
        })
    }

    pub fn get(&self, proposal_id: &str) -> Option<&Proposal> {
        self.proposals.iter().find(|p| p.proposal_id.as_str() == proposal_id)
    }
}

fn compare(a: &Proposal, b: &Proposal, criteria: Criteria) -> Ordering {
    let primary = match criteria.primary {
        RankKey::TotalPrice => a.total_price.cmp(&b.total_price),
        RankKey::LegCount => a.legs.len().cmp(&b.legs.len()),
    };
    primary
        .then(a.total_price.cmp(&b.total_price))
        .then(a.legs.len().cmp(&b.legs.len()))
        .then_with(|| a.guesthouse_ids().cmp(b.guesthouse_ids()))
}

/// Stable total order over one request's proposals.
pub fn rank_proposals(mut proposals: Vec<Proposal>, criteria: Criteria) -> Result<Vec<Proposal>, ProtocolError> {
    if let Some(first) = proposals.first() {
        let id = &first.request_id;
        if let Some(other) = proposals.iter().find(|p| &p.request_id != id) {
            return Err(ProtocolError::MixedRequests(id.clone(), other.request_id.clone()));
        }
    }
    proposals.sort_by(|a, b| compare(a, b, criteria));
    Ok(proposals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ByRoomType, GuesthouseId, Money, ProposalLeg, StayInterval};

    fn proposal(request: &str, price: u64, houses: &[&str]) -> Proposal {
        let n = houses.len() as u32;
        let start: chrono::NaiveDate = "2026-07-01".parse().unwrap();
        let legs = houses
            .iter()
            .enumerate()
            .map(|(i, g)| ProposalLeg {
                guesthouse_id: GuesthouseId::from(*g),
                interval: StayInterval::new(
                    crate::domain::add_days(start, i as u32),
                    crate::domain::add_days(start, i as u32 + 1),
                )
                .unwrap(),
                rooms: ByRoomType::new(1, 0, 0),
                leg_price: Money::new(price / u64::from(n) + if i == 0 { price % u64::from(n) } else { 0 }),
            })
            .collect();
        Proposal::from_legs(request.into(), legs).unwrap()
    }

    fn prices(v: &[Proposal]) -> Vec<u64> {
        v.iter().map(|p| p.total_price.minor_units()).collect()
    }

    #[test]
    fn price_ascending_with_stable_ties() {
        let input = vec![
            proposal("r", 700, &["g1"]),
            proposal("r", 650, &["g2"]),
            proposal("r", 700, &["g3"]),
        ];
        let out = rank_proposals(input, Criteria::default()).unwrap();
        assert_eq!(prices(&out), [650, 700, 700]);
        assert_eq!(out[1].guesthouse_chain(), vec![GuesthouseId::from("g1")]);
    }

    #[test]
    fn singleton_is_itself() {
        let p = proposal("r", 10, &["g1"]);
        assert_eq!(rank_proposals(vec![p.clone()], Criteria::default()).unwrap(), vec![p]);
    }

    #[test]
    fn fewer_legs_win_price_ties() {
        let out = rank_proposals(
            vec![proposal("r", 500, &["a", "b"]), proposal("r", 500, &["z"])],
            Criteria::default(),
        )
        .unwrap();
        assert_eq!(out[0].legs.len(), 1);
    }

    #[test]
    fn leg_count_primary() {
        let out = rank_proposals(
            vec![proposal("r", 100, &["a", "b"]), proposal("r", 900, &["z"])],
            Criteria {
                primary: RankKey::LegCount,
            },
        )
        .unwrap();
        assert_eq!(prices(&out), [900, 100]);
    }

    #[test]
    fn mixed_requests_are_rejected() {
        let err = rank_proposals(
            vec![proposal("r1", 1, &["a"]), proposal("r2", 1, &["b"])],
            Criteria::default(),
        );
        assert!(matches!(err, Err(ProtocolError::MixedRequests(..))));
    }
}
