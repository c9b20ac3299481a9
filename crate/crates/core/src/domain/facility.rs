//! Closed guesthouse facility taxonomy.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// One of the twenty amenities a guesthouse may advertise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Facility {
    Parking,
    Restaurant,
    Bar,
    Tv,
    Phone,
    Internet,
    Heating,
    HotWater,
    PrivateBath,
    Kitchen,
    Laundry,
    Garden,
    Terrace,
    Fishing,
    HorseRiding,
    Hiking,
    SkiStorage,
    PetsAllowed,
    ChildFriendly,
    DisabledAccess,
}

impl Facility {
    pub const ALL: [Facility; 20] = [
        Facility::Parking,
        Facility::Restaurant,
        Facility::Bar,
        Facility::Tv,
        Facility::Phone,
        Facility::Internet,
        Facility::Heating,
        Facility::HotWater,
        Facility::PrivateBath,
        Facility::Kitchen,
        Facility::Laundry,
        Facility::Garden,
        Facility::Terrace,
        Facility::Fishing,
        Facility::HorseRiding,
        Facility::Hiking,
        Facility::SkiStorage,
        Facility::PetsAllowed,
        Facility::ChildFriendly,
        Facility::DisabledAccess,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Facility::Parking => "parking",
            Facility::Restaurant => "restaurant",
            Facility::Bar => "bar",
            Facility::Tv => "tv",
            Facility::Phone => "phone",
            Facility::Internet => "internet",
            Facility::Heating => "heating",
            Facility::HotWater => "hot-water",
            Facility::PrivateBath => "private-bath",
            Facility::Kitchen => "kitchen",
            Facility::Laundry => "laundry",
            Facility::Garden => "garden",
            Facility::Terrace => "terrace",
            Facility::Fishing => "fishing",
            Facility::HorseRiding => "horse-riding",
            Facility::Hiking => "hiking",
            Facility::SkiStorage => "ski-storage",
            Facility::PetsAllowed => "pets-allowed",
            Facility::ChildFriendly => "child-friendly",
            Facility::DisabledAccess => "disabled-access",
        }
    }
}

impl fmt::Display for Facility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Facility {
    type Err = DomainError;

    /// Tokens are case-sensitive; `Parking` is not a facility.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Facility::ALL
            .iter()
            .copied()
            .find(|f| f.token() == s)
            .ok_or_else(|| DomainError::UnknownFacility(s.to_owned()))
    }
}

pub type FacilitySet = BTreeSet<Facility>;

/// Parses a list of raw tokens, rejecting anything outside the taxonomy.
pub fn parse_facilities<'a, I>(tokens: I) -> Result<FacilitySet, DomainError>
where
    I: IntoIterator<Item = &'a str>,
{
    tokens.into_iter().map(str::parse).collect()
}

/// True iff every required facility is offered.
pub fn facilities_satisfied(have: &FacilitySet, need: &FacilitySet) -> bool {
    need.is_subset(have)
}

/// Token-level variant for callers holding raw strings (text channels, admin
/// forms). Any token outside the taxonomy is a validation error.
pub fn facilities_satisfied_tokens(have: &[&str], need: &[&str]) -> Result<bool, DomainError> {
    let have = parse_facilities(have.iter().copied())?;
    let need = parse_facilities(need.iter().copied())?;
    Ok(facilities_satisfied(&have, &need))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tokens: &[&str]) -> FacilitySet {
        parse_facilities(tokens.iter().copied()).unwrap()
    }

    #[test]
    fn taxonomy_tokens_are_unique_and_round_trip() {
        let tokens: BTreeSet<_> = Facility::ALL.iter().map(|f| f.token()).collect();
        assert_eq!(tokens.len(), 20);
        for f in Facility::ALL {
            assert_eq!(f.token().parse::<Facility>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.token()));
        }
    }

    #[test]
    fn empty_requirement_is_always_met() {
        assert!(facilities_satisfied(&set(&[]), &set(&[])));
    }

    #[test]
    fn subset_and_missing_cases() {
        assert!(facilities_satisfied(&set(&["parking", "tv"]), &set(&["parking"])));
        assert!(!facilities_satisfied(&set(&["parking"]), &set(&["parking", "garden"])));
    }

    #[test]
    fn unknown_or_miscased_token_is_a_validation_error() {
        assert!(matches!(
            parse_facilities(["parking", "sauna"]),
            Err(DomainError::UnknownFacility(t)) if t == "sauna"
        ));
        assert!("Parking".parse::<Facility>().is_err());
        assert!(facilities_satisfied_tokens(&["parking"], &["parking", "sauna"]).is_err());
        assert_eq!(
            facilities_satisfied_tokens(&["parking"], &["parking", "bar"]),
            Ok(false)
        );
    }

    /// Enumerates every (have, need) pair over a 5-element slice of the
    /// taxonomy and compares against element-by-element membership.
    #[test]
    fn subset_check_agrees_with_enumeration() {
        let universe = &Facility::ALL[..5];
        let subsets: Vec<FacilitySet> = (0u32..32)
            .map(|mask| {
                universe
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, f)| *f)
                    .collect()
            })
            .collect();
        for have in &subsets {
            for need in &subsets {
                let expected = need.iter().all(|f| have.contains(f));
                assert_eq!(facilities_satisfied(have, need), expected);
            }
        }
    }
}
