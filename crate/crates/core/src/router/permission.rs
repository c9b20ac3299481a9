use std::collections::BTreeSet;

use crate::protocol::Role;

/// Which roles may address which. Symmetric; everything not listed is
/// forbidden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionMatrix {
    allowed: BTreeSet<(Role, Role)>,
}

impl Default for PermissionMatrix {
    fn default() -> Self {
        use Role::*;
        Self::from_pairs([(Pa, Na), (Pa, Za), (Na, Za), (Za, Ga), (Ga, Ga), (Cma, Pa)])
    }
}

impl PermissionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Role, Role)>) -> Self {
        let mut allowed = BTreeSet::new();
        for (a, b) in pairs {
            allowed.insert((a, b));
            allowed.insert((b, a));
        }
        Self { allowed }
    }

    pub fn allows(&self, sender: Role, receiver: Role) -> bool {
        self.allowed.contains(&(sender, receiver))
    }
}
