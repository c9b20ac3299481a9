//! Deterministic scenario runs on the simulated transport, and the trace
//! property checker.

mod check;
mod random;
mod runner;
mod scenario;

pub use check::{check_trace, PropertyReport, PropertyResult, PROPERTIES};
pub use random::{random_scenario, WINDOW};
pub use runner::{run, Outcome, RankedProposal, RequestReport, RunError, RunOptions, RunOutput, RunReport};
pub use scenario::{Issue, Scenario, ScenarioError, ScenarioEvent, SCENARIO_VERSION};

/// Scenario files shipped with the crate.
const FILES: [(&str, &str); 4] = [
    ("figure4", include_str!("../../scenarios/figure4.scenario")),
    ("bypass", include_str!("../../scenarios/bypass.scenario")),
    ("timeout", include_str!("../../scenarios/timeout.scenario")),
    ("race-lastroom", include_str!("../../scenarios/race-lastroom.scenario")),
];

/// Names of the bundled file scenarios. `random-<N>` is also accepted by
/// [`bundled`].
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(name, _)| *name)
}

/// A bundled scenario by name. `random-<N>` generates `N` requests from
/// seed 42; pass a seed to [`random_scenario`] directly for others.
pub fn bundled(name: &str) -> Option<Scenario> {
    if let Some(n) = name.strip_prefix("random-") {
        return n.parse().ok().map(|n| random_scenario(42, n));
    }
    let (_, text) = FILES.iter().find(|(n, _)| *n == name)?;
    Some(Scenario::parse(text).expect("bundled scenarios are valid"))
}

#[cfg(test)]
mod tests;
