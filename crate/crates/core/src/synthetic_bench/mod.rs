//! Desk-scale scenarios with a planted quality function, and the suite of
//! experiments run on them.

mod scenario;
mod suite;

pub use scenario::{generate_scenario, token_frequencies, Oracles, PoolSizes, Scenario, ScenarioData};
pub use suite::{run_findings_suite, Finding, FindingsReport, Status, SuiteConfig, SuiteContext};

#[cfg(test)]
mod tests;
