//! Scenario runner behind the `kerrcomb` binary.

pub mod report;
pub mod run;
pub mod scenario;
