//! Library surface of the scenario runner: configuration, the use-case
//! chain, and report rendering.  The `qstt` binary is a thin wrapper.

pub mod report;
pub mod runner;
pub mod scenario;
