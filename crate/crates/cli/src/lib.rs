//! Experiment runners and plotting behind the `wqed` command.

pub mod plot;
pub mod run;
