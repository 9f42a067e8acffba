//! Joint EV charging scheduling and hydrogen dispatch for a coupled network
//! of fast-charging stations and renewable hydrogen producers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bilevel;
pub mod cli;
pub mod dispatch;
pub mod error;
pub mod ev_cost;
pub mod horizon;
pub mod hungarian;
pub mod lp;
pub mod matching;
pub mod network;
pub mod oracle;
pub mod problem;
pub mod renewables;
pub mod report;
pub mod scenario;
pub mod station;
pub mod strategy;
pub mod textfmt;

pub use error::{Error, Result};
