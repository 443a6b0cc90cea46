//! Authorization gateway: policy gate, human review, privacy-preserving
//! execution, the HTTP API and the `aesp` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod demo;
pub mod pipeline;

pub use pipeline::{AuthorizeOutcome, AuthorizeStatus, Clock, Gateway, GatewayBuilder, GatewayError, ManualClock, SystemClock};
