//! Performance models, relay-selection protocol and discrete-event simulator
//! for a body-area network in which every node carries both an IEEE 802.15.4
//! radio and a body-channel-communication (BCC) transceiver.

pub mod config;
pub mod error;
pub mod numerics;
pub mod rf_model;
pub mod bcc_model;
pub mod optimizer;
pub mod protocol;
pub mod sim;
pub mod io;
pub mod selfcheck;
pub mod cli;
