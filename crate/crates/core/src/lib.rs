//! Deterministic simulation of a decentralized data-exchange protocol.
//!
//! Data providers share TEE-attested data across `N` oracle nodes with a
//! `(t, N)` threshold scheme. A consumer buys `t` encrypted shares through a
//! contract that escrows payment until each node opens its key commitment,
//! with on-chain dispute handling for bad data or bad shares.

pub mod config;
pub mod crypto;
pub mod encoding;
pub mod harness;
pub mod ledger;
pub mod netsim;
pub mod participants;
pub mod tee_sim;
