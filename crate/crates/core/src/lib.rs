//! Two-party quantum gambling over classical channels.
//!
//! Alice (the casino) prepares a particle split across two boxes and sends
//! box B to Bob (the player). Bob either finds the particle and wins one
//! coin, or asks for box A and verifies the preparation; catching a deviating
//! preparation pays R coins, anything else loses his one-coin bet. With the
//! right splitting parameter Bob guarantees an expected gain of at least
//! delta(R) < 0 against any Alice, while honest Alice never expects to lose
//! -- and delta(R) -> 0 as R grows.
//!
//! A classical simulation cannot give either party physical custody of a
//! quantum state, so the joint state lives in a trusted referee (the
//! "physics oracle"); parties interact with it only through operation
//! requests and classical outcomes. This faithfully reproduces the protocol
//! logic and statistics, not physical unconditional security.
//!
//! Crate layout:
//! - [`quantum`]: complex state-vector simulator (prepare, split, measure,
//!   verify) -- the physics oracle's substrate.
//! - [`analysis`]: closed-form gain/security formulas plus an independent
//!   numeric minimax oracle for delta(R) and the optimal splitting parameter.
//! - [`protocol`]: Alice/Bob session state machines, settlement, the local
//!   game driver, and the cheating monitor.
//! - [`transport`]: wire codec, in-process and socket channels, and the
//!   referee endpoint.
//! - [`remote`]: networked session runners built on the socket transport.
//! - [`harness`]: seeded, parallel Monte Carlo experiment runner.

pub mod analysis;
pub mod harness;
pub mod protocol;
pub mod quantum;
pub mod remote;
pub mod transport;
