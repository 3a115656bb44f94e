//! Analysis toolkit for communication-link attacks on observer-based
//! consensus networks.
//!
//! An adversary that compromises every incoming communication link of a
//! subset of agents can feed those agents arbitrary data. This crate answers
//! the questions that scenario raises for a network of identical LTI agents
//! running an observer-based consensus protocol over a directed graph:
//!
//! * can the adversary steer the whole network ([`analysis::theorem1_check`]),
//!   or the non-attacked followers through the attacked agents
//!   ([`analysis::theorem2_check`])?
//! * how much leverage does each attacked agent contribute
//!   ([`sci`], security controllability indices), and what is the smallest
//!   attack set with full leverage ([`sci::min_attack_set`])?
//! * can the adversary excite zero dynamics without visible output
//!   ([`zerodyn`])?
//! * what do the attacked trajectories look like ([`sim`])?
//!
//! Scenario files (JSON) drive every entry point; see [`scenario`] and the
//! `masec` command-line binary.

pub mod analysis;
pub mod error;
pub mod model;
pub mod numerics;
pub mod report;
pub mod scenario;
pub mod sci;
pub mod sim;
pub mod topology;
pub mod zerodyn;

pub use error::{Error, Result};
