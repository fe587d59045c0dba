//! Tracking people on topological maps.
//!
//! * [`topology`]: graph maps, JSON documents and a polytunnel generator.
//! * [`sensors`]: GNSS, leg-detector and RFID readings as node likelihoods.
//! * [`belief`]: the topological particle filter, one instance per person.
//! * [`planner`]: Next-Best-Sense pose selection via a Choquet integral.
//! * [`sim`]: a deterministic farm simulation and experiment runner.

pub mod belief;
pub mod geometry;
pub mod planner;
pub mod sensors;
pub mod sim;
pub mod topology;

pub use geometry::Vec2;
