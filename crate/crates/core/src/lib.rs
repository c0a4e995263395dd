//! Lockstep co-simulation of road traffic, V2X radio and an ego vehicle.
//!
//! The [`coordinator`] owns the traffic [`World`] and advances it only when
//! every connected client has voted for the next step over the [`wire`]
//! protocol. The [`radio`] and [`ego`] kernels are ordinary clients of that
//! protocol.

pub mod coordinator;
pub mod ego;
pub mod geometry;
pub mod radio;
pub mod scenario;
pub mod seed;
pub mod time;
pub mod traffic;
pub mod wire;

pub use geometry::{Polygon, Vec2};
pub use scenario::{load_sumocfg, ResultStore, RunConfig, ScenarioBundle, ScenarioError};
pub use seed::SeedTree;
pub use time::{Seconds, SimClock};
pub use traffic::{Owner, RoadNetwork, VehicleSnapshot, World};
pub use wire::{Command, TypedValue, WireError};
