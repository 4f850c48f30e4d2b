//! Event-driven ride-hailing simulator comparing solitary rides, provider-centered
//! pooling and customer-centered pooling.
//!
//! Monetary amounts, distances and factors are fixed-point integers (see [`units`]),
//! so every fare and cost comparison is exact.

pub mod config;
pub mod costshare;
pub mod domain;
pub mod harness;
pub mod io;
pub mod mechanisms;
pub mod netgraph;
pub mod pricing;
pub mod simengine;
pub mod units;
pub mod verify;

pub use domain::{CustomerId, Op, Request, Run, ScheduleEntry, VehicleId, VehicleState};
pub use mechanisms::Mechanism;
pub use netgraph::{make_grid, LocationId, PathResult, RoadNetwork};
pub use pricing::Tariff;
pub use simengine::{run_sim, SimConfig, SimResult};

pub use units::{Distance, Money, Ppm, Seconds, ValueOfTime};
