//! Smart City Manager logic: the infrastructure database, behavior rules,
//! and the waypoint follower used by the SCM driver.

pub mod api;
pub mod database;
pub mod follower;
pub mod planner;

pub use database::{ElementRecord, LogEntry, ScmDatabase, VehicleRecord};
pub use follower::{FollowerOutput, FollowerParams};
pub use planner::{plan, BehaviorRule, RuleSet, Trigger};
