//! Persistent triage ranking and the curator HTTP API.

pub mod api;
pub mod store;

pub use api::{router, serve};
pub use store::{RankedCase, Resolution, ResolutionStats, Status, Store, StoreError};
