//! Deterministic, data-parallel microscopic traffic simulation.
//!
//! Each step runs a prepare phase (snapshot copy, index rebuild, signal
//! replication) followed by an update phase (car following, lane changing,
//! junction and AOI processing). Sensing reads only the snapshot, so the
//! result does not depend on the number of worker threads.

pub mod ids;
pub mod netmodel;
pub mod routing;
pub mod index;
pub mod models;
pub mod engine;
pub mod bench;
