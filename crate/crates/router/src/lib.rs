//! Ticket intake, classification and routing service.
//!
//! Tickets move through a four-state machine: `received` when accepted
//! into the bounded queue, `classified` once a worker has labeled them,
//! then `routed` into exactly one per-label sink file, or `failed` with a
//! reason. Every transition is appended to an NDJSON event log before it
//! takes effect, so restarting after a crash replays the log, truncates
//! at most one torn tail line, and resumes interrupted tickets without
//! losing or duplicating a sink entry.

pub mod config;
pub mod http;
pub mod log;
pub mod record;
pub mod service;
pub mod sink;

pub use config::RouterConfig;
pub use record::{TicketRecord, TicketState};
pub use service::{
    MetricsSnapshot, RecoveryReport, RouterService, ServiceError, SubmitError, SubmitOutcome,
};
