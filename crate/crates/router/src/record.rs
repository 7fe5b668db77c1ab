//! Ticket lifecycle records and the forward-only state machine.

use serde::{Deserialize, Serialize};
use triage_core::corpus::{Label, NUM_CLASSES};

/// Seconds since the Unix epoch, millisecond precision.
pub fn now_ts() -> f64 {
    let since = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    (since.as_secs_f64() * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketState {
    Received,
    Classified,
    Routed,
    Failed,
}

impl TicketState {
    pub fn name(self) -> &'static str {
        match self {
            TicketState::Received => "received",
            TicketState::Classified => "classified",
            TicketState::Routed => "routed",
            TicketState::Failed => "failed",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid transition for ticket {ticket_id}: {from:?} -> {to:?}")]
pub struct TransitionError {
    pub ticket_id: String,
    pub from: TicketState,
    pub to: TicketState,
}

/// One ticket's full lifecycle. States only move forward:
/// received -> classified -> routed, with failed reachable from any
/// non-terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketRecord {
    pub ticket_id: String,
    pub subject: String,
    pub body: String,
    pub state: TicketState,
    pub label: Option<Label>,
    pub confidence: Option<[f64; NUM_CLASSES]>,
    pub model_fingerprint: Option<String>,
    pub failure_reason: Option<String>,
    pub received_at: f64,
    pub classified_at: Option<f64>,
    pub routed_at: Option<f64>,
    pub failed_at: Option<f64>,
}

impl TicketRecord {
    pub fn received(ticket_id: String, subject: String, body: String, ts: f64) -> Self {
        TicketRecord {
            ticket_id,
            subject,
            body,
            state: TicketState::Received,
            label: None,
            confidence: None,
            model_fingerprint: None,
            failure_reason: None,
            received_at: ts,
            classified_at: None,
            routed_at: None,
            failed_at: None,
        }
    }

    fn guard(&self, from: TicketState, to: TicketState) -> Result<(), TransitionError> {
        if self.state == from {
            Ok(())
        } else {
            Err(TransitionError {
                ticket_id: self.ticket_id.clone(),
                from: self.state,
                to,
            })
        }
    }

    pub fn mark_classified(
        &mut self,
        label: Label,
        confidence: [f64; NUM_CLASSES],
        fingerprint: &str,
        ts: f64,
    ) -> Result<(), TransitionError> {
        self.guard(TicketState::Received, TicketState::Classified)?;
        self.state = TicketState::Classified;
        self.label = Some(label);
        self.confidence = Some(confidence);
        self.model_fingerprint = Some(fingerprint.to_string());
        self.classified_at = Some(ts);
        Ok(())
    }

    pub fn mark_routed(&mut self, ts: f64) -> Result<(), TransitionError> {
        self.guard(TicketState::Classified, TicketState::Routed)?;
        self.state = TicketState::Routed;
        self.routed_at = Some(ts);
        Ok(())
    }

    pub fn mark_failed(&mut self, reason: &str, ts: f64) -> Result<(), TransitionError> {
        if matches!(self.state, TicketState::Routed | TicketState::Failed) {
            return Err(TransitionError {
                ticket_id: self.ticket_id.clone(),
                from: self.state,
                to: TicketState::Failed,
            });
        }
        self.state = TicketState::Failed;
        self.failure_reason = Some(reason.to_string());
        self.failed_at = Some(ts);
        Ok(())
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, TicketState::Routed | TicketState::Failed)
    }
}
