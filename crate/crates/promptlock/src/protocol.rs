//! Protocol event log shared by the bridge and escrow services.
//!
//! The keyed-prompt flow is a fixed ten-step sequence; each service records
//! the steps it performs so an end-to-end run can be audited in order:
//!
//!  1. user buys a listing
//!  2. user receives envelope and bearer token
//!  3. user submits envelope and token to the bridge (or intermediary)
//!  4. the bridge requests the key from the escrow
//!  5. the escrow validates the token
//!  6. the escrow releases the key
//!  7. the escrow registers the state change and rotates the key
//!  8. the bridge unseals the envelope
//!  9. the backend assimilates the task and forgets it
//! 10. the artifact is returned to the user

use std::sync::Mutex;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ProtocolEvent {
    ListingPurchased { prompt_id: String, token_id: String },
    EnvelopeAndTokenIssued { token_id: String },
    EnvelopeSubmitted { prompt_id: String },
    KeyRequested { token_id: String },
    TokenValidated { token_id: String },
    KeyReleased { token_id: String, key_version: u64 },
    StateChangeRegistered { token_id: String, new_key_version: u64 },
    EnvelopeUnsealed { prompt_id: String },
    AssimilatedAndForgotten { prompt_id: String },
    ArtifactReturned { prompt_id: String },
}

impl ProtocolEvent {
    /// Position of this event in the ten-step sequence.
    pub fn route_number(&self) -> u8 {
        match self {
            ProtocolEvent::ListingPurchased { .. } => 1,
            ProtocolEvent::EnvelopeAndTokenIssued { .. } => 2,
            ProtocolEvent::EnvelopeSubmitted { .. } => 3,
            ProtocolEvent::KeyRequested { .. } => 4,
            ProtocolEvent::TokenValidated { .. } => 5,
            ProtocolEvent::KeyReleased { .. } => 6,
            ProtocolEvent::StateChangeRegistered { .. } => 7,
            ProtocolEvent::EnvelopeUnsealed { .. } => 8,
            ProtocolEvent::AssimilatedAndForgotten { .. } => 9,
            ProtocolEvent::ArtifactReturned { .. } => 10,
        }
    }
}

/// Append-only in-memory event log. Services expose `take_events` for
/// audits and tests; draining does not affect service state.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<ProtocolEvent>>,
}

impl EventLog {
    pub fn record(&self, event: ProtocolEvent) {
        self.events.lock().unwrap().push(event);
    }

    pub fn take(&self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut *self.events.lock().unwrap())
    }

    pub fn snapshot(&self) -> Vec<ProtocolEvent> {
        self.events.lock().unwrap().clone()
    }
}
