//! Key-escrow marketplace: prompt listings, single-use bearer tokens, key
//! release with state-change registration, and synchronous key rotation.
//!
//! A listing is sold ad infinitum; every purchase issues a fresh bearer
//! token bound to the listing's current key version. Redeeming a token
//! releases the content key exactly once, appends to the purchase ledger,
//! and rotates the stored envelope to a fresh key inside the same
//! transaction, so the released key never matches the stored ciphertext
//! again. A still-issued token that was overtaken by a rotation is
//! exchanged free of charge for a replacement bound to the current version.

mod http;

pub use http::{escrow_router, AddListingRequest, EscrowHttpClient, PurchaseResponse, TokenStatus};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprint;
use crate::mockllm::{self, MockProvider, Provider, ProviderError};
use crate::protocol::{EventLog, ProtocolEvent};
use crate::sealer::{self, ContentKey, SealerError, TaskPrompt};
use crate::store::{RecordKind, Store, StoreError};

/// Default bearer-token lifetime.
pub const DEFAULT_TOKEN_TTL_DAYS: i64 = 30;

#[derive(Debug, Error)]
pub enum EscrowError {
    #[error("unknown prompt")]
    UnknownPrompt,
    #[error("description shares a 5-word window with the task body")]
    DescriptionLeaks,
    #[error("unknown token")]
    TokenUnknown,
    #[error("token already redeemed")]
    TokenAlreadyRedeemed,
    #[error("token expired")]
    TokenExpired,
    #[error("token revoked")]
    TokenRevoked,
    #[error("token outlived a key rotation; a replacement has been issued")]
    KeyVersionStale { replacement: BearerToken },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("stored envelope failed authentication: store corrupt")]
    StoreCorrupt,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sealer(#[from] SealerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenState {
    Issued,
    Redeemed,
    Expired,
    Revoked,
}

/// Single-use proof of purchase. Allowed transitions: issued → redeemed,
/// issued → expired, issued → revoked; nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BearerToken {
    pub bound_key_version: u64,
    pub expires_at: DateTime<Utc>,
    pub issued_at: DateTime<Utc>,
    pub prompt_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub redeemed_at: Option<DateTime<Utc>>,
    pub state: TokenState,
    pub token_id: String,
}

/// Per-listing escrow state. The armored envelope always decrypts under
/// `current_key` and under no prior key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptListing {
    pub created_at: DateTime<Utc>,
    pub current_key: ContentKey,
    pub description: String,
    pub key_version: u64,
    pub prompt_id: String,
    pub sealed_armored: String,
}

/// Pre-purchase view of a listing; never carries key material.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ListingSummary {
    pub created_at: DateTime<Utc>,
    pub description: String,
    pub key_version: u64,
    pub prompt_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub at: DateTime<Utc>,
    pub outcome: String,
    pub prompt_id: String,
    pub token_id: String,
}

/// Key release interface the bridge uses in the keyed-prompt flow. The
/// in-process service and the HTTP client are interchangeable.
pub trait KeyRelease: Send + Sync {
    fn redeem_key(&self, token_id: &str) -> Result<ContentKey, EscrowError>;
}

pub struct EscrowService {
    store: Arc<Store>,
    provider: Arc<dyn Provider>,
    locator: String,
    token_ttl: Duration,
    listing_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    events: Arc<EventLog>,
}

fn random_token_id() -> String {
    let mut id = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut id);
    URL_SAFE_NO_PAD.encode(id)
}

impl EscrowService {
    pub fn new(store: Arc<Store>, locator: impl Into<String>) -> Self {
        EscrowService {
            store,
            provider: Arc::new(MockProvider),
            locator: locator.into(),
            token_ttl: Duration::days(DEFAULT_TOKEN_TTL_DAYS),
            listing_locks: Mutex::new(HashMap::new()),
            events: Arc::new(EventLog::default()),
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.provider = provider;
        self
    }

    pub fn with_token_ttl(mut self, ttl: Duration) -> Self {
        self.token_ttl = ttl;
        self
    }

    pub fn with_events(mut self, events: Arc<EventLog>) -> Self {
        self.events = events;
        self
    }

    pub fn events(&self) -> &Arc<EventLog> {
        &self.events
    }

    pub fn locator(&self) -> &str {
        &self.locator
    }

    fn lock_for(&self, prompt_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.listing_locks.lock().unwrap();
        locks
            .entry(prompt_id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    }

    fn load_listing(&self, prompt_id: &str) -> Result<(u64, PromptListing), EscrowError> {
        let record = self
            .store
            .get(RecordKind::Listing, prompt_id)
            .ok_or(EscrowError::UnknownPrompt)?;
        let listing = serde_json::from_str(&record.payload)
            .map_err(|_| EscrowError::Store(StoreError::Corrupt("bad listing payload".into())))?;
        Ok((record.version, listing))
    }

    fn load_token(&self, token_id: &str) -> Result<(u64, BearerToken), EscrowError> {
        let record = self
            .store
            .get(RecordKind::Token, token_id)
            .ok_or(EscrowError::TokenUnknown)?;
        let token = serde_json::from_str(&record.payload)
            .map_err(|_| EscrowError::Store(StoreError::Corrupt("bad token payload".into())))?;
        Ok((record.version, token))
    }

    fn save_token(&self, store_version: u64, token: &BearerToken) -> Result<u64, EscrowError> {
        let payload = serde_json::to_string(token).expect("token serialization cannot fail");
        Ok(self
            .store
            .compare_and_swap(RecordKind::Token, &token.token_id, store_version, &payload)?)
    }

    fn ledger(&self, token: &BearerToken, outcome: &str) -> Result<(), EscrowError> {
        let entry = LedgerEntry {
            at: Utc::now(),
            outcome: outcome.to_string(),
            prompt_id: token.prompt_id.clone(),
            token_id: token.token_id.clone(),
        };
        self.store
            .append_ledger(&serde_json::to_string(&entry).expect("ledger entry serializes"))?;
        Ok(())
    }

    /// Create a listing: fresh key, sealed envelope pointing back at this
    /// escrow, key version 1. The public description must not leak the body.
    pub fn register_listing(
        &self,
        task: &TaskPrompt,
        description: &str,
        preamble: &str,
    ) -> Result<ListingSummary, EscrowError> {
        if Fingerprint::of(task.body()).matches(description) {
            return Err(EscrowError::DescriptionLeaks);
        }
        let key = ContentKey::generate();
        let sealed = sealer::seal(task, &key, preamble, Some(&self.locator))?;
        let listing = PromptListing {
            created_at: Utc::now(),
            current_key: key,
            description: description.to_string(),
            key_version: 1,
            prompt_id: sealed.header.prompt_id.clone(),
            sealed_armored: sealed.to_armored(),
        };
        let payload = serde_json::to_string(&listing).expect("listing serialization cannot fail");
        self.store
            .compare_and_swap(RecordKind::Listing, &listing.prompt_id, 0, &payload)?;
        Ok(summary_of(&listing))
    }

    pub fn listings(&self) -> Vec<ListingSummary> {
        let mut out: Vec<ListingSummary> = self
            .store
            .list(RecordKind::Listing)
            .iter()
            .filter_map(|r| serde_json::from_str::<PromptListing>(&r.payload).ok())
            .map(|l| summary_of(&l))
            .collect();
        out.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
        out
    }

    /// Sell one copy: the current armored envelope plus a fresh single-use
    /// token. Purchases are unlimited.
    pub fn purchase(&self, prompt_id: &str) -> Result<(String, BearerToken), EscrowError> {
        let (_, listing) = self.load_listing(prompt_id)?;
        let now = Utc::now();
        let token = BearerToken {
            bound_key_version: listing.key_version,
            expires_at: now + self.token_ttl,
            issued_at: now,
            prompt_id: prompt_id.to_string(),
            redeemed_at: None,
            state: TokenState::Issued,
            token_id: random_token_id(),
        };
        self.save_token(0, &token)?;
        self.ledger(&token, "issued")?;
        self.events.record(ProtocolEvent::ListingPurchased {
            prompt_id: prompt_id.to_string(),
            token_id: token.token_id.clone(),
        });
        self.events.record(ProtocolEvent::EnvelopeAndTokenIssued {
            token_id: token.token_id.clone(),
        });
        Ok((listing.sealed_armored, token))
    }

    /// Check an issued token against the clock and the listing's current
    /// key version, transitioning it to expired or replacing it when stale.
    /// Returns the token's store version when it is redeemable.
    fn validate_issued(
        &self,
        store_version: u64,
        token: &BearerToken,
        listing: &PromptListing,
    ) -> Result<u64, EscrowError> {
        match token.state {
            TokenState::Issued => {}
            TokenState::Redeemed => return Err(EscrowError::TokenAlreadyRedeemed),
            TokenState::Expired => return Err(EscrowError::TokenExpired),
            TokenState::Revoked => return Err(EscrowError::TokenRevoked),
        }
        if Utc::now() > token.expires_at {
            let mut expired = token.clone();
            expired.state = TokenState::Expired;
            self.save_token(store_version, &expired)?;
            self.ledger(&expired, "expired")?;
            return Err(EscrowError::TokenExpired);
        }
        if token.bound_key_version != listing.key_version {
            // genuine purchase overtaken by a rotation: exchange it
            let now = Utc::now();
            let replacement = BearerToken {
                bound_key_version: listing.key_version,
                expires_at: now + self.token_ttl,
                issued_at: now,
                prompt_id: token.prompt_id.clone(),
                redeemed_at: None,
                state: TokenState::Issued,
                token_id: random_token_id(),
            };
            self.save_token(0, &replacement)?;
            self.ledger(&replacement, "reissued")?;
            let mut superseded = token.clone();
            superseded.state = TokenState::Revoked;
            self.save_token(store_version, &superseded)?;
            self.ledger(&superseded, "superseded")?;
            return Err(EscrowError::KeyVersionStale { replacement });
        }
        Ok(store_version)
    }

    /// Redemption variant A: release the key to the caller, register the
    /// state change, and rotate. The released key no longer matches the
    /// stored envelope by the time this returns.
    pub fn redeem_key(&self, token_id: &str) -> Result<ContentKey, EscrowError> {
        let (_, token) = self.load_token(token_id)?;
        let lock = self.lock_for(&token.prompt_id);
        let _guard = lock.lock().unwrap();

        // re-read under the listing lock; state may have moved
        let (store_version, token) = self.load_token(token_id)?;
        let (_, listing) = self.load_listing(&token.prompt_id)?;
        let store_version = self.validate_issued(store_version, &token, &listing)?;
        self.events.record(ProtocolEvent::TokenValidated {
            token_id: token_id.to_string(),
        });

        let mut redeemed = token.clone();
        redeemed.state = TokenState::Redeemed;
        redeemed.redeemed_at = Some(Utc::now());
        self.save_token(store_version, &redeemed)?;
        self.ledger(&redeemed, "redeemed")?;

        let key = listing.current_key.clone();
        self.events.record(ProtocolEvent::KeyReleased {
            token_id: token_id.to_string(),
            key_version: listing.key_version,
        });
        let new_version = self.rotate_locked(&token.prompt_id)?;
        self.events.record(ProtocolEvent::StateChangeRegistered {
            token_id: token_id.to_string(),
            new_key_version: new_version,
        });
        Ok(key)
    }

    /// Redemption variant B: the intermediary decrypts internally, drives
    /// assimilate-then-forget, queries the backend once, and only commits
    /// the token (and rotates the key) after the backend succeeds, so an
    /// outage leaves the token retryable. Plaintext never leaves this call.
    pub fn redeem_full(&self, token_id: &str, request: &str) -> Result<String, EscrowError> {
        let (_, token) = self.load_token(token_id)?;
        let lock = self.lock_for(&token.prompt_id);
        let _guard = lock.lock().unwrap();

        let (store_version, token) = self.load_token(token_id)?;
        let (_, listing) = self.load_listing(&token.prompt_id)?;
        let store_version = self.validate_issued(store_version, &token, &listing)?;

        let envelope = sealer::parse_sealed(&listing.sealed_armored)?;
        let task = sealer::unseal(&envelope, &listing.current_key)
            .map_err(|_| EscrowError::StoreCorrupt)?;
        let ctx = mockllm::forget(&mockllm::assimilate(&task));
        let artifact = self.provider.complete(&ctx, request)?;

        let mut redeemed = token.clone();
        redeemed.state = TokenState::Redeemed;
        redeemed.redeemed_at = Some(Utc::now());
        self.save_token(store_version, &redeemed)?;
        self.ledger(&redeemed, "redeemed")?;
        let new_version = self.rotate_locked(&token.prompt_id)?;

        // the transaction's protocol steps, recorded in route order
        for event in [
            ProtocolEvent::EnvelopeSubmitted {
                prompt_id: token.prompt_id.clone(),
            },
            ProtocolEvent::KeyRequested {
                token_id: token_id.to_string(),
            },
            ProtocolEvent::TokenValidated {
                token_id: token_id.to_string(),
            },
            ProtocolEvent::KeyReleased {
                token_id: token_id.to_string(),
                key_version: listing.key_version,
            },
            ProtocolEvent::StateChangeRegistered {
                token_id: token_id.to_string(),
                new_key_version: new_version,
            },
            ProtocolEvent::EnvelopeUnsealed {
                prompt_id: token.prompt_id.clone(),
            },
            ProtocolEvent::AssimilatedAndForgotten {
                prompt_id: token.prompt_id.clone(),
            },
            ProtocolEvent::ArtifactReturned {
                prompt_id: token.prompt_id.clone(),
            },
        ] {
            self.events.record(event);
        }
        Ok(artifact)
    }

    /// Re-encrypt the stored envelope under a fresh key and bump the
    /// version. Prior keys decrypt nothing currently stored.
    pub fn rotate_key(&self, prompt_id: &str) -> Result<u64, EscrowError> {
        let lock = self.lock_for(prompt_id);
        let _guard = lock.lock().unwrap();
        self.rotate_locked(prompt_id)
    }

    fn rotate_locked(&self, prompt_id: &str) -> Result<u64, EscrowError> {
        let (store_version, listing) = self.load_listing(prompt_id)?;
        let envelope = sealer::parse_sealed(&listing.sealed_armored)?;
        let task = sealer::unseal(&envelope, &listing.current_key)
            .map_err(|_| EscrowError::StoreCorrupt)?;
        let new_key = ContentKey::generate();
        let resealed = sealer::seal_with_prompt_id(
            &task,
            &new_key,
            &envelope.preamble,
            Some(&self.locator),
            prompt_id,
        )?;
        let rotated = PromptListing {
            current_key: new_key,
            key_version: listing.key_version + 1,
            sealed_armored: resealed.to_armored(),
            ..listing
        };
        let payload = serde_json::to_string(&rotated).expect("listing serialization cannot fail");
        self.store
            .compare_and_swap(RecordKind::Listing, prompt_id, store_version, &payload)?;
        Ok(rotated.key_version)
    }

    /// Administrative revocation of an issued token.
    pub fn revoke_token(&self, token_id: &str) -> Result<(), EscrowError> {
        let (_, token) = self.load_token(token_id)?;
        let lock = self.lock_for(&token.prompt_id);
        let _guard = lock.lock().unwrap();
        let (store_version, token) = self.load_token(token_id)?;
        match token.state {
            TokenState::Issued => {}
            TokenState::Redeemed => return Err(EscrowError::TokenAlreadyRedeemed),
            TokenState::Expired => return Err(EscrowError::TokenExpired),
            TokenState::Revoked => return Err(EscrowError::TokenRevoked),
        }
        let mut revoked = token.clone();
        revoked.state = TokenState::Revoked;
        self.save_token(store_version, &revoked)?;
        self.ledger(&revoked, "revoked")?;
        Ok(())
    }

    /// Read-only token status.
    pub fn introspect_token(&self, token_id: &str) -> Result<BearerToken, EscrowError> {
        Ok(self.load_token(token_id)?.1)
    }

    pub fn ledger_entries(&self) -> Vec<LedgerEntry> {
        self.store
            .ledger_entries()
            .iter()
            .filter_map(|p| serde_json::from_str(p).ok())
            .collect()
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Current listing state, internal to the service and its tests; never
    /// exposed over the API.
    pub fn listing_internal(&self, prompt_id: &str) -> Result<PromptListing, EscrowError> {
        Ok(self.load_listing(prompt_id)?.1)
    }
}

impl KeyRelease for EscrowService {
    fn redeem_key(&self, token_id: &str) -> Result<ContentKey, EscrowError> {
        EscrowService::redeem_key(self, token_id)
    }
}

fn summary_of(listing: &PromptListing) -> ListingSummary {
    ListingSummary {
        created_at: listing.created_at,
        description: listing.description.clone(),
        key_version: listing.key_version,
        prompt_id: listing.prompt_id.clone(),
    }
}
