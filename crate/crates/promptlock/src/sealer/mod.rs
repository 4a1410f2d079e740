//! Sealed-prompt envelopes, the task-prompt grammar, and the user-key codec.
//!
//! A sealed prompt is a single printable-ASCII armor carrying a
//! human-legible preamble and an XChaCha20-Poly1305-encrypted core. The
//! preamble and header are bound into the AEAD associated data, so any
//! mutation of either fails authentication. The user-key codec fuses a
//! buyer identity with the content key under an issuer HMAC tag.

mod armor;
mod task;
mod userkey;

pub use armor::{parse_sealed, serialize_sealed, ARMOR_BEGIN, ARMOR_CORE, ARMOR_END};
pub use task::{parse_directives, Directive, TaskPrompt, FORGET_EPILOGUE};
pub use userkey::{decode_user_key, encode_user_key, UserKey, USER_KEY_PREFIX};

use std::sync::atomic::{AtomicU64, Ordering};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::XChaCha20Poly1305;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KEY_ID_LEN: usize = 16;
pub const KEY_BYTES_LEN: usize = 32;
pub const NONCE_LEN: usize = 24;
pub const PROMPT_ID_LEN: usize = 16;
pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SealerError {
    #[error("preamble must be printable ASCII and must not contain armor markers")]
    InvalidPreamble,
    #[error("user id must be 1-64 printable ASCII characters")]
    InvalidUserId,
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported envelope version {0}")]
    UnsupportedVersion(u32),
    #[error("authentication failure")]
    AuthFailure,
    #[error("user key invalid")]
    KeyInvalid,
}

/// Symmetric content key under which a task prompt's core is encrypted.
#[derive(Clone, PartialEq, Eq)]
pub struct ContentKey {
    key_id: [u8; KEY_ID_LEN],
    key_bytes: [u8; KEY_BYTES_LEN],
}

impl ContentKey {
    /// Fresh random key. The 16-byte random id makes collisions negligible.
    pub fn generate() -> Self {
        let mut key_id = [0u8; KEY_ID_LEN];
        let mut key_bytes = [0u8; KEY_BYTES_LEN];
        rand::thread_rng().fill_bytes(&mut key_id);
        rand::thread_rng().fill_bytes(&mut key_bytes);
        ContentKey { key_id, key_bytes }
    }

    pub fn from_parts(key_id: [u8; KEY_ID_LEN], key_bytes: [u8; KEY_BYTES_LEN]) -> Self {
        ContentKey { key_id, key_bytes }
    }

    pub fn key_id(&self) -> &[u8; KEY_ID_LEN] {
        &self.key_id
    }

    pub fn key_id_b64(&self) -> String {
        URL_SAFE_NO_PAD.encode(self.key_id)
    }

    pub fn key_bytes(&self) -> &[u8; KEY_BYTES_LEN] {
        &self.key_bytes
    }
}

impl std::fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // key material stays out of debug output
        f.debug_struct("ContentKey")
            .field("key_id", &self.key_id_b64())
            .finish()
    }
}

impl Serialize for ContentKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            key_bytes: &'a str,
            key_id: &'a str,
        }
        let key_bytes = URL_SAFE_NO_PAD.encode(self.key_bytes);
        let key_id = self.key_id_b64();
        Wire::serialize(
            &Wire {
                key_bytes: &key_bytes,
                key_id: &key_id,
            },
            s,
        )
    }
}

impl<'de> Deserialize<'de> for ContentKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            key_bytes: String,
            key_id: String,
        }
        let w = Wire::deserialize(d)?;
        let key_id = URL_SAFE_NO_PAD
            .decode(&w.key_id)
            .ok()
            .and_then(|v| <[u8; KEY_ID_LEN]>::try_from(v).ok())
            .ok_or_else(|| serde::de::Error::custom("bad key_id"))?;
        let key_bytes = URL_SAFE_NO_PAD
            .decode(&w.key_bytes)
            .ok()
            .and_then(|v| <[u8; KEY_BYTES_LEN]>::try_from(v).ok())
            .ok_or_else(|| serde::de::Error::custom("bad key_bytes"))?;
        Ok(ContentKey { key_id, key_bytes })
    }
}

/// Clear header of a sealed prompt. Fields are declared alphabetically so
/// the serde_json output is the canonical key-sorted form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvelopeHeader {
    /// Base URL of the escrow API holding the key. Present iff the envelope
    /// is a marketplace (Protocol-2) prompt.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub escrow_locator: Option<String>,
    /// base64url id of the content key the core was sealed under.
    pub key_id: String,
    /// base64url id of the protected prompt, stable across key rotations.
    pub prompt_id: String,
    pub version: u32,
}

/// Armored envelope: human-legible preamble plus AEAD-encrypted core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedPrompt {
    pub preamble: String,
    pub header: EnvelopeHeader,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext_and_tag: Vec<u8>,
}

impl SealedPrompt {
    pub fn to_armored(&self) -> String {
        serialize_sealed(self)
    }
}

static AEAD_OPS: AtomicU64 = AtomicU64::new(0);

/// Number of AEAD encrypt/decrypt invocations performed by this process.
/// Lets callers verify that credential validation happens before any
/// decryption is attempted.
pub fn aead_op_count() -> u64 {
    AEAD_OPS.load(Ordering::SeqCst)
}

/// AEAD associated data: canonical key-sorted JSON of preamble and header.
fn associated_data(preamble: &str, header: &EnvelopeHeader) -> Vec<u8> {
    #[derive(Serialize)]
    struct Aad<'a> {
        header: &'a EnvelopeHeader,
        preamble: &'a str,
    }
    serde_json::to_vec(&Aad { header, preamble }).expect("header serialization cannot fail")
}

fn validate_preamble(preamble: &str) -> Result<(), SealerError> {
    let printable = preamble
        .chars()
        .all(|c| c == '\n' || (' '..='~').contains(&c));
    if !printable {
        return Err(SealerError::InvalidPreamble);
    }
    // armor markers inside the preamble would break the line framing
    if preamble.lines().any(|l| l.starts_with("-----")) {
        return Err(SealerError::InvalidPreamble);
    }
    Ok(())
}

pub fn random_prompt_id() -> String {
    let mut id = [0u8; PROMPT_ID_LEN];
    rand::thread_rng().fill_bytes(&mut id);
    URL_SAFE_NO_PAD.encode(id)
}

/// Seal a task prompt into an armored envelope under `key`, with a fresh
/// random prompt id and nonce.
pub fn seal(
    task: &TaskPrompt,
    key: &ContentKey,
    preamble: &str,
    escrow_locator: Option<&str>,
) -> Result<SealedPrompt, SealerError> {
    seal_with_prompt_id(task, key, preamble, escrow_locator, &random_prompt_id())
}

/// Seal preserving a caller-chosen prompt id. Used by key rotation, which
/// re-encrypts under a fresh key but must keep the listing id stable.
pub fn seal_with_prompt_id(
    task: &TaskPrompt,
    key: &ContentKey,
    preamble: &str,
    escrow_locator: Option<&str>,
    prompt_id: &str,
) -> Result<SealedPrompt, SealerError> {
    let mut nonce = [0u8; NONCE_LEN];
    rand::thread_rng().fill_bytes(&mut nonce);
    seal_with_nonce(task, key, preamble, escrow_locator, prompt_id, nonce)
}

/// Deterministic seal with a caller-fixed nonce. Test hook only: reusing a
/// nonce across two different plaintexts breaks AEAD security.
#[doc(hidden)]
pub fn seal_with_nonce(
    task: &TaskPrompt,
    key: &ContentKey,
    preamble: &str,
    escrow_locator: Option<&str>,
    prompt_id: &str,
    nonce: [u8; NONCE_LEN],
) -> Result<SealedPrompt, SealerError> {
    validate_preamble(preamble)?;
    let header = EnvelopeHeader {
        escrow_locator: escrow_locator.map(str::to_string),
        key_id: key.key_id_b64(),
        prompt_id: prompt_id.to_string(),
        version: ENVELOPE_VERSION,
    };
    let aad = associated_data(preamble, &header);
    let cipher = XChaCha20Poly1305::new(key.key_bytes().into());
    AEAD_OPS.fetch_add(1, Ordering::SeqCst);
    let ciphertext_and_tag = cipher
        .encrypt(
            (&nonce).into(),
            Payload {
                msg: &task.to_canonical_bytes(),
                aad: &aad,
            },
        )
        .map_err(|_| SealerError::AuthFailure)?;
    Ok(SealedPrompt {
        preamble: preamble.to_string(),
        header,
        nonce,
        ciphertext_and_tag,
    })
}

/// Recover the task prompt from an envelope. Any tampering of preamble,
/// header, or core, and any wrong key, yields the same [`SealerError::AuthFailure`].
pub fn unseal(envelope: &SealedPrompt, key: &ContentKey) -> Result<TaskPrompt, SealerError> {
    let aad = associated_data(&envelope.preamble, &envelope.header);
    let cipher = XChaCha20Poly1305::new(key.key_bytes().into());
    AEAD_OPS.fetch_add(1, Ordering::SeqCst);
    let plaintext = cipher
        .decrypt(
            (&envelope.nonce).into(),
            Payload {
                msg: &envelope.ciphertext_and_tag,
                aad: &aad,
            },
        )
        .map_err(|_| SealerError::AuthFailure)?;
    // a sealed core always carries the canonical form; anything else is
    // indistinguishable from tampering to the caller
    TaskPrompt::from_canonical_bytes(&plaintext).map_err(|_| SealerError::AuthFailure)
}
