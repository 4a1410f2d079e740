//! C ABI over the sealing and credential primitives.
//!
//! Conventions:
//! - handles (`PlContentKey`, `PlEnvelope`) are opaque pointers owned by the
//!   caller and released with the matching `_free` function;
//! - strings returned through `char **` out-parameters are NUL-terminated
//!   UTF-8 owned by the caller, released with [`pl_string_free`];
//! - every fallible call returns a [`PlStatus`]; out-parameters are written
//!   only on `PL_STATUS_OK`.

use std::ffi::{c_char, CStr, CString};

use promptlock::sealer::{self, ContentKey, SealedPrompt, SealerError, TaskPrompt};

/// Result codes for every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlStatus {
    /// Success.
    PlStatusOk = 0,
    /// A required pointer was null or an argument was structurally invalid.
    PlStatusInvalidArgument = 1,
    /// The input could not be parsed as the expected format.
    PlStatusParseError = 2,
    /// Authenticated decryption failed; envelope or key is wrong or tampered.
    PlStatusAuthFailure = 3,
    /// A user-key token failed issuer verification.
    PlStatusKeyInvalid = 4,
    /// The envelope version is not supported by this library.
    PlStatusUnsupportedVersion = 5,
    /// The user id is empty, too long, or not printable ASCII.
    PlStatusInvalidUserId = 6,
    /// The preamble contains bytes the armor cannot carry.
    PlStatusInvalidPreamble = 7,
    /// Text crossing the boundary was not valid UTF-8 or contained NUL.
    PlStatusEncodingError = 8,
}

/// Opaque handle to a content key.
pub struct PlContentKey(ContentKey);

/// Opaque handle to a parsed sealed-prompt envelope.
pub struct PlEnvelope(SealedPrompt);

fn status_of(err: &SealerError) -> PlStatus {
    match err {
        SealerError::Parse { .. } => PlStatus::PlStatusParseError,
        SealerError::AuthFailure => PlStatus::PlStatusAuthFailure,
        SealerError::KeyInvalid => PlStatus::PlStatusKeyInvalid,
        SealerError::UnsupportedVersion(_) => PlStatus::PlStatusUnsupportedVersion,
        SealerError::InvalidUserId => PlStatus::PlStatusInvalidUserId,
        SealerError::InvalidPreamble => PlStatus::PlStatusInvalidPreamble,
    }
}

/// Borrow a required UTF-8 C string argument.
unsafe fn required_str<'a>(ptr: *const c_char) -> Result<&'a str, PlStatus> {
    if ptr.is_null() {
        return Err(PlStatus::PlStatusInvalidArgument);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| PlStatus::PlStatusEncodingError)
}

fn out_string(s: String, out: *mut *mut c_char) -> PlStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            PlStatus::PlStatusOk
        }
        Err(_) => PlStatus::PlStatusEncodingError,
    }
}

/// Human-readable description of a status code; static storage, do not free.
#[no_mangle]
pub extern "C" fn pl_status_message(status: PlStatus) -> *const c_char {
    let msg: &'static CStr = match status {
        PlStatus::PlStatusOk => c"ok",
        PlStatus::PlStatusInvalidArgument => c"invalid argument",
        PlStatus::PlStatusParseError => c"parse error",
        PlStatus::PlStatusAuthFailure => c"authentication failure",
        PlStatus::PlStatusKeyInvalid => c"user key invalid",
        PlStatus::PlStatusUnsupportedVersion => c"unsupported envelope version",
        PlStatus::PlStatusInvalidUserId => c"invalid user id",
        PlStatus::PlStatusInvalidPreamble => c"invalid preamble",
        PlStatus::PlStatusEncodingError => c"text not representable",
    };
    msg.as_ptr()
}

/// Release a string returned by this library.
#[no_mangle]
pub extern "C" fn pl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

// ---------------------------------------------------------------------------
// Content keys
// ---------------------------------------------------------------------------

/// Generate a fresh random content key. Never fails; free with
/// [`pl_content_key_free`].
#[no_mangle]
pub extern "C" fn pl_content_key_generate() -> *mut PlContentKey {
    Box::into_raw(Box::new(PlContentKey(ContentKey::generate())))
}

/// Serialize a key to its JSON form (the CLI's key-file format).
#[no_mangle]
pub unsafe extern "C" fn pl_content_key_to_json(
    key: *const PlContentKey,
    out_json: *mut *mut c_char,
) -> PlStatus {
    if key.is_null() || out_json.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let json = serde_json::to_string(&(*key).0).expect("key serialization cannot fail");
    out_string(json, out_json)
}

/// Parse a key from its JSON form.
#[no_mangle]
pub unsafe extern "C" fn pl_content_key_from_json(
    json: *const c_char,
    out_key: *mut *mut PlContentKey,
) -> PlStatus {
    if out_key.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let json = match required_str(json) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match serde_json::from_str::<ContentKey>(json) {
        Ok(key) => {
            *out_key = Box::into_raw(Box::new(PlContentKey(key)));
            PlStatus::PlStatusOk
        }
        Err(_) => PlStatus::PlStatusParseError,
    }
}

#[no_mangle]
pub unsafe extern "C" fn pl_content_key_free(key: *mut PlContentKey) {
    if !key.is_null() {
        drop(Box::from_raw(key));
    }
}

// ---------------------------------------------------------------------------
// Envelopes
// ---------------------------------------------------------------------------

/// Seal a task body under a key. `escrow_locator` may be null for direct
/// (non-marketplace) envelopes.
#[no_mangle]
pub unsafe extern "C" fn pl_seal(
    body: *const c_char,
    preamble: *const c_char,
    escrow_locator: *const c_char,
    key: *const PlContentKey,
    out_envelope: *mut *mut PlEnvelope,
) -> PlStatus {
    if key.is_null() || out_envelope.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let (body, preamble) = match (required_str(body), required_str(preamble)) {
        (Ok(b), Ok(p)) => (b, p),
        (Err(status), _) | (_, Err(status)) => return status,
    };
    let locator = if escrow_locator.is_null() {
        None
    } else {
        match required_str(escrow_locator) {
            Ok(s) => Some(s),
            Err(status) => return status,
        }
    };
    match sealer::seal(&TaskPrompt::new(body), &(*key).0, preamble, locator) {
        Ok(envelope) => {
            *out_envelope = Box::into_raw(Box::new(PlEnvelope(envelope)));
            PlStatus::PlStatusOk
        }
        Err(e) => status_of(&e),
    }
}

/// Parse an armored envelope.
#[no_mangle]
pub unsafe extern "C" fn pl_envelope_parse(
    armored: *const c_char,
    out_envelope: *mut *mut PlEnvelope,
) -> PlStatus {
    if out_envelope.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let armored = match required_str(armored) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match sealer::parse_sealed(armored) {
        Ok(envelope) => {
            *out_envelope = Box::into_raw(Box::new(PlEnvelope(envelope)));
            PlStatus::PlStatusOk
        }
        Err(e) => status_of(&e),
    }
}

/// Serialize an envelope to its armored text form.
#[no_mangle]
pub unsafe extern "C" fn pl_envelope_to_armored(
    envelope: *const PlEnvelope,
    out_armored: *mut *mut c_char,
) -> PlStatus {
    if envelope.is_null() || out_armored.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    out_string((*envelope).0.to_armored(), out_armored)
}

/// The envelope's prompt id (base64url text).
#[no_mangle]
pub unsafe extern "C" fn pl_envelope_prompt_id(
    envelope: *const PlEnvelope,
    out_prompt_id: *mut *mut c_char,
) -> PlStatus {
    if envelope.is_null() || out_prompt_id.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    out_string((*envelope).0.header.prompt_id.clone(), out_prompt_id)
}

/// Decrypt an envelope, returning the task body byte-exactly. Fails with
/// `PL_STATUS_AUTH_FAILURE` on any tampering or key mismatch.
#[no_mangle]
pub unsafe extern "C" fn pl_unseal(
    envelope: *const PlEnvelope,
    key: *const PlContentKey,
    out_body: *mut *mut c_char,
) -> PlStatus {
    if envelope.is_null() || key.is_null() || out_body.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    match sealer::unseal(&(*envelope).0, &(*key).0) {
        Ok(task) => out_string(task.body().to_string(), out_body),
        Err(e) => status_of(&e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn pl_envelope_free(envelope: *mut PlEnvelope) {
    if !envelope.is_null() {
        drop(Box::from_raw(envelope));
    }
}

// ---------------------------------------------------------------------------
// User keys
// ---------------------------------------------------------------------------

/// Encode a PLKEY1 user-key token binding `user_id` to the content key
/// under the issuer secret.
#[no_mangle]
pub unsafe extern "C" fn pl_user_key_encode(
    user_id: *const c_char,
    key: *const PlContentKey,
    issuer_secret: *const u8,
    issuer_secret_len: usize,
    out_token: *mut *mut c_char,
) -> PlStatus {
    if key.is_null() || issuer_secret.is_null() || out_token.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let user_id = match required_str(user_id) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let secret = std::slice::from_raw_parts(issuer_secret, issuer_secret_len);
    match sealer::encode_user_key(user_id, &(*key).0, secret) {
        Ok(token) => out_string(token, out_token),
        Err(e) => status_of(&e),
    }
}

/// Decode and verify a PLKEY1 token. On success both out-parameters are
/// populated; the key is released only after the issuer tag verifies.
#[no_mangle]
pub unsafe extern "C" fn pl_user_key_decode(
    token: *const c_char,
    issuer_secret: *const u8,
    issuer_secret_len: usize,
    out_user_id: *mut *mut c_char,
    out_key: *mut *mut PlContentKey,
) -> PlStatus {
    if issuer_secret.is_null() || out_user_id.is_null() || out_key.is_null() {
        return PlStatus::PlStatusInvalidArgument;
    }
    let token = match required_str(token) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let secret = std::slice::from_raw_parts(issuer_secret, issuer_secret_len);
    match sealer::decode_user_key(token, secret) {
        Ok((user_id, key)) => {
            let status = out_string(user_id, out_user_id);
            if status != PlStatus::PlStatusOk {
                return status;
            }
            *out_key = Box::into_raw(Box::new(PlContentKey(key)));
            PlStatus::PlStatusOk
        }
        Err(e) => status_of(&e),
    }
}
