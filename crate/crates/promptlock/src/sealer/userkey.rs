//! User-key codec: fuses a buyer identity with the content key under an
//! issuer HMAC tag, yielding a virtually unique per-buyer credential.
//!
//! Token format, single line of printable ASCII:
//!
//! ```text
//! PLKEY1.<b64url(user_id)>.<b64url(key_id || key_bytes)>.<b64url(tag)>
//! ```
//!
//! `tag` is the first 16 bytes of HMAC-SHA-256 over the two preceding
//! decoded segments under the issuer secret.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::{ContentKey, SealerError, KEY_BYTES_LEN, KEY_ID_LEN};

pub const USER_KEY_PREFIX: &str = "PLKEY1";
const TAG_LEN: usize = 16;

type HmacSha256 = Hmac<Sha256>;

/// Per-buyer credential: identity plus the content key it unlocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserKey {
    pub user_id: String,
    pub content_key: ContentKey,
}

fn valid_user_id(user_id: &str) -> bool {
    (1..=64).contains(&user_id.len()) && user_id.chars().all(|c| (' '..='~').contains(&c))
}

fn issuer_tag(user_id: &[u8], key_material: &[u8], issuer_secret: &[u8]) -> [u8; TAG_LEN] {
    let mut mac =
        HmacSha256::new_from_slice(issuer_secret).expect("hmac accepts any key length");
    mac.update(user_id);
    mac.update(key_material);
    let full = mac.finalize().into_bytes();
    full[..TAG_LEN].try_into().unwrap()
}

pub fn encode_user_key(
    user_id: &str,
    key: &ContentKey,
    issuer_secret: &[u8],
) -> Result<String, SealerError> {
    if !valid_user_id(user_id) {
        return Err(SealerError::InvalidUserId);
    }
    let mut key_material = Vec::with_capacity(KEY_ID_LEN + KEY_BYTES_LEN);
    key_material.extend_from_slice(key.key_id());
    key_material.extend_from_slice(key.key_bytes());
    let tag = issuer_tag(user_id.as_bytes(), &key_material, issuer_secret);
    Ok(format!(
        "{USER_KEY_PREFIX}.{}.{}.{}",
        URL_SAFE_NO_PAD.encode(user_id.as_bytes()),
        URL_SAFE_NO_PAD.encode(&key_material),
        URL_SAFE_NO_PAD.encode(tag),
    ))
}

/// Decode and verify a user-key token. Key material is released only after
/// the issuer tag verifies.
pub fn decode_user_key(
    token: &str,
    issuer_secret: &[u8],
) -> Result<(String, ContentKey), SealerError> {
    let parse = |offset: usize, reason: &str| SealerError::Parse {
        offset,
        reason: reason.to_string(),
    };
    let mut parts = token.split('.');
    if parts.next() != Some(USER_KEY_PREFIX) {
        return Err(parse(0, "missing PLKEY1 prefix"));
    }
    let (Some(uid_seg), Some(key_seg), Some(tag_seg), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(parse(0, "token must have exactly four dot-separated segments"));
    };
    let uid_bytes = URL_SAFE_NO_PAD
        .decode(uid_seg)
        .map_err(|_| parse(USER_KEY_PREFIX.len() + 1, "bad base64 in user id segment"))?;
    let key_material = URL_SAFE_NO_PAD
        .decode(key_seg)
        .map_err(|_| parse(0, "bad base64 in key segment"))?;
    let tag = URL_SAFE_NO_PAD
        .decode(tag_seg)
        .map_err(|_| parse(0, "bad base64 in tag segment"))?;
    if key_material.len() != KEY_ID_LEN + KEY_BYTES_LEN || tag.len() != TAG_LEN {
        return Err(parse(0, "segment length mismatch"));
    }

    let expected = issuer_tag(&uid_bytes, &key_material, issuer_secret);
    let mut mac =
        HmacSha256::new_from_slice(issuer_secret).expect("hmac accepts any key length");
    mac.update(&uid_bytes);
    mac.update(&key_material);
    // constant-time comparison on the truncated tag
    mac.verify_truncated_left(&tag)
        .map_err(|_| SealerError::KeyInvalid)?;
    debug_assert_eq!(expected.as_slice(), &tag[..]);

    let user_id = String::from_utf8(uid_bytes).map_err(|_| parse(0, "user id not UTF-8"))?;
    if !valid_user_id(&user_id) {
        return Err(parse(0, "decoded user id out of range"));
    }
    let key_id: [u8; KEY_ID_LEN] = key_material[..KEY_ID_LEN].try_into().unwrap();
    let key_bytes: [u8; KEY_BYTES_LEN] = key_material[KEY_ID_LEN..].try_into().unwrap();
    Ok((user_id, ContentKey::from_parts(key_id, key_bytes)))
}
