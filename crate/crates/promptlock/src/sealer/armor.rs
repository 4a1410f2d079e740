//! Line-oriented ASCII armor for sealed prompts.
//!
//! ```text
//! -----BEGIN PROTECTED PROMPT v1-----
//! <preamble, verbatim>
//! -----CORE-----
//! <base64url of u32be(header_len) || header_json || nonce || ciphertext+tag>
//! <wrapped at 64 columns>
//! -----END PROTECTED PROMPT-----
//! ```
//!
//! The header is the canonical key-sorted JSON of [`EnvelopeHeader`].

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

use super::{EnvelopeHeader, SealedPrompt, SealerError, ENVELOPE_VERSION, NONCE_LEN};

pub const ARMOR_BEGIN: &str = "-----BEGIN PROTECTED PROMPT v1-----";
pub const ARMOR_CORE: &str = "-----CORE-----";
pub const ARMOR_END: &str = "-----END PROTECTED PROMPT-----";

const WRAP_COLUMNS: usize = 64;

pub fn serialize_sealed(envelope: &SealedPrompt) -> String {
    let header_json =
        serde_json::to_vec(&envelope.header).expect("header serialization cannot fail");
    let mut core = Vec::with_capacity(
        4 + header_json.len() + NONCE_LEN + envelope.ciphertext_and_tag.len(),
    );
    core.extend_from_slice(&(header_json.len() as u32).to_be_bytes());
    core.extend_from_slice(&header_json);
    core.extend_from_slice(&envelope.nonce);
    core.extend_from_slice(&envelope.ciphertext_and_tag);
    let encoded = URL_SAFE_NO_PAD.encode(&core);

    let mut out = String::new();
    out.push_str(ARMOR_BEGIN);
    out.push('\n');
    out.push_str(&envelope.preamble);
    out.push('\n');
    out.push_str(ARMOR_CORE);
    out.push('\n');
    for chunk in encoded.as_bytes().chunks(WRAP_COLUMNS) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ASCII"));
        out.push('\n');
    }
    out.push_str(ARMOR_END);
    out.push('\n');
    out
}

fn parse_err(offset: usize, reason: impl Into<String>) -> SealerError {
    SealerError::Parse {
        offset,
        reason: reason.into(),
    }
}

/// Parse an armored envelope back into its structured form.
/// `parse_sealed(serialize_sealed(e)) == e` for every sealable envelope.
pub fn parse_sealed(armored: &str) -> Result<SealedPrompt, SealerError> {
    // Strict framing: nothing before BEGIN, nothing after END. A parser
    // that skipped over stray bytes would let corrupted envelopes through.
    let rest = armored
        .strip_prefix(ARMOR_BEGIN)
        .and_then(|r| r.strip_prefix('\n'))
        .ok_or_else(|| parse_err(0, "missing BEGIN marker"))?;
    let preamble_start = ARMOR_BEGIN.len() + 1;
    // The serialized form is `<preamble>\n-----CORE-----\n...`; the search
    // string carries the preamble's trailing newline.
    let core_marker = format!("\n{ARMOR_CORE}\n");
    let core_rel = rest
        .find(&core_marker)
        .ok_or_else(|| parse_err(preamble_start, "missing CORE marker"))?;
    let preamble = &rest[..core_rel];
    let tail = &rest[core_rel + core_marker.len()..];
    let core_start = preamble_start + core_rel + core_marker.len();
    let end_marker = format!("{ARMOR_END}\n");
    let core_text = tail
        .strip_suffix(&end_marker)
        .ok_or_else(|| parse_err(armored.len(), "missing END marker"))?;

    let mut encoded = String::with_capacity(core_text.len());
    for (i, ch) in core_text.char_indices() {
        match ch {
            '\n' | '\r' => continue,
            c if c.is_ascii_alphanumeric() || c == '-' || c == '_' => encoded.push(c),
            _ => return Err(parse_err(core_start + i, "invalid base64url character in core")),
        }
    }
    let core = URL_SAFE_NO_PAD
        .decode(&encoded)
        .map_err(|e| parse_err(core_start, format!("bad base64 core: {e}")))?;

    if core.len() < 4 {
        return Err(parse_err(core_start, "core too short for header length"));
    }
    let header_len = u32::from_be_bytes(core[..4].try_into().unwrap()) as usize;
    let nonce_start = 4 + header_len;
    if core.len() < nonce_start + NONCE_LEN {
        return Err(parse_err(core_start, "core too short for header and nonce"));
    }
    let header: EnvelopeHeader = serde_json::from_slice(&core[4..nonce_start])
        .map_err(|e| parse_err(core_start, format!("bad header json: {e}")))?;
    if header.version != ENVELOPE_VERSION {
        return Err(SealerError::UnsupportedVersion(header.version));
    }
    let nonce: [u8; NONCE_LEN] = core[nonce_start..nonce_start + NONCE_LEN]
        .try_into()
        .unwrap();
    let ciphertext_and_tag = core[nonce_start + NONCE_LEN..].to_vec();

    Ok(SealedPrompt {
        preamble: preamble.to_string(),
        header,
        nonce,
        ciphertext_and_tag,
    })
}
