//! Independent reference implementations used as test oracles.
//!
//! Everything here is written from the primary sources (RFC 8439, RFC 6234,
//! the XChaCha20 draft) without touching the crates the production code
//! uses, so agreement between the two is meaningful evidence rather than a
//! tautology. Each primitive carries a self-test against a published vector.

#![allow(dead_code)] // each integration test binary uses a subset

// ---------------------------------------------------------------------------
// SHA-256 (RFC 6234), from scratch.
// ---------------------------------------------------------------------------

const SHA256_K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2,
];

pub fn ref_sha256(message: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab,
        0x5be0cd19,
    ];
    let mut data = message.to_vec();
    let bit_len = (message.len() as u64) * 8;
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&bit_len.to_be_bytes());

    for block in data.chunks_exact(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes(block[i * 4..i * 4 + 4].try_into().unwrap());
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16]
                .wrapping_add(s0)
                .wrapping_add(w[i - 7])
                .wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh
                .wrapping_add(s1)
                .wrapping_add(ch)
                .wrapping_add(SHA256_K[i])
                .wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (slot, v) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *slot = slot.wrapping_add(v);
        }
    }
    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

/// HMAC-SHA-256 (RFC 2104) built on the reference SHA-256 above.
pub fn ref_hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut k = [0u8; 64];
    if key.len() > 64 {
        k[..32].copy_from_slice(&ref_sha256(key));
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let mut inner: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
    for p in parts {
        inner.extend_from_slice(p);
    }
    let inner_hash = ref_sha256(&inner);
    let mut outer: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
    outer.extend_from_slice(&inner_hash);
    ref_sha256(&outer)
}

/// base64url without padding (RFC 4648 §5), from scratch.
pub fn ref_b64url(data: &[u8]) -> String {
    const ALPHABET: &[u8; 64] =
        b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    let mut out = String::new();
    for chunk in data.chunks(3) {
        let b = [chunk[0], *chunk.get(1).unwrap_or(&0), *chunk.get(2).unwrap_or(&0)];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(ALPHABET[(n >> 18) as usize & 63] as char);
        out.push(ALPHABET[(n >> 12) as usize & 63] as char);
        if chunk.len() > 1 {
            out.push(ALPHABET[(n >> 6) as usize & 63] as char);
        }
        if chunk.len() > 2 {
            out.push(ALPHABET[n as usize & 63] as char);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// ChaCha20 / HChaCha20 (RFC 8439 + draft-irtf-cfrg-xchacha), from scratch.
// ---------------------------------------------------------------------------

fn quarter_round(state: &mut [u32; 16], a: usize, b: usize, c: usize, d: usize) {
    state[a] = state[a].wrapping_add(state[b]);
    state[d] = (state[d] ^ state[a]).rotate_left(16);
    state[c] = state[c].wrapping_add(state[d]);
    state[b] = (state[b] ^ state[c]).rotate_left(12);
    state[a] = state[a].wrapping_add(state[b]);
    state[d] = (state[d] ^ state[a]).rotate_left(8);
    state[c] = state[c].wrapping_add(state[d]);
    state[b] = (state[b] ^ state[c]).rotate_left(7);
}

fn rounds(state: &mut [u32; 16]) {
    for _ in 0..10 {
        quarter_round(state, 0, 4, 8, 12);
        quarter_round(state, 1, 5, 9, 13);
        quarter_round(state, 2, 6, 10, 14);
        quarter_round(state, 3, 7, 11, 15);
        quarter_round(state, 0, 5, 10, 15);
        quarter_round(state, 1, 6, 11, 12);
        quarter_round(state, 2, 7, 8, 13);
        quarter_round(state, 3, 4, 9, 14);
    }
}

const SIGMA: [u32; 4] = [0x61707865, 0x3320646e, 0x79622d32, 0x6b206574];

fn chacha20_block(key: &[u8; 32], counter: u32, nonce: &[u8; 12]) -> [u8; 64] {
    let mut state = [0u32; 16];
    state[..4].copy_from_slice(&SIGMA);
    for i in 0..8 {
        state[4 + i] = u32::from_le_bytes(key[i * 4..i * 4 + 4].try_into().unwrap());
    }
    state[12] = counter;
    for i in 0..3 {
        state[13 + i] = u32::from_le_bytes(nonce[i * 4..i * 4 + 4].try_into().unwrap());
    }
    let initial = state;
    rounds(&mut state);
    let mut out = [0u8; 64];
    for i in 0..16 {
        let word = state[i].wrapping_add(initial[i]);
        out[i * 4..i * 4 + 4].copy_from_slice(&word.to_le_bytes());
    }
    out
}

fn chacha20_xor(key: &[u8; 32], counter: u32, nonce: &[u8; 12], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (i, chunk) in data.chunks(64).enumerate() {
        let ks = chacha20_block(key, counter + i as u32, nonce);
        out.extend(chunk.iter().zip(ks.iter()).map(|(d, k)| d ^ k));
    }
    out
}

/// HChaCha20 subkey derivation: 20 rounds, no feed-forward, output words
/// 0..3 and 12..15.
fn hchacha20(key: &[u8; 32], nonce16: &[u8; 16]) -> [u8; 32] {
    let mut state = [0u32; 16];
    state[..4].copy_from_slice(&SIGMA);
    for i in 0..8 {
        state[4 + i] = u32::from_le_bytes(key[i * 4..i * 4 + 4].try_into().unwrap());
    }
    for i in 0..4 {
        state[12 + i] = u32::from_le_bytes(nonce16[i * 4..i * 4 + 4].try_into().unwrap());
    }
    rounds(&mut state);
    let mut out = [0u8; 32];
    for (i, idx) in (0..4).chain(12..16).enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&state[idx].to_le_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// Poly1305 (RFC 8439 §2.5) over 3×u64 limbs mod 2^130-5.
// ---------------------------------------------------------------------------

type N130 = [u64; 3];

fn n130_from_le(bytes: &[u8], append_one: bool) -> N130 {
    let mut buf = [0u8; 24];
    buf[..bytes.len()].copy_from_slice(bytes);
    if append_one {
        buf[bytes.len()] = 1;
    }
    [
        u64::from_le_bytes(buf[0..8].try_into().unwrap()),
        u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        u64::from_le_bytes(buf[16..24].try_into().unwrap()),
    ]
}

fn n130_add(a: N130, b: N130) -> N130 {
    let (l0, c0) = a[0].overflowing_add(b[0]);
    let (l1a, c1a) = a[1].overflowing_add(b[1]);
    let (l1, c1b) = l1a.overflowing_add(c0 as u64);
    let l2 = a[2]
        .wrapping_add(b[2])
        .wrapping_add((c1a as u64) + (c1b as u64));
    [l0, l1, l2]
}

/// (a * b) mod 2^130-5, inputs below 2^131.
fn n130_mulmod(a: N130, b: N130) -> N130 {
    // schoolbook product into 5 limbs of 64 bits
    let mut prod = [0u128; 5];
    for i in 0..3 {
        for j in 0..3 {
            prod[i + j] += (a[i] as u128) * (b[j] as u128);
            // normalize eagerly so the u128 cells cannot overflow
            if prod[i + j] >> 64 != 0 {
                let carry = prod[i + j] >> 64;
                prod[i + j] &= u64::MAX as u128;
                prod[i + j + 1] += carry;
            }
        }
    }
    let mut limbs = [0u64; 5];
    let mut carry: u128 = 0;
    for i in 0..5 {
        let v = prod[i] + carry;
        limbs[i] = v as u64;
        carry = v >> 64;
    }
    // reduce: x = lo(130 bits) + hi * 2^130, and 2^130 ≡ 5
    for _ in 0..3 {
        let lo = [limbs[0], limbs[1], limbs[2] & 0x3];
        // hi = x >> 130
        let hi0 = (limbs[2] >> 2) | (limbs[3] << 62);
        let hi1 = (limbs[3] >> 2) | (limbs[4] << 62);
        let hi2 = limbs[4] >> 2;
        let mut acc = [0u128; 5];
        acc[0] = lo[0] as u128 + 5 * hi0 as u128;
        acc[1] = lo[1] as u128 + 5 * hi1 as u128;
        acc[2] = lo[2] as u128 + 5 * hi2 as u128;
        let mut c: u128 = 0;
        for i in 0..5 {
            let v = acc[i] + c;
            limbs[i] = v as u64;
            c = v >> 64;
        }
    }
    let mut r = [limbs[0], limbs[1], limbs[2]];
    // final conditional subtraction of p = 2^130 - 5
    let p: N130 = [u64::MAX - 4, u64::MAX, 0x3];
    if r[2] > p[2] || (r[2] == p[2] && (r[1] > p[1] || (r[1] == p[1] && r[0] >= p[0]))) {
        let (l0, borrow0) = r[0].overflowing_sub(p[0]);
        let (l1a, borrow1a) = r[1].overflowing_sub(p[1]);
        let (l1, borrow1b) = l1a.overflowing_sub(borrow0 as u64);
        let l2 = r[2]
            .wrapping_sub(p[2])
            .wrapping_sub((borrow1a as u64) + (borrow1b as u64));
        r = [l0, l1, l2];
    }
    r
}

pub fn ref_poly1305(key: &[u8; 32], msg: &[u8]) -> [u8; 16] {
    let mut r_bytes: [u8; 16] = key[..16].try_into().unwrap();
    // clamp
    r_bytes[3] &= 15;
    r_bytes[7] &= 15;
    r_bytes[11] &= 15;
    r_bytes[15] &= 15;
    r_bytes[4] &= 252;
    r_bytes[8] &= 252;
    r_bytes[12] &= 252;
    let r = n130_from_le(&r_bytes, false);
    let s = n130_from_le(&key[16..32], false);

    let mut acc: N130 = [0, 0, 0];
    for block in msg.chunks(16) {
        let n = n130_from_le(block, true);
        acc = n130_mulmod(n130_add(acc, n), r);
    }
    // tag = (acc + s) mod 2^128
    let total = n130_add(acc, s);
    let mut tag = [0u8; 16];
    tag[..8].copy_from_slice(&total[0].to_le_bytes());
    tag[8..].copy_from_slice(&total[1].to_le_bytes());
    tag
}

// ---------------------------------------------------------------------------
// XChaCha20-Poly1305 AEAD seal, composed from the pieces above.
// ---------------------------------------------------------------------------

/// Returns ciphertext || 16-byte tag, matching the production envelope core.
pub fn ref_xchacha20poly1305_seal(
    key: &[u8; 32],
    nonce: &[u8; 24],
    aad: &[u8],
    plaintext: &[u8],
) -> Vec<u8> {
    let subkey = hchacha20(key, nonce[..16].try_into().unwrap());
    let mut nonce12 = [0u8; 12];
    nonce12[4..].copy_from_slice(&nonce[16..]);

    let block0 = chacha20_block(&subkey, 0, &nonce12);
    let otk: [u8; 32] = block0[..32].try_into().unwrap();
    let ciphertext = chacha20_xor(&subkey, 1, &nonce12, plaintext);

    let mut mac_data = Vec::new();
    mac_data.extend_from_slice(aad);
    mac_data.resize(mac_data.len().next_multiple_of(16), 0);
    mac_data.extend_from_slice(&ciphertext);
    mac_data.resize(mac_data.len().next_multiple_of(16), 0);
    mac_data.extend_from_slice(&(aad.len() as u64).to_le_bytes());
    mac_data.extend_from_slice(&(ciphertext.len() as u64).to_le_bytes());
    let tag = ref_poly1305(&otk, &mac_data);

    let mut out = ciphertext;
    out.extend_from_slice(&tag);
    out
}

// ---------------------------------------------------------------------------
// Brute-force 5-word window scan, independent of the fingerprint module.
// ---------------------------------------------------------------------------

fn scan_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let cleaned: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(|c| c.to_lowercase())
                .collect();
            (!cleaned.is_empty()).then_some(cleaned)
        })
        .collect()
}

/// Does `candidate` contain any run of 5 consecutive normalized words that
/// also appears consecutively in `protected`? Quadratic on purpose: this is
/// the oracle the hashed fingerprint is checked against.
pub fn brute_force_shares_window(protected: &str, candidate: &str) -> bool {
    let p = scan_words(protected);
    let c = scan_words(candidate);
    if p.len() < 5 || c.len() < 5 {
        return false;
    }
    for pw in p.windows(5) {
        for cw in c.windows(5) {
            if pw == cw {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Self-tests against published vectors.
// ---------------------------------------------------------------------------

#[test]
fn sha256_matches_published_vector() {
    let digest = ref_sha256(b"abc");
    let expected = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    assert_eq!(hex(&digest), expected);
}

#[test]
fn hmac_matches_rfc4231_case_2() {
    // RFC 4231 test case 2: key "Jefe", data "what do ya want for nothing?"
    let tag = ref_hmac_sha256(b"Jefe", &[b"what do ya want for nothing?"]);
    let expected = "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843";
    assert_eq!(hex(&tag), expected);
}

#[test]
fn poly1305_matches_rfc8439_vector() {
    // RFC 8439 §2.5.2
    let key: [u8; 32] = [
        0x85, 0xd6, 0xbe, 0x78, 0x57, 0x55, 0x6d, 0x33, 0x7f, 0x44, 0x52, 0xfe, 0x42, 0xd5,
        0x06, 0xa8, 0x01, 0x03, 0x80, 0x8a, 0xfb, 0x0d, 0xb2, 0xfd, 0x4a, 0xbf, 0xf6, 0xaf,
        0x41, 0x49, 0xf5, 0x1b,
    ];
    let tag = ref_poly1305(&key, b"Cryptographic Forum Research Group");
    let expected = "a8061dc1305136c6c22b8baf0c0127a9";
    assert_eq!(hex(&tag), expected);
}

#[test]
fn chacha20_block_matches_rfc8439_vector() {
    // RFC 8439 §2.3.2: the serialized keystream begins 10 f1 e7 e4 ...
    let mut key = [0u8; 32];
    for (i, b) in key.iter_mut().enumerate() {
        *b = i as u8;
    }
    let nonce: [u8; 12] = [0, 0, 0, 9, 0, 0, 0, 0x4a, 0, 0, 0, 0];
    let block = chacha20_block(&key, 1, &nonce);
    assert_eq!(&block[..4], &[0x10, 0xf1, 0xe7, 0xe4]);
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
