#ifndef PROMPTLOCK_H
#define PROMPTLOCK_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call in this ABI.
 */
typedef enum {
  /**
   * Success.
   */
  PL_STATUS_OK = 0,
  /**
   * A required pointer was null or an argument was structurally invalid.
   */
  PL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The input could not be parsed as the expected format.
   */
  PL_STATUS_PARSE_ERROR = 2,
  /**
   * Authenticated decryption failed; envelope or key is wrong or tampered.
   */
  PL_STATUS_AUTH_FAILURE = 3,
  /**
   * A user-key token failed issuer verification.
   */
  PL_STATUS_KEY_INVALID = 4,
  /**
   * The envelope version is not supported by this library.
   */
  PL_STATUS_UNSUPPORTED_VERSION = 5,
  /**
   * The user id is empty, too long, or not printable ASCII.
   */
  PL_STATUS_INVALID_USER_ID = 6,
  /**
   * The preamble contains bytes the armor cannot carry.
   */
  PL_STATUS_INVALID_PREAMBLE = 7,
  /**
   * Text crossing the boundary was not valid UTF-8 or contained NUL.
   */
  PL_STATUS_ENCODING_ERROR = 8,
} PlStatus;

/**
 * Opaque handle to a content key.
 */
typedef struct PlContentKey PlContentKey;

/**
 * Opaque handle to a parsed sealed-prompt envelope.
 */
typedef struct PlEnvelope PlEnvelope;

/**
 * Human-readable description of a status code; static storage, do not free.
 */
const char *pl_status_message(PlStatus status);

/**
 * Release a string returned by this library.
 */
void pl_string_free(char *s);

/**
 * Generate a fresh random content key. Never fails; free with
 * [`pl_content_key_free`].
 */
PlContentKey *pl_content_key_generate(void);

/**
 * Serialize a key to its JSON form (the CLI's key-file format).
 */
PlStatus pl_content_key_to_json(const PlContentKey *key, char **out_json);

/**
 * Parse a key from its JSON form.
 */
PlStatus pl_content_key_from_json(const char *json, PlContentKey **out_key);

void pl_content_key_free(PlContentKey *key);

/**
 * Seal a task body under a key. `escrow_locator` may be null for direct
 * (non-marketplace) envelopes.
 */
PlStatus pl_seal(const char *body,
                 const char *preamble,
                 const char *escrow_locator,
                 const PlContentKey *key,
                 PlEnvelope **out_envelope);

/**
 * Parse an armored envelope.
 */
PlStatus pl_envelope_parse(const char *armored, PlEnvelope **out_envelope);

/**
 * Serialize an envelope to its armored text form.
 */
PlStatus pl_envelope_to_armored(const PlEnvelope *envelope, char **out_armored);

/**
 * The envelope's prompt id (base64url text).
 */
PlStatus pl_envelope_prompt_id(const PlEnvelope *envelope, char **out_prompt_id);

/**
 * Decrypt an envelope, returning the task body byte-exactly. Fails with
 * `PL_STATUS_AUTH_FAILURE` on any tampering or key mismatch.
 */
PlStatus pl_unseal(const PlEnvelope *envelope, const PlContentKey *key, char **out_body);

void pl_envelope_free(PlEnvelope *envelope);

/**
 * Encode a PLKEY1 user-key token binding `user_id` to the content key
 * under the issuer secret.
 */
PlStatus pl_user_key_encode(const char *user_id,
                            const PlContentKey *key,
                            const uint8_t *issuer_secret,
                            uintptr_t issuer_secret_len,
                            char **out_token);

/**
 * Decode and verify a PLKEY1 token. On success both out-parameters are
 * populated; the key is released only after the issuer tag verifies.
 */
PlStatus pl_user_key_decode(const char *token,
                            const uint8_t *issuer_secret,
                            uintptr_t issuer_secret_len,
                            char **out_user_id,
                            PlContentKey **out_key);

#endif  /* PROMPTLOCK_H */
