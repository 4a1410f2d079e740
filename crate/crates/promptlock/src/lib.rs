//! Prompt intellectual-property protection toolkit.
//!
//! Two protocols are implemented on top of a shared sealed-prompt envelope:
//!
//! 1. A **decryption bridge** ([`bridge`]) sits between the user and the LLM
//!    provider. It validates per-buyer user keys, unseals the protected task
//!    prompt, drives assimilate-then-forget on the backend, and filters every
//!    response so the plaintext prompt can never leak back out.
//! 2. A **key escrow marketplace** ([`escrow`]) sells encrypted prompts
//!    together with single-use bearer tokens. Redeeming a token releases the
//!    content key exactly once and rotates the stored envelope to a fresh
//!    key, so a released key is immediately useless while the listing remains
//!    sellable ad infinitum.
//!
//! The [`sealer`] module defines the armored envelope and user-key formats,
//! [`mockllm`] provides a deterministic backend used for testing both
//! protocols end to end, and [`store`] is the crash-safe persistence layer
//! behind the escrow.

pub mod bridge;
pub mod config;
pub mod escrow;
pub mod fingerprint;
pub mod mockllm;
pub mod protocol;
pub mod sealer;
pub mod store;
