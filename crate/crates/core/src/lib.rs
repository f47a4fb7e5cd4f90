//! Desk-scale attestation for simulated embedded devices.
//!
//! A simulated prover exposes measurable platform state (chip and flash
//! identifiers, MAC addresses, image hashes, GPIO levels, an endorsement key
//! held in a simulated secure element). A verifier turns measurements into
//! signed platform attribute certificates (a base certificate at
//! provisioning, deltas for tracked changes) and detects tampering either by
//! comparing deterministic certificate signatures or by comparing components
//! one by one.
//!
//! Module map:
//! - [`device`]: the simulated prover and tamper-injection operations
//! - [`measure`]: attribute extraction and the rendered measurement log
//! - [`complist`]: canonical component inventory, JSON form, diffing
//! - [`crypto`]: deterministic ECDSA P-256 (RFC 6979) and RSA PKCS#1 v1.5
//! - [`der`]: strict canonical DER primitives
//! - [`certgen`]: certificate build/sign/encode/decode/validate, delta replay
//! - [`verify`]: the verification protocol and verdict reports
//! - [`wire`]: framed TCP protocol, prover daemon, certificate store

pub mod certgen;
pub mod complist;
pub mod crypto;
pub mod der;
pub mod device;
pub mod measure;
pub mod verify;
pub mod wire;
