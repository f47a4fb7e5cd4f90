//! Platform attribute certificates: build, sign, DER-encode, decode,
//! validate, chain-verify and replay deltas.
//!
//! Certificate DER layout (project OID arc defaults to the documentation
//! enterprise arc 1.3.6.1.4.1.32473.1 and is configurable per issuer):
//!
//! ```text
//! Certificate ::= SEQUENCE {
//!     tbs                TbsPac,
//!     signatureAlgorithm AlgorithmIdentifier,   -- must equal tbs field
//!     signature          BIT STRING }
//!
//! TbsPac ::= SEQUENCE {
//!     version            INTEGER (1),
//!     holder             SEQUENCE { ekPublicDigest OCTET STRING (32),
//!                                   ekBindingSig   OCTET STRING },
//!     issuer             UTF8String,
//!     serialNumber       INTEGER (20-byte content hash),
//!     validity           SEQUENCE { notBefore GeneralizedTime,
//!                                   notAfter  GeneralizedTime },
//!     signatureAlgorithm AlgorithmIdentifier,
//!     attributes         SEQUENCE {
//!         SEQUENCE { OID arc.1, PlatformInfo },
//!         SEQUENCE { OID arc.2, SEQUENCE OF ComponentId }    -- base
//!       | SEQUENCE { OID arc.3, SEQUENCE OF Change },        -- delta
//!         SEQUENCE { OID arc.4, UTF8String policyText } },
//!     baseCertificateRef [0] EXPLICIT INTEGER OPTIONAL }     -- delta only
//! ```
//!
//! The serial number is the leading 20 bytes of SHA-256 over a documented
//! concatenation (see [`base_serial_input`] / [`delta_serial_input`]), so
//! identical content yields identical serials by construction. The validity
//! window comes from issuer policy, never from the wall clock: re-issuing an
//! unchanged certificate must reproduce the previous bytes exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::complist::{self, ComponentChange, ComponentIdentifier, ComponentList};
use crate::crypto::{SignatureAlgorithm, SigningKey, VerifyingKey};
use crate::der::{self, DerError, Reader, Writer};
use crate::device::PlatformMeta;
use crate::measure::EkReference;

/// Documentation enterprise OID arc; substitute registry-assigned arcs via
/// [`IssuerPolicy::oid_arc`].
pub const DEFAULT_OID_ARC: &[u64] = &[1, 3, 6, 1, 4, 1, 32473, 1];

const ATTR_PLATFORM: u64 = 1;
const ATTR_COMPONENTS: u64 = 2;
const ATTR_CHANGES: u64 = 3;
const ATTR_POLICY: u64 = 4;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("base certificate must contain at least one component")]
    EmptyComponentList,
    #[error("delta certificate must contain at least one change")]
    EmptyChangeList,
    #[error("validity window is empty (not_before >= not_after)")]
    EmptyValidity,
    #[error("key/algorithm mismatch: key is {key}, tbs wants {tbs}")]
    AlgorithmMismatch {
        key: &'static str,
        tbs: &'static str,
    },
    #[error("der: {0}")]
    Der(#[from] DerError),
    #[error("decode: {0}")]
    Structure(String),
    #[error("delta {index} does not reference the previous certificate serial")]
    DanglingBaseRef { index: usize },
    #[error("certificate {index} in the delta chain is not a delta")]
    NotADelta { index: usize },
    #[error(transparent)]
    ConflictingChange(#[from] complist::ComplistError),
}

// ---------------------------------------------------------------------------
// Issuer policy
// ---------------------------------------------------------------------------

/// Fixed issuance parameters. The validity window is a policy constant so
/// that certificate bytes depend only on measured content and issuer key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerPolicy {
    pub issuer_name: String,
    /// Window start, UTC epoch seconds.
    pub not_before: i64,
    pub validity_secs: i64,
    pub oid_arc: Vec<u64>,
    pub policy_text: String,
}

impl Default for IssuerPolicy {
    fn default() -> IssuerPolicy {
        IssuerPolicy {
            issuer_name: "pacsim verifier".into(),
            not_before: 1_704_067_200, // 2024-01-01T00:00:00Z
            validity_secs: 10 * 365 * 24 * 3600,
            oid_arc: DEFAULT_OID_ARC.to_vec(),
            policy_text: "pacsim default policy".into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Certificate types
// ---------------------------------------------------------------------------

/// Binds the certificate to the device's endorsement key without issuing a
/// separate EK certificate: digest of the public point plus the device
/// binding signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holder {
    pub ek_public_digest: [u8; 32],
    pub binding_sig: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PacPayload {
    Base(Vec<ComponentIdentifier>),
    Delta(Vec<ComponentChange>),
}

impl PacPayload {
    pub fn is_delta(&self) -> bool {
        matches!(self, PacPayload::Delta(_))
    }
}

/// The to-be-signed certificate body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TbsPac {
    pub version: u64,
    pub holder: Holder,
    pub issuer: String,
    pub serial_number: [u8; 20],
    pub not_before: i64,
    pub not_after: i64,
    pub signature_algorithm: SignatureAlgorithm,
    pub platform: PlatformMeta,
    pub payload: PacPayload,
    pub policy_text: String,
    pub base_certificate_ref: Option<[u8; 20]>,
    pub oid_arc: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformAttributeCertificate {
    pub tbs: TbsPac,
    pub signature: Vec<u8>,
}

impl PlatformAttributeCertificate {
    pub fn serial_hex(&self) -> String {
        hex::encode(self.tbs.serial_number)
    }

    /// Component list carried by a base certificate.
    pub fn component_list(&self) -> Option<ComponentList> {
        match &self.tbs.payload {
            PacPayload::Base(components) => {
                ComponentList::new(self.tbs.platform.clone(), components.clone()).ok()
            }
            PacPayload::Delta(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PacMode {
    Base,
    Delta {
        base_serial: [u8; 20],
        changes: Vec<ComponentChange>,
    },
}

// ---------------------------------------------------------------------------
// Serial derivation
// ---------------------------------------------------------------------------

/// Serial preimage for a base certificate:
/// `canonical_json(list) || ek_public || 0x00`.
pub fn base_serial_input(cl: &ComponentList, ek_public: &[u8]) -> Vec<u8> {
    let mut input = complist::to_canonical_json(cl);
    input.extend_from_slice(ek_public);
    input.push(0x00);
    input
}

/// Serial preimage for a delta certificate:
/// `canonical_json(changes) || ek_public || 0x01 || base_serial`.
pub fn delta_serial_input(
    changes: &[ComponentChange],
    ek_public: &[u8],
    base_serial: &[u8; 20],
) -> Vec<u8> {
    let value = serde_json::to_value(changes).expect("changes serialize");
    let mut input = serde_json::to_string(&value).unwrap().into_bytes();
    input.extend_from_slice(ek_public);
    input.push(0x01);
    input.extend_from_slice(base_serial);
    input
}

fn serial_from_input(input: &[u8]) -> [u8; 20] {
    let digest: [u8; 32] = Sha256::digest(input).into();
    digest[..20].try_into().unwrap()
}

// ---------------------------------------------------------------------------
// Building and signing
// ---------------------------------------------------------------------------

/// Assembles the to-be-signed body for a base or delta certificate.
pub fn build_tbs(
    cl: &ComponentList,
    ek: &EkReference,
    issuer: &IssuerPolicy,
    mode: PacMode,
    algorithm: SignatureAlgorithm,
) -> Result<TbsPac, CertError> {
    if issuer.validity_secs <= 0 {
        return Err(CertError::EmptyValidity);
    }
    let ek_public_digest: [u8; 32] = Sha256::digest(&ek.ek_public).into();
    let (serial_number, payload, base_certificate_ref) = match mode {
        PacMode::Base => {
            if cl.components.is_empty() {
                return Err(CertError::EmptyComponentList);
            }
            let serial = serial_from_input(&base_serial_input(cl, &ek.ek_public));
            (serial, PacPayload::Base(cl.components.clone()), None)
        }
        PacMode::Delta {
            base_serial,
            changes,
        } => {
            if changes.is_empty() {
                return Err(CertError::EmptyChangeList);
            }
            let serial =
                serial_from_input(&delta_serial_input(&changes, &ek.ek_public, &base_serial));
            (serial, PacPayload::Delta(changes), Some(base_serial))
        }
    };
    Ok(TbsPac {
        version: 1,
        holder: Holder {
            ek_public_digest,
            binding_sig: ek.binding_sig.clone(),
        },
        issuer: issuer.issuer_name.clone(),
        serial_number,
        not_before: issuer.not_before,
        not_after: issuer.not_before + issuer.validity_secs,
        signature_algorithm: algorithm,
        platform: cl.platform.clone(),
        payload,
        policy_text: issuer.policy_text.clone(),
        base_certificate_ref,
        oid_arc: issuer.oid_arc.clone(),
    })
}

/// Signs the DER-encoded body. Deterministic: same tbs and key, same bytes.
pub fn sign_pac(tbs: &TbsPac, key: &SigningKey) -> Result<PlatformAttributeCertificate, CertError> {
    if key.algorithm() != tbs.signature_algorithm {
        return Err(CertError::AlgorithmMismatch {
            key: key.algorithm().name(),
            tbs: tbs.signature_algorithm.name(),
        });
    }
    let signature = key.sign(&encode_tbs(tbs));
    Ok(PlatformAttributeCertificate {
        tbs: tbs.clone(),
        signature,
    })
}

// ---------------------------------------------------------------------------
// DER encoding
// ---------------------------------------------------------------------------

fn write_algorithm(w: &mut Writer, alg: SignatureAlgorithm) {
    w.sequence(|w| {
        w.oid(alg.oid());
        if alg == SignatureAlgorithm::Rsa2048Pkcs15Sha256 {
            w.null();
        }
    });
}

fn write_component(w: &mut Writer, c: &ComponentIdentifier) {
    w.sequence(|w| {
        w.octet_string(&c.class.to_be_bytes());
        w.utf8_string(&c.registry);
        w.utf8_string(&c.model);
        w.utf8_string(&c.serial);
        w.boolean(c.field_replaceable);
        if let Some(m) = &c.manufacturer {
            w.constructed(der::tag_context(0), |w| w.utf8_string(m));
        }
        if let Some(r) = &c.revision {
            w.constructed(der::tag_context(1), |w| w.utf8_string(r));
        }
    });
}

fn write_change(w: &mut Writer, change: &ComponentChange) {
    w.sequence(|w| {
        w.enumerated(match change.kind {
            complist::ChangeKind::Added => 0,
            complist::ChangeKind::Removed => 1,
            complist::ChangeKind::Modified => 2,
        });
        write_component(w, &change.identifier);
        if let Some(s) = &change.old_serial {
            w.constructed(der::tag_context(0), |w| w.utf8_string(s));
        }
        if let Some(s) = &change.new_serial {
            w.constructed(der::tag_context(1), |w| w.utf8_string(s));
        }
    });
}

fn attribute_oid(arc: &[u64], leaf: u64) -> Vec<u64> {
    let mut oid = arc.to_vec();
    oid.push(leaf);
    oid
}

/// DER for the to-be-signed body; this is the exact signing input.
pub fn encode_tbs(tbs: &TbsPac) -> Vec<u8> {
    let mut w = Writer::new();
    w.sequence(|w| {
        w.uint(tbs.version);
        w.sequence(|w| {
            w.octet_string(&tbs.holder.ek_public_digest);
            w.octet_string(&tbs.holder.binding_sig);
        });
        w.utf8_string(&tbs.issuer);
        w.unsigned_be(&tbs.serial_number);
        w.sequence(|w| {
            w.generalized_time(tbs.not_before);
            w.generalized_time(tbs.not_after);
        });
        write_algorithm(w, tbs.signature_algorithm);
        w.sequence(|w| {
            w.sequence(|w| {
                w.oid(&attribute_oid(&tbs.oid_arc, ATTR_PLATFORM));
                w.sequence(|w| {
                    w.utf8_string(&tbs.platform.manufacturer);
                    w.utf8_string(&tbs.platform.model);
                    w.utf8_string(&tbs.platform.version);
                    w.utf8_string(&tbs.platform.serial);
                });
            });
            match &tbs.payload {
                PacPayload::Base(components) => w.sequence(|w| {
                    w.oid(&attribute_oid(&tbs.oid_arc, ATTR_COMPONENTS));
                    w.sequence(|w| {
                        for c in components {
                            write_component(w, c);
                        }
                    });
                }),
                PacPayload::Delta(changes) => w.sequence(|w| {
                    w.oid(&attribute_oid(&tbs.oid_arc, ATTR_CHANGES));
                    w.sequence(|w| {
                        for c in changes {
                            write_change(w, c);
                        }
                    });
                }),
            }
            w.sequence(|w| {
                w.oid(&attribute_oid(&tbs.oid_arc, ATTR_POLICY));
                w.utf8_string(&tbs.policy_text);
            });
        });
        if let Some(base) = &tbs.base_certificate_ref {
            w.constructed(der::tag_context(0), |w| w.unsigned_be(base));
        }
    });
    w.into_bytes()
}

/// Full certificate DER (`.pac.der` file content).
pub fn encode_der(pac: &PlatformAttributeCertificate) -> Vec<u8> {
    let mut w = Writer::new();
    w.sequence(|w| {
        w.raw(&encode_tbs(&pac.tbs));
        write_algorithm(w, pac.tbs.signature_algorithm);
        w.bit_string(&pac.signature);
    });
    w.into_bytes()
}

// ---------------------------------------------------------------------------
// DER decoding (strict)
// ---------------------------------------------------------------------------

fn read_algorithm(r: &mut Reader) -> Result<SignatureAlgorithm, CertError> {
    let mut seq = r.sequence()?;
    let oid = seq.oid()?;
    let alg = SignatureAlgorithm::from_oid(&oid)
        .ok_or_else(|| CertError::Structure(format!("unknown signature algorithm OID {oid:?}")))?;
    if alg == SignatureAlgorithm::Rsa2048Pkcs15Sha256 {
        seq.null()?;
    }
    seq.finish()?;
    Ok(alg)
}

fn read_serial(r: &mut Reader) -> Result<[u8; 20], CertError> {
    let magnitude = r.unsigned_be()?;
    if magnitude.len() > 20 {
        return Err(CertError::Structure(
            "serial number longer than 20 bytes".into(),
        ));
    }
    let mut serial = [0u8; 20];
    serial[20 - magnitude.len()..].copy_from_slice(magnitude);
    Ok(serial)
}

fn read_component(r: &mut Reader) -> Result<ComponentIdentifier, CertError> {
    let mut seq = r.sequence()?;
    let class_bytes = seq.octet_string()?;
    let class_arr: [u8; 4] = class_bytes
        .try_into()
        .map_err(|_| CertError::Structure("component class must be 4 bytes".into()))?;
    let registry = seq.utf8_string()?.to_string();
    let model = seq.utf8_string()?.to_string();
    let serial = seq.utf8_string()?.to_string();
    let field_replaceable = seq.boolean()?;
    let mut manufacturer = None;
    if seq.peek_tag() == Some(der::tag_context(0)) {
        let mut ctx = seq.constructed(der::tag_context(0))?;
        manufacturer = Some(ctx.utf8_string()?.to_string());
        ctx.finish()?;
    }
    let mut revision = None;
    if seq.peek_tag() == Some(der::tag_context(1)) {
        let mut ctx = seq.constructed(der::tag_context(1))?;
        revision = Some(ctx.utf8_string()?.to_string());
        ctx.finish()?;
    }
    seq.finish()?;
    Ok(ComponentIdentifier {
        class: u32::from_be_bytes(class_arr),
        registry,
        manufacturer,
        model,
        serial,
        revision,
        field_replaceable,
    })
}

fn read_change(r: &mut Reader) -> Result<ComponentChange, CertError> {
    let mut seq = r.sequence()?;
    let kind = match seq.enumerated()? {
        0 => complist::ChangeKind::Added,
        1 => complist::ChangeKind::Removed,
        2 => complist::ChangeKind::Modified,
        other => return Err(CertError::Structure(format!("unknown change kind {other}"))),
    };
    let identifier = read_component(&mut seq)?;
    let mut old_serial = None;
    if seq.peek_tag() == Some(der::tag_context(0)) {
        let mut ctx = seq.constructed(der::tag_context(0))?;
        old_serial = Some(ctx.utf8_string()?.to_string());
        ctx.finish()?;
    }
    let mut new_serial = None;
    if seq.peek_tag() == Some(der::tag_context(1)) {
        let mut ctx = seq.constructed(der::tag_context(1))?;
        new_serial = Some(ctx.utf8_string()?.to_string());
        ctx.finish()?;
    }
    seq.finish()?;
    Ok(ComponentChange {
        kind,
        identifier,
        old_serial,
        new_serial,
    })
}

fn attribute_arc(oid: &[u64], expected_leaf: u64) -> Result<Vec<u64>, CertError> {
    match oid.split_last() {
        Some((&leaf, prefix)) if leaf == expected_leaf && !prefix.is_empty() => Ok(prefix.to_vec()),
        _ => Err(CertError::Structure(format!(
            "attribute OID {oid:?} does not end in arc .{expected_leaf}"
        ))),
    }
}

fn decode_tbs(r: &mut Reader) -> Result<TbsPac, CertError> {
    let mut tbs = r.sequence()?;
    let version = tbs.uint()?;
    if version != 1 {
        return Err(CertError::Structure(format!(
            "unsupported version {version}"
        )));
    }
    let mut holder_seq = tbs.sequence()?;
    let ek_public_digest: [u8; 32] = holder_seq
        .octet_string()?
        .try_into()
        .map_err(|_| CertError::Structure("holder EK digest must be 32 bytes".into()))?;
    let binding_sig = holder_seq.octet_string()?.to_vec();
    holder_seq.finish()?;
    let issuer = tbs.utf8_string()?.to_string();
    let serial_number = read_serial(&mut tbs)?;
    let mut validity = tbs.sequence()?;
    let not_before = validity.generalized_time()?;
    let not_after = validity.generalized_time()?;
    validity.finish()?;
    if not_before >= not_after {
        return Err(CertError::Structure("validity window is empty".into()));
    }
    let signature_algorithm = read_algorithm(&mut tbs)?;

    let mut attrs = tbs.sequence()?;
    let mut platform_attr = attrs.sequence()?;
    let oid_arc = attribute_arc(&platform_attr.oid()?, ATTR_PLATFORM)?;
    let mut platform_seq = platform_attr.sequence()?;
    let platform = PlatformMeta {
        manufacturer: platform_seq.utf8_string()?.to_string(),
        model: platform_seq.utf8_string()?.to_string(),
        version: platform_seq.utf8_string()?.to_string(),
        serial: platform_seq.utf8_string()?.to_string(),
    };
    platform_seq.finish()?;
    platform_attr.finish()?;

    let mut payload_attr = attrs.sequence()?;
    let payload_oid = payload_attr.oid()?;
    let payload = match payload_oid.last() {
        Some(&ATTR_COMPONENTS) => {
            if attribute_arc(&payload_oid, ATTR_COMPONENTS)? != oid_arc {
                return Err(CertError::Structure("attribute OID arcs disagree".into()));
            }
            let mut list = payload_attr.sequence()?;
            let mut components = Vec::new();
            while !list.is_empty() {
                components.push(read_component(&mut list)?);
            }
            if components.is_empty() {
                return Err(CertError::Structure(
                    "base certificate has no components".into(),
                ));
            }
            PacPayload::Base(components)
        }
        Some(&ATTR_CHANGES) => {
            if attribute_arc(&payload_oid, ATTR_CHANGES)? != oid_arc {
                return Err(CertError::Structure("attribute OID arcs disagree".into()));
            }
            let mut list = payload_attr.sequence()?;
            let mut changes = Vec::new();
            while !list.is_empty() {
                changes.push(read_change(&mut list)?);
            }
            if changes.is_empty() {
                return Err(CertError::Structure(
                    "delta certificate has no changes".into(),
                ));
            }
            PacPayload::Delta(changes)
        }
        _ => {
            return Err(CertError::Structure(format!(
                "unexpected payload attribute OID {payload_oid:?}"
            )))
        }
    };
    payload_attr.finish()?;

    let mut policy_attr = attrs.sequence()?;
    if attribute_arc(&policy_attr.oid()?, ATTR_POLICY)? != oid_arc {
        return Err(CertError::Structure("attribute OID arcs disagree".into()));
    }
    let policy_text = policy_attr.utf8_string()?.to_string();
    policy_attr.finish()?;
    attrs.finish()?;

    let mut base_certificate_ref = None;
    if tbs.peek_tag() == Some(der::tag_context(0)) {
        let mut ctx = tbs.constructed(der::tag_context(0))?;
        base_certificate_ref = Some(read_serial(&mut ctx)?);
        ctx.finish()?;
    }
    tbs.finish()?;

    if payload.is_delta() != base_certificate_ref.is_some() {
        return Err(CertError::Structure(
            "delta payload and base certificate reference must appear together".into(),
        ));
    }

    Ok(TbsPac {
        version,
        holder: Holder {
            ek_public_digest,
            binding_sig,
        },
        issuer,
        serial_number,
        not_before,
        not_after,
        signature_algorithm,
        platform,
        payload,
        policy_text,
        base_certificate_ref,
        oid_arc,
    })
}

/// Strict decode; accepts exactly the canonical encodings [`encode_der`]
/// produces, so `decode(encode(p)) == p` and vice versa.
pub fn decode_der(bytes: &[u8]) -> Result<PlatformAttributeCertificate, CertError> {
    let mut top = Reader::new(bytes);
    let mut cert = top.sequence()?;
    top.finish()?;
    let tbs = decode_tbs(&mut cert)?;
    let outer_alg = read_algorithm(&mut cert)?;
    if outer_alg != tbs.signature_algorithm {
        return Err(CertError::Structure(
            "outer signature algorithm differs from tbs".into(),
        ));
    }
    let signature = cert.bit_string()?.to_vec();
    cert.finish()?;
    Ok(PlatformAttributeCertificate { tbs, signature })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ValidationFailure {
    SignatureInvalid,
    NotYetValid,
    Expired,
    AlgorithmMismatch,
    StructureInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationResult {
    pub failures: Vec<ValidationFailure>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks signature, validity window and structural invariants; reports
/// every failed check rather than stopping at the first.
pub fn validate_pac(
    pac: &PlatformAttributeCertificate,
    issuer_public: &VerifyingKey,
    now: i64,
) -> ValidationResult {
    let mut failures = Vec::new();

    if pac.tbs.not_before >= pac.tbs.not_after {
        failures.push(ValidationFailure::StructureInvalid(
            "empty validity window".into(),
        ));
    }
    match &pac.tbs.payload {
        PacPayload::Base(components) => {
            if components.is_empty() {
                failures.push(ValidationFailure::StructureInvalid(
                    "base certificate has no components".into(),
                ));
            }
            if pac.tbs.base_certificate_ref.is_some() {
                failures.push(ValidationFailure::StructureInvalid(
                    "base certificate carries a base reference".into(),
                ));
            }
        }
        PacPayload::Delta(changes) => {
            if changes.is_empty() {
                failures.push(ValidationFailure::StructureInvalid(
                    "delta certificate has no changes".into(),
                ));
            }
            if pac.tbs.base_certificate_ref.is_none() {
                failures.push(ValidationFailure::StructureInvalid(
                    "delta certificate lacks a base reference".into(),
                ));
            }
        }
    }

    if now < pac.tbs.not_before {
        failures.push(ValidationFailure::NotYetValid);
    }
    if now > pac.tbs.not_after {
        failures.push(ValidationFailure::Expired);
    }

    if issuer_public.algorithm() != pac.tbs.signature_algorithm {
        failures.push(ValidationFailure::AlgorithmMismatch);
    } else if !issuer_public.verify(&encode_tbs(&pac.tbs), &pac.signature) {
        failures.push(ValidationFailure::SignatureInvalid);
    }

    ValidationResult { failures }
}

// ---------------------------------------------------------------------------
// Issuer chain
// ---------------------------------------------------------------------------

/// Trusted root of the issuer chain.
#[derive(Debug, Clone)]
pub struct TrustAnchor {
    pub name: String,
    pub key: VerifyingKey,
}

/// Simulated CA certificate binding a name to a verification key, signed by
/// its parent issuer.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuerCertificate {
    pub subject: String,
    pub key: VerifyingKey,
    pub not_before: i64,
    pub not_after: i64,
    pub signature_algorithm: SignatureAlgorithm,
    pub signature: Vec<u8>,
}

impl IssuerCertificate {
    fn tbs_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.sequence(|w| {
            w.utf8_string(&self.subject);
            w.octet_string(&self.key.to_public_der());
            w.sequence(|w| {
                w.generalized_time(self.not_before);
                w.generalized_time(self.not_after);
            });
            write_algorithm(w, self.signature_algorithm);
        });
        w.into_bytes()
    }

    /// Issues a signed intermediate certificate.
    pub fn issue(
        subject: &str,
        key: &VerifyingKey,
        policy: &IssuerPolicy,
        parent: &SigningKey,
    ) -> IssuerCertificate {
        let mut cert = IssuerCertificate {
            subject: subject.to_string(),
            key: key.clone(),
            not_before: policy.not_before,
            not_after: policy.not_before + policy.validity_secs,
            signature_algorithm: parent.algorithm(),
            signature: Vec::new(),
        };
        cert.signature = parent.sign(&cert.tbs_bytes());
        cert
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainResult {
    Ok,
    /// Signature at `depth` does not verify under its parent key
    /// (0 = leaf, 1 = the intermediate closest to the leaf, ...).
    BrokenChain {
        depth: usize,
    },
    /// Validity window at `depth` does not cover `now`.
    Expired {
        depth: usize,
    },
}

/// Walks from the leaf through the intermediates to the anchor;
/// `intermediates[0]` is the issuer of
/// the leaf and the last intermediate must be signed by the anchor.
pub fn verify_chain(
    leaf: &PlatformAttributeCertificate,
    intermediates: &[IssuerCertificate],
    anchor: &TrustAnchor,
    now: i64,
) -> ChainResult {
    // intermediates first, top (anchor-signed) down
    for (i, cert) in intermediates.iter().enumerate().rev() {
        let depth = i + 1;
        let parent_key = if i + 1 == intermediates.len() {
            anchor.key.clone()
        } else {
            intermediates[i + 1].key.clone()
        };
        if now < cert.not_before || now > cert.not_after {
            return ChainResult::Expired { depth };
        }
        if parent_key.algorithm() != cert.signature_algorithm
            || !parent_key.verify(&cert.tbs_bytes(), &cert.signature)
        {
            return ChainResult::BrokenChain { depth };
        }
    }
    let leaf_parent = intermediates
        .first()
        .map(|c| c.key.clone())
        .unwrap_or_else(|| anchor.key.clone());
    if now < leaf.tbs.not_before || now > leaf.tbs.not_after {
        return ChainResult::Expired { depth: 0 };
    }
    if leaf_parent.algorithm() != leaf.tbs.signature_algorithm
        || !leaf_parent.verify(&encode_tbs(&leaf.tbs), &leaf.signature)
    {
        return ChainResult::BrokenChain { depth: 0 };
    }
    ChainResult::Ok
}

// ---------------------------------------------------------------------------
// Delta replay
// ---------------------------------------------------------------------------

/// Replays a delta chain on top of a base component list.
///
/// `base_serial` anchors the chain: the first delta must reference it, each
/// further delta the serial before it. Returns the effective component list.
pub fn apply_deltas(
    base: &ComponentList,
    base_serial: &[u8; 20],
    deltas: &[PlatformAttributeCertificate],
) -> Result<ComponentList, CertError> {
    let mut current = base.clone();
    let mut expected_ref = *base_serial;
    for (index, delta) in deltas.iter().enumerate() {
        let changes = match &delta.tbs.payload {
            PacPayload::Delta(changes) => changes,
            PacPayload::Base(_) => return Err(CertError::NotADelta { index }),
        };
        if delta.tbs.base_certificate_ref != Some(expected_ref) {
            return Err(CertError::DanglingBaseRef { index });
        }
        current = complist::apply_changes(&current, changes)?;
        expected_ref = delta.tbs.serial_number;
    }
    Ok(current)
}
