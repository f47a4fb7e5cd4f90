//! Verifier logic: drive a measurement session, issue the new certificate,
//! and render a verdict either by signature comparison or per-component
//! comparison.
//!
//! Reports serialize to canonical JSON and to a human-readable side-by-side
//! text form.

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certgen::{
    build_tbs, sign_pac, verify_chain, ChainResult, IssuerPolicy, PacMode,
    PlatformAttributeCertificate, TrustAnchor,
};
use crate::complist::{self, ComponentChange, ComponentIdentifier};
use crate::crypto::{p256, SigningKey};
use crate::device::{binding_message, DeviceState};
use crate::measure::{self, MeasurementLog, CLASS_PROCESSOR};
use crate::wire::{self, CertStore, Message, StoreError, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Signature,
    Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Unchanged,
    Tampered,
    Error,
}

/// One report finding: an opaque signature mismatch (signature approach) or
/// a concrete component change (component approach).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "finding")]
pub enum Finding {
    #[serde(rename = "SIGNATURE_MISMATCH")]
    SignatureMismatch,
    #[serde(rename = "COMPONENT")]
    Component(ComponentChange),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub approach: Approach,
    pub overall: Verdict,
    pub findings: Vec<Finding>,
    pub ground_truth_serial: String,
    pub new_cert_serial: String,
    /// UTC epoch seconds at verdict time; report metadata only.
    pub timestamp: i64,
}

impl VerificationReport {
    pub fn to_json(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string(&value).unwrap().into_bytes()
    }

    /// Figs-style side-by-side text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "approach            : {}\n",
            match self.approach {
                Approach::Signature => "signature",
                Approach::Component => "component",
            }
        ));
        out.push_str(&format!(
            "verdict             : {}\n",
            match self.overall {
                Verdict::Unchanged => "UNCHANGED",
                Verdict::Tampered => "TAMPERED",
                Verdict::Error => "ERROR",
            }
        ));
        out.push_str(&format!(
            "ground truth serial : {}\n",
            self.ground_truth_serial
        ));
        out.push_str(&format!("new cert serial     : {}\n", self.new_cert_serial));
        out.push_str(&format!("timestamp           : {}\n", self.timestamp));
        if self.findings.is_empty() {
            out.push_str("findings            : none\n");
        } else {
            out.push_str("findings            :\n");
            for finding in &self.findings {
                match finding {
                    Finding::SignatureMismatch => {
                        out.push_str("  signature mismatch (certificate bytes differ)\n");
                    }
                    Finding::Component(change) => {
                        out.push_str(&format!(
                            "  {:?} class={:08x} model={}\n",
                            change.kind, change.identifier.class, change.identifier.model
                        ));
                        if let Some(old) = &change.old_serial {
                            out.push_str(&format!("    ground truth : {old}\n"));
                        }
                        if let Some(new) = &change.new_serial {
                            out.push_str(&format!("    measured     : {new}\n"));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("certificates were signed with different algorithms")]
    AlgorithmMismatch,
    #[error("signature algorithm is not deterministic; use component comparison")]
    NonDeterministicAlgorithm,
    #[error("components do not correlate (class/model differ)")]
    CorrelationMismatch,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("no ground truth certificate for device {0}")]
    NoGroundTruth(String),
    #[error("prover channel timed out: {0}")]
    ChannelTimeout(String),
    #[error("EK binding invalid: {0}")]
    EkBindingInvalid(String),
    #[error("nonce mismatch between request and response")]
    NonceMismatch,
    #[error("prover returned error {code}: {detail}")]
    ProverError { code: String, detail: String },
    #[error("unexpected prover response: {0}")]
    BadResponse(String),
    #[error("issuer chain verification failed: {0:?}")]
    ChainInvalid(ChainResult),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Channel(#[from] WireError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Cert(#[from] crate::certgen::CertError),
    #[error("measurement log: {0}")]
    Log(#[from] measure::MeasureError),
    #[error(transparent)]
    Complist(#[from] complist::ComplistError),
}

// ---------------------------------------------------------------------------
// Comparison primitives
// ---------------------------------------------------------------------------

/// Whole-certificate comparison: true iff the signature bytes are equal.
/// Valid only for deterministic algorithms signed by the same key.
pub fn comparesig(
    gt: &PlatformAttributeCertificate,
    pa: &PlatformAttributeCertificate,
) -> Result<bool, CompareError> {
    if gt.tbs.signature_algorithm != pa.tbs.signature_algorithm {
        return Err(CompareError::AlgorithmMismatch);
    }
    if !gt.tbs.signature_algorithm.is_deterministic() {
        return Err(CompareError::NonDeterministicAlgorithm);
    }
    Ok(gt.signature == pa.signature)
}

/// Per-component comparison of correlated components: true iff serial and
/// revision are equal.
pub fn comparecomp(
    gt_comp: &ComponentIdentifier,
    pa_comp: &ComponentIdentifier,
) -> Result<bool, CompareError> {
    if gt_comp.class != pa_comp.class || gt_comp.model != pa_comp.model {
        return Err(CompareError::CorrelationMismatch);
    }
    Ok(gt_comp.serial == pa_comp.serial && gt_comp.revision == pa_comp.revision)
}

// ---------------------------------------------------------------------------
// Prover channels
// ---------------------------------------------------------------------------

/// One measurement round-trip to a prover.
pub trait ProverChannel {
    fn request(&mut self, nonce: Option<&[u8]>) -> Result<Message, VerifyError>;
}

/// TCP channel to a running prover daemon.
pub struct TcpProverChannel {
    pub endpoint: String,
    pub timeout: std::time::Duration,
}

impl TcpProverChannel {
    pub fn new(endpoint: impl Into<String>) -> TcpProverChannel {
        TcpProverChannel {
            endpoint: endpoint.into(),
            timeout: std::time::Duration::from_secs(10),
        }
    }
}

impl ProverChannel for TcpProverChannel {
    fn request(&mut self, nonce: Option<&[u8]>) -> Result<Message, VerifyError> {
        wire::request_measurement(&self.endpoint, nonce, self.timeout).map_err(|e| match e {
            WireError::Io(io)
                if matches!(
                    io.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                VerifyError::ChannelTimeout(self.endpoint.clone())
            }
            other => VerifyError::Channel(other),
        })
    }
}

/// Direct in-process channel to a device state; used by tests and the
/// bootstrap path that provisions the ground truth.
pub struct InProcChannel {
    pub state: DeviceState,
}

impl ProverChannel for InProcChannel {
    fn request(&mut self, nonce: Option<&[u8]>) -> Result<Message, VerifyError> {
        let hex_nonce = nonce.map(hex::encode);
        Ok(wire::measurement_message(
            &self.state,
            hex_nonce.as_deref(),
        )?)
    }
}

// ---------------------------------------------------------------------------
// Session plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoncePolicy {
    /// Run the protocol exactly as written, without freshness.
    #[default]
    Off,
    /// Send a random nonce and require a valid EK quote over it.
    Require,
}

fn parse_measurement_response(
    response: Message,
    sent_nonce: Option<&[u8]>,
) -> Result<MeasurementLog, VerifyError> {
    let (nonce, log_text, ek_public, binding_sig, quote_sig) = match response {
        Message::MeasurementLog {
            nonce,
            log,
            ek_public,
            binding_sig,
            quote_sig,
        } => (nonce, log, ek_public, binding_sig, quote_sig),
        Message::Error { code, detail } => return Err(VerifyError::ProverError { code, detail }),
        other => return Err(VerifyError::BadResponse(format!("{other:?}"))),
    };

    let log = measure::parse_rendered_log(&log_text)?;

    // message-level EK fields must agree with the log body
    if hex::encode(&log.ek_reference.ek_public) != ek_public
        || hex::encode(&log.ek_reference.binding_sig) != binding_sig
        || log.ek_reference.quote_sig.as_deref().map(hex::encode) != quote_sig
    {
        return Err(VerifyError::BadResponse(
            "EK reference fields disagree with the log body".into(),
        ));
    }

    if let Some(sent) = sent_nonce {
        let echoed = nonce
            .as_deref()
            .map(hex::decode)
            .transpose()
            .map_err(|_| VerifyError::BadResponse("response nonce is not hex".into()))?;
        if echoed.as_deref() != Some(sent) || log.nonce_echo.as_deref() != Some(sent) {
            return Err(VerifyError::NonceMismatch);
        }
    }
    Ok(log)
}

/// Chip id the endorsement key was bound to at provisioning, read from the
/// ground truth's processor component.
fn provisioned_chip_id(gt: &PlatformAttributeCertificate) -> Option<u64> {
    match &gt.tbs.payload {
        crate::certgen::PacPayload::Base(components) => components
            .iter()
            .find(|c| c.class == CLASS_PROCESSOR)
            .and_then(|c| c.serial.parse().ok()),
        crate::certgen::PacPayload::Delta(_) => None,
    }
}

/// EK checks run before any component comparison: the presented key must be
/// a valid curve point, hash to the ground-truth holder digest, carry a
/// binding signature over the provisioning-time chip id, and (in nonce mode)
/// a valid quote over the log digest and nonce.
///
/// A reported chip id that differs from the provisioned one is a component
/// finding for the comparison stage, not a binding failure; a foreign EK
/// fails here at the holder digest.
fn verify_ek_binding(
    gt: &PlatformAttributeCertificate,
    log: &MeasurementLog,
    nonce: Option<&[u8]>,
) -> Result<(), VerifyError> {
    let point = p256::Point::from_sec1(&log.ek_reference.ek_public)
        .map_err(|e| VerifyError::EkBindingInvalid(e.to_string()))?;

    let digest: [u8; 32] = Sha256::digest(&log.ek_reference.ek_public).into();
    if digest != gt.tbs.holder.ek_public_digest {
        return Err(VerifyError::EkBindingInvalid(
            "presented EK does not match the ground-truth holder digest".into(),
        ));
    }

    let chip_id = provisioned_chip_id(gt).ok_or_else(|| {
        VerifyError::EkBindingInvalid("ground truth carries no parseable chip id".into())
    })?;
    let binding = binding_message(&point, chip_id);
    let binding_sig = crate::crypto::ecdsa_signature_from_der(&log.ek_reference.binding_sig)
        .map_err(|e| VerifyError::EkBindingInvalid(e.to_string()))?;
    if !p256::verify(&point, &binding, &binding_sig) {
        return Err(VerifyError::EkBindingInvalid(
            "binding signature does not cover the reported chip id".into(),
        ));
    }

    if let Some(nonce) = nonce {
        let quote_der = log.ek_reference.quote_sig.as_ref().ok_or_else(|| {
            VerifyError::EkBindingInvalid("nonce was sent but no quote returned".into())
        })?;
        let quote = crate::crypto::ecdsa_signature_from_der(quote_der)
            .map_err(|e| VerifyError::EkBindingInvalid(e.to_string()))?;
        let mut msg = measure::quoted_digest(log).to_vec();
        msg.extend_from_slice(nonce);
        if !p256::verify(&point, &msg, &quote) {
            return Err(VerifyError::EkBindingInvalid(
                "quote signature invalid".into(),
            ));
        }
    }
    Ok(())
}

/// Issuance parameters reconstructed from the ground truth, so re-issuing an
/// unchanged snapshot reproduces the certificate bytes exactly.
fn policy_from_ground_truth(gt: &PlatformAttributeCertificate) -> IssuerPolicy {
    IssuerPolicy {
        issuer_name: gt.tbs.issuer.clone(),
        not_before: gt.tbs.not_before,
        validity_secs: gt.tbs.not_after - gt.tbs.not_before,
        oid_arc: gt.tbs.oid_arc.clone(),
        policy_text: gt.tbs.policy_text.clone(),
    }
}

fn now_epoch() -> i64 {
    chrono::Utc::now().timestamp()
}

/// Runs one verification session against a prover.
///
/// Sends the measurement request (with a nonce if the policy demands one),
/// builds and signs the new certificate, appends it to the store (also on
/// failing verdicts: the store is the evidentiary record), verifies the EK
/// binding and issuer chain, and only then compares.
pub fn run_verification(
    channel: &mut dyn ProverChannel,
    store: &CertStore,
    device_id: &str,
    approach: Approach,
    issuer_key: &SigningKey,
    nonce_policy: NoncePolicy,
) -> Result<VerificationReport, VerifyError> {
    let gt = match store.ground_truth(device_id) {
        Ok(gt) => gt,
        Err(StoreError::UnknownDevice(_)) => {
            return Err(VerifyError::NoGroundTruth(device_id.to_string()))
        }
        Err(e) => return Err(e.into()),
    };

    let nonce: Option<Vec<u8>> = match nonce_policy {
        NoncePolicy::Off => None,
        NoncePolicy::Require => {
            let mut bytes = [0u8; 16];
            rand::RngCore::fill_bytes(&mut rand::thread_rng(), &mut bytes);
            Some(bytes.to_vec())
        }
    };

    let response = channel.request(nonce.as_deref())?;
    let log = parse_measurement_response(response, nonce.as_deref())?;

    let new_list = complist::parse_log(&measure::render_log(&log), &gt.tbs.platform)?;
    let policy = policy_from_ground_truth(&gt);
    let tbs = build_tbs(
        &new_list,
        &log.ek_reference,
        &policy,
        PacMode::Base,
        issuer_key.algorithm(),
    )?;
    let pac = sign_pac(&tbs, issuer_key)?;
    store.append_cert(device_id, &pac)?;

    // authenticity checks precede any comparison
    verify_ek_binding(&gt, &log, nonce.as_deref())?;
    let anchor = TrustAnchor {
        name: gt.tbs.issuer.clone(),
        key: issuer_key.verifying_key(),
    };
    let now = now_epoch();
    for cert in [&gt, &pac] {
        match verify_chain(cert, &[], &anchor, now) {
            ChainResult::Ok => {}
            bad => return Err(VerifyError::ChainInvalid(bad)),
        }
    }

    let findings = match approach {
        Approach::Signature => {
            if comparesig(&gt, &pac)? {
                Vec::new()
            } else {
                vec![Finding::SignatureMismatch]
            }
        }
        Approach::Component => {
            let gt_list = gt.component_list().ok_or_else(|| {
                VerifyError::BadResponse("ground truth is not a base certificate".into())
            })?;
            let mut findings = Vec::new();
            for change in complist::diff(&gt_list, &new_list) {
                let confirmed = match change.kind {
                    complist::ChangeKind::Modified => {
                        let gt_comp = gt_list
                            .components
                            .iter()
                            .find(|c| {
                                c.class == change.identifier.class
                                    && c.model == change.identifier.model
                                    && Some(&c.serial) == change.old_serial.as_ref()
                            })
                            .cloned();
                        match gt_comp {
                            Some(gt_comp) => !comparecomp(&gt_comp, &change.identifier)?,
                            None => true,
                        }
                    }
                    // added or removed components have no counterpart to compare
                    _ => true,
                };
                if confirmed {
                    findings.push(Finding::Component(change));
                }
            }
            findings
        }
    };

    let overall = if findings.is_empty() {
        Verdict::Unchanged
    } else {
        Verdict::Tampered
    };
    Ok(VerificationReport {
        approach,
        overall,
        findings,
        ground_truth_serial: gt.serial_hex(),
        new_cert_serial: pac.serial_hex(),
        timestamp: now,
    })
}

/// Stored certificate history for a device: ground truth first, then
/// issuance order.
pub fn history(
    store: &CertStore,
    device_id: &str,
) -> Result<Vec<PlatformAttributeCertificate>, VerifyError> {
    Ok(store.history(device_id)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certgen::PacPayload;
    use crate::crypto::SignatureAlgorithm;
    use crate::device::testutil::{sample_device, sample_spec};
    use crate::device::{new_device, swap_identity, tamper_elf, tamper_gpio, MacAddr};
    use crate::measure::{CLASS_ELF, CLASS_FIRMWARE, CLASS_GPIO};
    use crate::wire::device_id_for_ek;

    fn issuer() -> SigningKey {
        SigningKey::generate(SignatureAlgorithm::EcdsaP256Sha256, &[0x71u8; 32]).unwrap()
    }

    fn attest(
        store: &CertStore,
        id: &str,
        key: &SigningKey,
        state: &DeviceState,
        approach: Approach,
    ) -> VerificationReport {
        let mut channel = InProcChannel {
            state: state.clone(),
        };
        run_verification(&mut channel, store, id, approach, key, NoncePolicy::Off).unwrap()
    }

    /// Provisions a store with the device's ground truth; returns device id.
    fn provision(store: &CertStore, dev: &DeviceState, key: &SigningKey) -> String {
        let log = measure::measure(dev, None);
        let cl = complist::parse_log(&measure::render_log(&log), &dev.platform_meta).unwrap();
        let tbs = build_tbs(
            &cl,
            &log.ek_reference,
            &IssuerPolicy::default(),
            PacMode::Base,
            key.algorithm(),
        )
        .unwrap();
        let pac = sign_pac(&tbs, key).unwrap();
        let device_id = device_id_for_ek(&log.ek_reference.ek_public);
        store.init_device(&device_id, key, &pac).unwrap();
        device_id
    }

    #[test]
    fn unmodified_device_unchanged_under_both_approaches() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        for approach in [Approach::Signature, Approach::Component] {
            let mut channel = InProcChannel { state: dev.clone() };
            let report =
                run_verification(&mut channel, &store, &id, approach, &key, NoncePolicy::Off)
                    .unwrap();
            assert_eq!(report.overall, Verdict::Unchanged, "{report:?}");
            assert!(report.findings.is_empty());
            assert_eq!(report.ground_truth_serial, report.new_cert_serial);
        }
        // ground truth + 2 attestations
        assert_eq!(history(&store, &id).unwrap().len(), 3);
    }

    #[test]
    fn gpio_tamper_detected_with_exact_class() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let tampered = tamper_gpio(&tamper_gpio(&dev, 2, 1).unwrap(), 4, 1).unwrap();
        let mut channel = InProcChannel { state: tampered };
        let report = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Off,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Tampered);
        let classes: Vec<u32> = report
            .findings
            .iter()
            .map(|f| match f {
                Finding::Component(c) => c.identifier.class,
                Finding::SignatureMismatch => panic!("unexpected signature finding"),
            })
            .collect();
        assert_eq!(classes, vec![CLASS_GPIO]);
    }

    #[test]
    fn elf_tamper_flags_elf_and_firmware() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let tampered = tamper_elf(&dev, &[0xAB; 64]).unwrap();
        let mut channel = InProcChannel { state: tampered };
        let report = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Off,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Tampered);
        let mut classes: Vec<u32> = report
            .findings
            .iter()
            .filter_map(|f| match f {
                Finding::Component(c) => Some(c.identifier.class),
                Finding::SignatureMismatch => None,
            })
            .collect();
        classes.sort();
        classes.dedup();
        assert_eq!(classes, vec![CLASS_ELF, CLASS_FIRMWARE]);
    }

    #[test]
    fn signature_approach_reports_single_opaque_finding() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let tampered = tamper_gpio(&dev, 2, 1).unwrap();
        let mut channel = InProcChannel { state: tampered };
        let report = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Signature,
            &key,
            NoncePolicy::Off,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Tampered);
        assert_eq!(report.findings, vec![Finding::SignatureMismatch]);
    }

    #[test]
    fn identity_clone_with_foreign_ek_is_rejected_before_comparison() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let victim = sample_device();
        let key = issuer();
        let id = provision(&store, &victim, &key);

        // counterfeit: different secure element, victim's identity
        let mut clone_spec = sample_spec();
        clone_spec.ek_seed = hex::encode([0xC0u8; 32]);
        let clone = new_device(&clone_spec).unwrap();

        let mut channel = InProcChannel { state: clone };
        let err = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Off,
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::EkBindingInvalid(_)), "{err}");

        // the failed session still left its certificate in the store
        assert_eq!(history(&store, &id).unwrap().len(), 2);
    }

    #[test]
    fn identity_swap_on_genuine_hardware_is_tampering_not_counterfeiting() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        // same secure element, swapped identity: the EK still matches the
        // ground truth, so the session proceeds to comparison and flags the
        // identity components
        let swapped = swap_identity(
            &dev,
            MacAddr::parse("02:00:00:00:00:01").unwrap(),
            MacAddr::parse("02:00:00:00:00:02").unwrap(),
            MacAddr::parse("02:00:00:00:00:03").unwrap(),
            424242,
        )
        .unwrap();
        let mut channel = InProcChannel { state: swapped };
        let report = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Off,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Tampered);
    }

    #[test]
    fn every_tamper_op_detected_with_exact_classes() {
        use crate::measure::{CLASS_BLUETOOTH, CLASS_ETHERNET, CLASS_WIFI};

        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let scenarios: Vec<(&str, DeviceState, Vec<u32>)> = vec![
            ("gpio", tamper_gpio(&dev, 2, 1).unwrap(), vec![CLASS_GPIO]),
            (
                "firmware",
                crate::device::tamper_firmware(&dev, 0, &[dev.firmware_image[0] ^ 0xff]).unwrap(),
                vec![CLASS_FIRMWARE],
            ),
            (
                "elf",
                tamper_elf(&dev, b"payload").unwrap(),
                vec![CLASS_ELF, CLASS_FIRMWARE],
            ),
            (
                "identity",
                swap_identity(
                    &dev,
                    MacAddr::parse("02:00:00:00:00:01").unwrap(),
                    MacAddr::parse("02:00:00:00:00:02").unwrap(),
                    MacAddr::parse("02:00:00:00:00:03").unwrap(),
                    31337,
                )
                .unwrap(),
                vec![CLASS_PROCESSOR, CLASS_ETHERNET, CLASS_WIFI, CLASS_BLUETOOTH],
            ),
        ];

        for (name, state, mut expected) in scenarios {
            expected.sort();
            let report = attest(&store, &id, &key, &state, Approach::Component);
            assert_eq!(report.overall, Verdict::Tampered, "{name}");
            let mut classes: Vec<u32> = report
                .findings
                .iter()
                .filter_map(|f| match f {
                    Finding::Component(c) => Some(c.identifier.class),
                    Finding::SignatureMismatch => None,
                })
                .collect();
            classes.sort();
            classes.dedup();
            assert_eq!(classes, expected, "{name}: wrong classes flagged");

            let report = attest(&store, &id, &key, &state, Approach::Signature);
            assert_eq!(report.overall, Verdict::Tampered, "{name} via signature");
        }
    }

    #[test]
    fn nonce_policy_round_trip_and_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let mut channel = InProcChannel { state: dev.clone() };
        let report = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Require,
        )
        .unwrap();
        assert_eq!(report.overall, Verdict::Unchanged);

        // a channel that strips the nonce must be rejected
        struct NonceStripper(DeviceState);
        impl ProverChannel for NonceStripper {
            fn request(&mut self, _nonce: Option<&[u8]>) -> Result<Message, VerifyError> {
                Ok(wire::measurement_message(&self.0, None).unwrap())
            }
        }
        let err = run_verification(
            &mut NonceStripper(dev),
            &store,
            &id,
            Approach::Component,
            &key,
            NoncePolicy::Require,
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::NonceMismatch));
    }

    #[test]
    fn silent_prover_times_out() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        // listener that accepts and never answers
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        std::thread::spawn(move || {
            let conn = listener.accept();
            std::thread::sleep(std::time::Duration::from_secs(5));
            drop(conn);
        });

        let mut channel = TcpProverChannel::new(addr);
        channel.timeout = std::time::Duration::from_millis(200);
        let err = run_verification(
            &mut channel,
            &store,
            &id,
            Approach::Signature,
            &key,
            NoncePolicy::Off,
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::ChannelTimeout(_)), "{err}");
    }

    #[test]
    fn missing_ground_truth_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let mut channel = InProcChannel { state: dev };
        let err = run_verification(
            &mut channel,
            &store,
            "0123456789abcdef",
            Approach::Signature,
            &key,
            NoncePolicy::Off,
        )
        .unwrap_err();
        assert!(matches!(err, VerifyError::NoGroundTruth(_)));
    }

    #[test]
    fn approaches_agree_on_verdicts() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);

        let scenarios: Vec<(DeviceState, bool)> = vec![
            (dev.clone(), false),
            (tamper_gpio(&dev, 2, 1).unwrap(), true),
            (
                crate::device::tamper_firmware(&dev, 1, &[0x00]).unwrap(),
                true,
            ),
            (tamper_elf(&dev, b"extra").unwrap(), true),
        ];
        for (state, expect_tampered) in scenarios {
            let mut verdicts = Vec::new();
            for approach in [Approach::Signature, Approach::Component] {
                let mut channel = InProcChannel {
                    state: state.clone(),
                };
                let report =
                    run_verification(&mut channel, &store, &id, approach, &key, NoncePolicy::Off)
                        .unwrap();
                verdicts.push(report.overall);
            }
            assert_eq!(verdicts[0], verdicts[1], "approaches disagree");
            assert_eq!(verdicts[0] == Verdict::Tampered, expect_tampered);
        }
    }

    #[test]
    fn comparesig_requires_matching_algorithms() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let dev = sample_device();
        let key = issuer();
        let id = provision(&store, &dev, &key);
        let gt = store.ground_truth(&id).unwrap();

        assert_eq!(comparesig(&gt, &gt), Ok(true));

        let mut other = gt.clone();
        other.tbs.signature_algorithm = SignatureAlgorithm::Rsa2048Pkcs15Sha256;
        assert_eq!(
            comparesig(&gt, &other),
            Err(CompareError::AlgorithmMismatch)
        );
    }

    #[test]
    fn comparecomp_on_correlated_components() {
        let dev = sample_device();
        let log = measure::measure(&dev, None);
        let cl = complist::parse_log(&measure::render_log(&log), &dev.platform_meta).unwrap();
        let fw = cl
            .components
            .iter()
            .find(|c| c.class == CLASS_FIRMWARE)
            .unwrap();
        assert_eq!(comparecomp(fw, fw), Ok(true));

        let mut changed = fw.clone();
        changed.serial = "deadbeef".into();
        assert_eq!(comparecomp(fw, &changed), Ok(false));

        let mut revisioned = fw.clone();
        revisioned.revision = Some("r2".into());
        assert_eq!(comparecomp(fw, &revisioned), Ok(false));

        let other = cl
            .components
            .iter()
            .find(|c| c.class == CLASS_GPIO)
            .unwrap();
        assert_eq!(
            comparecomp(fw, other),
            Err(CompareError::CorrelationMismatch)
        );
    }

    #[test]
    fn ground_truth_must_be_base() {
        let dev = sample_device();
        let key = issuer();
        let log = measure::measure(&dev, None);
        let cl = complist::parse_log(&measure::render_log(&log), &dev.platform_meta).unwrap();
        let tbs = build_tbs(
            &cl,
            &log.ek_reference,
            &IssuerPolicy::default(),
            PacMode::Base,
            key.algorithm(),
        )
        .unwrap();
        let pac = sign_pac(&tbs, &key).unwrap();
        assert!(matches!(pac.tbs.payload, PacPayload::Base(_)));
        assert!(pac.component_list().is_some());
    }
}
