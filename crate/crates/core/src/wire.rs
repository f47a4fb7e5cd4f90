//! Transport between prover and verifier, the prover daemon, and the
//! verifier-side certificate store.
//!
//! Wire format: each message is one frame, a 4-byte big-endian payload length
//! followed by that many bytes of UTF-8 JSON. Frames above 1 MiB are
//! rejected. Message schema (tagged by `type`):
//!
//! ```json
//! {"type":"ATTEST_REQUEST","nonce":"<hex, optional>"}
//! {"type":"MEASUREMENT_LOG","nonce":"<hex, optional>","log":"<rendered log>",
//!  "ek_public":"<hex>","binding_sig":"<hex>","quote_sig":"<hex, optional>"}
//! {"type":"ERROR","code":"<symbol>","detail":"<text>"}
//! ```
//!
//! The store root defaults to the `PACSIM_STORE` environment variable.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certgen::{decode_der, encode_der, PlatformAttributeCertificate};
use crate::crypto::{SignatureAlgorithm, SigningKey};
use crate::device::DeviceState;
use crate::measure::{measure, render_log};

/// Upper bound on frame payloads; the largest legitimate payload (log plus
/// EK reference) stays well under 8 KiB.
pub const MAX_FRAME_LEN: u32 = 1024 * 1024;

/// Environment variable naming the default store root.
pub const STORE_ENV: &str = "PACSIM_STORE";

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame length {0} exceeds the 1 MiB cap")]
    FrameTooLarge(u32),
    #[error("frame payload is not valid UTF-8")]
    FrameNotUtf8,
    #[error("malformed message: {0}")]
    BadMessage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("store has no device {0}")]
    UnknownDevice(String),
    #[error("device {0} already has a ground-truth certificate")]
    GroundTruthExists(String),
    #[error("certificate file {0} already exists (store is append-only)")]
    AppendOnly(PathBuf),
    #[error("store metadata: {0}")]
    BadMeta(String),
    #[error("stored certificate {path}: {reason}")]
    BadCertificate { path: PathBuf, reason: String },
    #[error("store root is not set (pass --store or set {STORE_ENV})")]
    NoRoot,
}

// ---------------------------------------------------------------------------
// Framing
// ---------------------------------------------------------------------------

/// Encodes one frame: length prefix plus payload.
pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>, WireError> {
    let len: u32 = payload
        .len()
        .try_into()
        .map_err(|_| WireError::FrameTooLarge(u32::MAX))?;
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(len));
    }
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Reads one frame from a stream. Returns `None` on clean EOF before the
/// first length byte.
pub fn read_frame(stream: &mut impl Read) -> Result<Option<Vec<u8>>, WireError> {
    let mut len_buf = [0u8; 4];
    match stream.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    stream.read_exact(&mut payload)?;
    Ok(Some(payload))
}

pub fn write_frame(stream: &mut impl Write, payload: &[u8]) -> Result<(), WireError> {
    let frame = encode_frame(payload)?;
    stream.write_all(&frame)?;
    stream.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    #[serde(rename = "ATTEST_REQUEST")]
    AttestRequest {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        nonce: Option<String>,
    },
    #[serde(rename = "MEASUREMENT_LOG")]
    MeasurementLog {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        nonce: Option<String>,
        log: String,
        ek_public: String,
        binding_sig: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        quote_sig: Option<String>,
    },
    #[serde(rename = "ERROR")]
    Error { code: String, detail: String },
}

impl Message {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("messages serialize")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Message, WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::FrameNotUtf8)?;
        serde_json::from_str(text).map_err(|e| WireError::BadMessage(e.to_string()))
    }
}

/// Builds the measurement response for one request; `nonce` is hex.
pub fn measurement_message(state: &DeviceState, nonce: Option<&str>) -> Result<Message, WireError> {
    let nonce_bytes = match nonce {
        None => None,
        Some(hex_str) => Some(
            hex::decode(hex_str)
                .map_err(|e| WireError::BadMessage(format!("nonce is not hex: {e}")))?,
        ),
    };
    let log = measure(state, nonce_bytes.as_deref());
    Ok(Message::MeasurementLog {
        nonce: nonce.map(str::to_string),
        log: render_log(&log),
        ek_public: hex::encode(&log.ek_reference.ek_public),
        binding_sig: hex::encode(&log.ek_reference.binding_sig),
        quote_sig: log.ek_reference.quote_sig.as_deref().map(hex::encode),
    })
}

fn serve_connection(state: &DeviceState, stream: &mut TcpStream) {
    loop {
        let reply = match read_frame(stream) {
            Ok(None) => return,
            Ok(Some(payload)) => match Message::from_json(&payload) {
                Ok(Message::AttestRequest { nonce }) => {
                    match measurement_message(state, nonce.as_deref()) {
                        Ok(msg) => msg,
                        Err(e) => Message::Error {
                            code: "BadRequest".into(),
                            detail: e.to_string(),
                        },
                    }
                }
                Ok(other) => Message::Error {
                    code: "UnexpectedType".into(),
                    detail: format!("prover cannot handle {other:?}"),
                },
                Err(e) => Message::Error {
                    code: "BadMessage".into(),
                    detail: e.to_string(),
                },
            },
            Err(WireError::FrameTooLarge(len)) => Message::Error {
                code: "FrameTooLarge".into(),
                detail: format!("frame of {len} bytes exceeds the cap"),
            },
            Err(_) => return,
        };
        let fatal = matches!(reply, Message::Error { .. });
        if write_frame(stream, &reply.to_json()).is_err() {
            return;
        }
        if fatal {
            return; // close after answering a malformed frame
        }
    }
}

/// Runs the prover daemon: answers each well-formed ATTEST_REQUEST with a
/// MEASUREMENT_LOG. Connections are handled sequentially, like a single MCU.
pub fn serve_prover(state: &DeviceState, endpoint: impl ToSocketAddrs) -> Result<(), WireError> {
    let listener = TcpListener::bind(endpoint)?;
    loop {
        let (mut stream, _peer) = listener.accept()?;
        serve_connection(state, &mut stream);
    }
}

/// Binds the listener first so callers can learn the ephemeral port, then
/// serves exactly like [`serve_prover`].
pub fn serve_prover_on(state: &DeviceState, listener: TcpListener) -> Result<(), WireError> {
    loop {
        let (mut stream, _peer) = listener.accept()?;
        serve_connection(state, &mut stream);
    }
}

/// One measurement request over TCP with a read timeout.
pub fn request_measurement(
    endpoint: &str,
    nonce: Option<&[u8]>,
    timeout: Duration,
) -> Result<Message, WireError> {
    let mut stream = TcpStream::connect(endpoint)?;
    stream.set_read_timeout(Some(timeout))?;
    let request = Message::AttestRequest {
        nonce: nonce.map(hex::encode),
    };
    write_frame(&mut stream, &request.to_json())?;
    match read_frame(&mut stream)? {
        Some(payload) => Message::from_json(&payload),
        None => Err(WireError::BadMessage("prover closed the connection".into())),
    }
}

// ---------------------------------------------------------------------------
// Certificate store
// ---------------------------------------------------------------------------

/// Directory layout, one subdirectory per device id:
///
/// ```text
/// <root>/<device_id>/meta.json          {"algorithm":..,"ground_truth":..}
/// <root>/<device_id>/signing.key.der
/// <root>/<device_id>/signing.pub.der
/// <root>/<device_id>/certs/NNNN_<serial16>.pac.der
/// ```
///
/// Certificate files are append-only: index 0000 is the ground truth, later
/// indices follow issuance order, and existing files are never rewritten.
pub struct CertStore {
    root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreMeta {
    algorithm: String,
    ground_truth: String,
}

/// Device identifier: first 16 hex chars of SHA-256 over the SEC1 EK point.
pub fn device_id_for_ek(ek_public: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(ek_public))[..16].to_string()
}

impl CertStore {
    pub fn open(root: impl Into<PathBuf>) -> CertStore {
        CertStore { root: root.into() }
    }

    /// Store root from the `PACSIM_STORE` environment variable.
    pub fn from_env() -> Result<CertStore, StoreError> {
        match std::env::var_os(STORE_ENV) {
            Some(root) => Ok(CertStore::open(PathBuf::from(root))),
            None => Err(StoreError::NoRoot),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn device_dir(&self, device_id: &str) -> PathBuf {
        self.root.join(device_id)
    }

    fn certs_dir(&self, device_id: &str) -> PathBuf {
        self.device_dir(device_id).join("certs")
    }

    fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
        move |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn device_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
            Err(e) => {
                return Err(StoreError::Io {
                    path: self.root.clone(),
                    source: e,
                })
            }
        };
        for entry in entries {
            let entry = entry.map_err(Self::io_err(&self.root))?;
            if entry.path().join("meta.json").is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// The sole device in the store, if exactly one exists.
    pub fn sole_device(&self) -> Result<String, StoreError> {
        let ids = self.device_ids()?;
        match ids.as_slice() {
            [single] => Ok(single.clone()),
            [] => Err(StoreError::UnknownDevice("<store is empty>".into())),
            _ => Err(StoreError::BadMeta(format!(
                "store has {} devices; pick one with --device",
                ids.len()
            ))),
        }
    }

    fn read_meta(&self, device_id: &str) -> Result<StoreMeta, StoreError> {
        let path = self.device_dir(device_id).join("meta.json");
        if !path.is_file() {
            return Err(StoreError::UnknownDevice(device_id.to_string()));
        }
        let text = std::fs::read_to_string(&path).map_err(Self::io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::BadMeta(e.to_string()))
    }

    /// Provisions a device entry with its signing key and ground truth.
    pub fn init_device(
        &self,
        device_id: &str,
        key: &SigningKey,
        ground_truth: &PlatformAttributeCertificate,
    ) -> Result<PathBuf, StoreError> {
        let dir = self.device_dir(device_id);
        if dir.join("meta.json").exists() {
            return Err(StoreError::GroundTruthExists(device_id.to_string()));
        }
        let certs = self.certs_dir(device_id);
        std::fs::create_dir_all(&certs).map_err(Self::io_err(&certs))?;

        let key_path = dir.join("signing.key.der");
        std::fs::write(&key_path, key.to_private_der()).map_err(Self::io_err(&key_path))?;
        let pub_path = dir.join("signing.pub.der");
        std::fs::write(&pub_path, key.verifying_key().to_public_der())
            .map_err(Self::io_err(&pub_path))?;

        let cert_path = self.append_cert_at(device_id, 0, ground_truth)?;
        let meta = StoreMeta {
            algorithm: key.algorithm().name().to_string(),
            ground_truth: cert_path
                .file_name()
                .expect("cert file name")
                .to_string_lossy()
                .into_owned(),
        };
        let meta_path = dir.join("meta.json");
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta).unwrap())
            .map_err(Self::io_err(&meta_path))?;
        Ok(cert_path)
    }

    fn cert_files(&self, device_id: &str) -> Result<Vec<PathBuf>, StoreError> {
        let dir = self.certs_dir(device_id);
        let mut files = Vec::new();
        let entries = match std::fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(files),
            Err(e) => {
                return Err(StoreError::Io {
                    path: dir,
                    source: e,
                })
            }
        };
        for entry in entries {
            let entry = entry.map_err(Self::io_err(&dir))?;
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "der") {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    }

    fn append_cert_at(
        &self,
        device_id: &str,
        index: usize,
        pac: &PlatformAttributeCertificate,
    ) -> Result<PathBuf, StoreError> {
        let name = format!("{index:04}_{}.pac.der", &pac.serial_hex()[..16]);
        let path = self.certs_dir(device_id).join(name);
        if path.exists() {
            return Err(StoreError::AppendOnly(path));
        }
        std::fs::write(&path, encode_der(pac)).map_err(Self::io_err(&path))?;
        Ok(path)
    }

    /// Appends a certificate after the current tail.
    pub fn append_cert(
        &self,
        device_id: &str,
        pac: &PlatformAttributeCertificate,
    ) -> Result<PathBuf, StoreError> {
        self.read_meta(device_id)?;
        let next = self.cert_files(device_id)?.len();
        self.append_cert_at(device_id, next, pac)
    }

    fn load_cert(path: &Path) -> Result<PlatformAttributeCertificate, StoreError> {
        let bytes = std::fs::read(path).map_err(Self::io_err(path))?;
        decode_der(&bytes).map_err(|e| StoreError::BadCertificate {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Ground truth certificate for a device.
    pub fn ground_truth(
        &self,
        device_id: &str,
    ) -> Result<PlatformAttributeCertificate, StoreError> {
        let meta = self.read_meta(device_id)?;
        let path = self.certs_dir(device_id).join(&meta.ground_truth);
        Self::load_cert(&path)
    }

    /// All certificates, ground truth first, then issuance order.
    pub fn history(
        &self,
        device_id: &str,
    ) -> Result<Vec<PlatformAttributeCertificate>, StoreError> {
        self.read_meta(device_id)?;
        self.cert_files(device_id)?
            .iter()
            .map(|p| Self::load_cert(p))
            .collect()
    }

    /// File paths backing [`CertStore::history`], in the same order.
    pub fn history_paths(&self, device_id: &str) -> Result<Vec<PathBuf>, StoreError> {
        self.read_meta(device_id)?;
        self.cert_files(device_id)
    }

    /// Writes the canonical component inventory alongside the device's
    /// certificates (`<device_id>.componentlist.json`).
    pub fn save_componentlist(
        &self,
        device_id: &str,
        canonical_json: &[u8],
    ) -> Result<PathBuf, StoreError> {
        self.read_meta(device_id)?;
        let path = self
            .device_dir(device_id)
            .join(format!("{device_id}.componentlist.json"));
        std::fs::write(&path, canonical_json).map_err(Self::io_err(&path))?;
        Ok(path)
    }

    pub fn signing_key(&self, device_id: &str) -> Result<SigningKey, StoreError> {
        let meta = self.read_meta(device_id)?;
        let path = self.device_dir(device_id).join("signing.key.der");
        let bytes = std::fs::read(&path).map_err(Self::io_err(&path))?;
        let key =
            SigningKey::from_private_der(&bytes).map_err(|e| StoreError::BadMeta(e.to_string()))?;
        let expected = SignatureAlgorithm::from_name(&meta.algorithm)
            .ok_or_else(|| StoreError::BadMeta(format!("unknown algorithm {}", meta.algorithm)))?;
        if key.algorithm() != expected {
            return Err(StoreError::BadMeta(format!(
                "key algorithm {} does not match metadata {}",
                key.algorithm().name(),
                meta.algorithm
            )));
        }
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certgen::{build_tbs, sign_pac, IssuerPolicy, PacMode};
    use crate::complist::parse_log;
    use crate::device::testutil::sample_device;
    use proptest::prelude::*;

    fn sample_pac(key: &SigningKey) -> PlatformAttributeCertificate {
        let dev = sample_device();
        let log = measure(&dev, None);
        let cl = parse_log(&render_log(&log), &dev.platform_meta).unwrap();
        let tbs = build_tbs(
            &cl,
            &log.ek_reference,
            &IssuerPolicy::default(),
            PacMode::Base,
            key.algorithm(),
        )
        .unwrap();
        sign_pac(&tbs, key).unwrap()
    }

    #[test]
    fn frame_round_trip() {
        let payload = br#"{"type":"ATTEST_REQUEST"}"#;
        let framed = encode_frame(payload).unwrap();
        assert_eq!(&framed[..4], &(payload.len() as u32).to_be_bytes());
        let mut cursor = std::io::Cursor::new(framed);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), payload);
        assert!(read_frame(&mut cursor).unwrap().is_none());
    }

    #[test]
    fn oversize_frame_rejected() {
        let mut header = (MAX_FRAME_LEN + 1).to_be_bytes().to_vec();
        header.extend_from_slice(&[0u8; 8]);
        let mut cursor = std::io::Cursor::new(header);
        assert!(matches!(
            read_frame(&mut cursor),
            Err(WireError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn unknown_message_type_rejected() {
        let err = Message::from_json(br#"{"type":"SELF_DESTRUCT"}"#).unwrap_err();
        assert!(matches!(err, WireError::BadMessage(_)));
    }

    #[test]
    fn message_json_round_trip() {
        let msg = Message::MeasurementLog {
            nonce: Some("aabb".into()),
            log: "CLASS=00010008|LABEL=Chip ID|VALUE=1\n".into(),
            ek_public: "04ff".into(),
            binding_sig: "3045".into(),
            quote_sig: None,
        };
        assert_eq!(Message::from_json(&msg.to_json()).unwrap(), msg);
    }

    #[test]
    fn prover_answers_over_tcp() {
        let dev = sample_device();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let state = dev.clone();
        std::thread::spawn(move || {
            let _ = serve_prover_on(&state, listener);
        });

        let reply =
            request_measurement(&addr.to_string(), Some(b"an"), Duration::from_secs(5)).unwrap();
        match reply {
            Message::MeasurementLog { nonce, log, .. } => {
                assert_eq!(nonce.as_deref(), Some(hex::encode(b"an").as_str()));
                assert_eq!(log.lines().filter(|l| l.starts_with("CLASS=")).count(), 10);
            }
            other => panic!("unexpected reply {other:?}"),
        }

        // malformed frame gets an ERROR answer and the connection closes
        let mut stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        write_frame(&mut stream, b"this is not json").unwrap();
        let reply = Message::from_json(&read_frame(&mut stream).unwrap().unwrap()).unwrap();
        assert!(matches!(reply, Message::Error { .. }));
        assert!(
            read_frame(&mut stream).unwrap().is_none(),
            "connection should close"
        );

        // an oversize length prefix is answered with FrameTooLarge
        let mut stream = TcpStream::connect(addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        stream
            .write_all(&(MAX_FRAME_LEN + 1).to_be_bytes())
            .unwrap();
        let reply = Message::from_json(&read_frame(&mut stream).unwrap().unwrap()).unwrap();
        match reply {
            Message::Error { code, .. } => assert_eq!(code, "FrameTooLarge"),
            other => panic!("unexpected reply {other:?}"),
        }
    }

    #[test]
    fn store_append_only_history() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        let key = SigningKey::generate(SignatureAlgorithm::EcdsaP256Sha256, &[0x61u8; 32]).unwrap();
        let pac = sample_pac(&key);
        let device_id = device_id_for_ek(&[0x04, 0x01, 0x02]);

        store.init_device(&device_id, &key, &pac).unwrap();
        assert!(matches!(
            store.init_device(&device_id, &key, &pac),
            Err(StoreError::GroundTruthExists(_))
        ));

        store.append_cert(&device_id, &pac).unwrap();
        store.append_cert(&device_id, &pac).unwrap();

        let history = store.history(&device_id).unwrap();
        assert_eq!(history.len(), 3);
        assert_eq!(history[0], store.ground_truth(&device_id).unwrap());

        // reopening the store yields the identical sequence
        let reopened = CertStore::open(tmp.path());
        let replay = reopened.history(&device_id).unwrap();
        assert_eq!(replay, history);

        // stored signing key round-trips
        let loaded = reopened.signing_key(&device_id).unwrap();
        assert_eq!(loaded.to_private_der(), key.to_private_der());
    }

    #[test]
    fn empty_store_has_no_history() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CertStore::open(tmp.path());
        assert!(store.device_ids().unwrap().is_empty());
        assert!(matches!(
            store.history("missing"),
            Err(StoreError::UnknownDevice(_))
        ));
    }

    proptest! {
        #[test]
        fn frame_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut cursor = std::io::Cursor::new(bytes);
            let _ = read_frame(&mut cursor);
        }

        #[test]
        fn message_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = Message::from_json(&bytes);
        }
    }
}
