//! Signing keys and signature algorithms for certificate issuance.
//!
//! Both permitted algorithms are deterministic: ECDSA P-256 uses RFC 6979
//! nonces, RSA uses PKCS#1 v1.5 padding. Signing the same to-be-signed bytes
//! twice with the same key yields byte-identical signatures, which is what
//! makes whole-signature comparison a valid tamper check.

pub mod p256;
pub mod rfc6979;

use num_bigint::BigUint;
use rand::SeedableRng;
use rsa::pkcs1::{
    DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey,
};
use rsa::traits::PublicKeyParts;
use rsa::{Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::der::{self, Reader, Writer};
use p256::Point;

/// ecdsa-with-SHA256 (RFC 5758).
pub const OID_ECDSA_SHA256: &[u64] = &[1, 2, 840, 10045, 4, 3, 2];
/// sha256WithRSAEncryption (RFC 4055).
pub const OID_RSA_SHA256: &[u64] = &[1, 2, 840, 113549, 1, 1, 11];
/// id-ecPublicKey.
pub const OID_EC_PUBLIC_KEY: &[u64] = &[1, 2, 840, 10045, 2, 1];
/// secp256r1 curve.
pub const OID_PRIME256V1: &[u64] = &[1, 2, 840, 10045, 3, 1, 7];

/// DigestInfo prefix for SHA-256 in PKCS#1 v1.5 (RFC 8017, section 9.2).
const SHA256_PKCS1_PREFIX: [u8; 19] = [
    0x30, 0x31, 0x30, 0x0d, 0x06, 0x09, 0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01, 0x05,
    0x00, 0x04, 0x20,
];

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("key/algorithm mismatch: key is {key}, requested {requested}")]
    AlgorithmMismatch {
        key: &'static str,
        requested: &'static str,
    },
    #[error("malformed signature encoding")]
    MalformedSignature,
    #[error("malformed key file: {0}")]
    MalformedKey(String),
    #[error("rsa key generation failed: {0}")]
    RsaKeyGen(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignatureAlgorithm {
    EcdsaP256Sha256,
    Rsa2048Pkcs15Sha256,
}

impl SignatureAlgorithm {
    pub fn oid(&self) -> &'static [u64] {
        match self {
            SignatureAlgorithm::EcdsaP256Sha256 => OID_ECDSA_SHA256,
            SignatureAlgorithm::Rsa2048Pkcs15Sha256 => OID_RSA_SHA256,
        }
    }

    pub fn from_oid(arcs: &[u64]) -> Option<SignatureAlgorithm> {
        if arcs == OID_ECDSA_SHA256 {
            Some(SignatureAlgorithm::EcdsaP256Sha256)
        } else if arcs == OID_RSA_SHA256 {
            Some(SignatureAlgorithm::Rsa2048Pkcs15Sha256)
        } else {
            None
        }
    }

    /// Whether repeated signing of the same message is byte-stable.
    pub fn is_deterministic(&self) -> bool {
        // both supported algorithms qualify; randomized schemes (e.g. PSS)
        // are deliberately not representable here
        true
    }

    pub fn name(&self) -> &'static str {
        match self {
            SignatureAlgorithm::EcdsaP256Sha256 => "ecdsa-p256",
            SignatureAlgorithm::Rsa2048Pkcs15Sha256 => "rsa-2048",
        }
    }

    pub fn from_name(s: &str) -> Option<SignatureAlgorithm> {
        match s {
            "ecdsa-p256" => Some(SignatureAlgorithm::EcdsaP256Sha256),
            "rsa-2048" => Some(SignatureAlgorithm::Rsa2048Pkcs15Sha256),
            _ => None,
        }
    }
}

/// Issuer key pair. Private material never leaves this type except through
/// the DER export used by the certificate store.
#[derive(Clone)]
pub enum SigningKey {
    Ecdsa {
        private: BigUint,
        public: Point,
    },
    Rsa {
        private: Box<RsaPrivateKey>,
        public: RsaPublicKey,
    },
}

/// Public half of a signing key.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifyingKey {
    Ecdsa(Point),
    Rsa(RsaPublicKey),
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey({})", self.algorithm().name())
    }
}

impl SigningKey {
    /// Deterministic key generation from a 32-byte seed.
    pub fn generate(
        algorithm: SignatureAlgorithm,
        seed: &[u8; 32],
    ) -> Result<SigningKey, CryptoError> {
        match algorithm {
            SignatureAlgorithm::EcdsaP256Sha256 => {
                let private = p256::scalar_from_seed(seed);
                let public = p256::base_mult(&private);
                Ok(SigningKey::Ecdsa { private, public })
            }
            SignatureAlgorithm::Rsa2048Pkcs15Sha256 => {
                let mut rng = rand_chacha::ChaCha20Rng::from_seed(*seed);
                let private = RsaPrivateKey::new(&mut rng, 2048)
                    .map_err(|e| CryptoError::RsaKeyGen(e.to_string()))?;
                let public = private.to_public_key();
                Ok(SigningKey::Rsa {
                    private: Box::new(private),
                    public,
                })
            }
        }
    }

    pub fn algorithm(&self) -> SignatureAlgorithm {
        match self {
            SigningKey::Ecdsa { .. } => SignatureAlgorithm::EcdsaP256Sha256,
            SigningKey::Rsa { .. } => SignatureAlgorithm::Rsa2048Pkcs15Sha256,
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        match self {
            SigningKey::Ecdsa { public, .. } => VerifyingKey::Ecdsa(public.clone()),
            SigningKey::Rsa { public, .. } => VerifyingKey::Rsa(public.clone()),
        }
    }

    /// Signs a message (hashed internally with SHA-256).
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        match self {
            SigningKey::Ecdsa { private, .. } => {
                ecdsa_signature_to_der(&p256::sign(private, message))
            }
            SigningKey::Rsa { private, .. } => {
                let digest: [u8; 32] = Sha256::digest(message).into();
                private
                    .sign(pkcs1v15_sha256(), &digest)
                    .expect("pkcs1v15 signing with valid digest length")
            }
        }
    }

    /// Private key as a DER document (RFC 5915 for EC, PKCS#1 for RSA).
    pub fn to_private_der(&self) -> Vec<u8> {
        match self {
            SigningKey::Ecdsa { private, public } => {
                let mut w = Writer::new();
                w.sequence(|w| {
                    w.uint(1);
                    w.octet_string(&p256::to_fixed_be(private, 32));
                    w.constructed(der::tag_context(0), |w| w.oid(OID_PRIME256V1));
                    w.constructed(der::tag_context(1), |w| w.bit_string(&public.to_sec1()));
                });
                w.into_bytes()
            }
            SigningKey::Rsa { private, .. } => private
                .to_pkcs1_der()
                .expect("pkcs1 encoding of a valid key")
                .as_bytes()
                .to_vec(),
        }
    }

    /// Reads a private key, detecting the algorithm from the structure.
    pub fn from_private_der(bytes: &[u8]) -> Result<SigningKey, CryptoError> {
        if let Ok(key) = parse_ec_private(bytes) {
            return Ok(key);
        }
        let private = RsaPrivateKey::from_pkcs1_der(bytes)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        if private.size() != 256 {
            return Err(CryptoError::MalformedKey(format!(
                "unsupported RSA modulus size {} bits",
                private.size() * 8
            )));
        }
        let public = private.to_public_key();
        Ok(SigningKey::Rsa {
            private: Box::new(private),
            public,
        })
    }
}

fn parse_ec_private(bytes: &[u8]) -> Result<SigningKey, CryptoError> {
    let mk_err = |e: der::DerError| CryptoError::MalformedKey(e.to_string());
    let mut top = Reader::new(bytes);
    let mut seq = top.sequence().map_err(mk_err)?;
    top.finish().map_err(mk_err)?;
    let version = seq.uint().map_err(mk_err)?;
    if version != 1 {
        return Err(CryptoError::MalformedKey("EC key version must be 1".into()));
    }
    let priv_bytes = seq.octet_string().map_err(mk_err)?;
    let mut params = seq.constructed(der::tag_context(0)).map_err(mk_err)?;
    let curve_oid = params.oid().map_err(mk_err)?;
    params.finish().map_err(mk_err)?;
    if curve_oid != OID_PRIME256V1 {
        return Err(CryptoError::MalformedKey("unsupported curve".into()));
    }
    let mut pub_part = seq.constructed(der::tag_context(1)).map_err(mk_err)?;
    let point_bytes = pub_part.bit_string().map_err(mk_err)?;
    pub_part.finish().map_err(mk_err)?;
    seq.finish().map_err(mk_err)?;

    let private = BigUint::from_bytes_be(priv_bytes);
    let public =
        Point::from_sec1(point_bytes).map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
    if p256::base_mult(&private) != public {
        return Err(CryptoError::MalformedKey(
            "public point does not match scalar".into(),
        ));
    }
    Ok(SigningKey::Ecdsa { private, public })
}

impl VerifyingKey {
    pub fn algorithm(&self) -> SignatureAlgorithm {
        match self {
            VerifyingKey::Ecdsa(_) => SignatureAlgorithm::EcdsaP256Sha256,
            VerifyingKey::Rsa(_) => SignatureAlgorithm::Rsa2048Pkcs15Sha256,
        }
    }

    /// Checks `signature` over `message`; malformed encodings verify false.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        match self {
            VerifyingKey::Ecdsa(point) => match ecdsa_signature_from_der(signature) {
                Ok(sig) => p256::verify(point, message, &sig),
                Err(_) => false,
            },
            VerifyingKey::Rsa(public) => {
                let digest: [u8; 32] = Sha256::digest(message).into();
                public.verify(pkcs1v15_sha256(), &digest, signature).is_ok()
            }
        }
    }

    /// SubjectPublicKeyInfo for EC keys, PKCS#1 RSAPublicKey for RSA.
    pub fn to_public_der(&self) -> Vec<u8> {
        match self {
            VerifyingKey::Ecdsa(point) => {
                let mut w = Writer::new();
                w.sequence(|w| {
                    w.sequence(|w| {
                        w.oid(OID_EC_PUBLIC_KEY);
                        w.oid(OID_PRIME256V1);
                    });
                    w.bit_string(&point.to_sec1());
                });
                w.into_bytes()
            }
            VerifyingKey::Rsa(public) => public
                .to_pkcs1_der()
                .expect("pkcs1 encoding of a valid key")
                .into_vec(),
        }
    }

    pub fn from_public_der(bytes: &[u8]) -> Result<VerifyingKey, CryptoError> {
        if let Ok(point) = parse_ec_public(bytes) {
            return Ok(VerifyingKey::Ecdsa(point));
        }
        let public = RsaPublicKey::from_pkcs1_der(bytes)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        Ok(VerifyingKey::Rsa(public))
    }
}

fn parse_ec_public(bytes: &[u8]) -> Result<Point, CryptoError> {
    let mk_err = |e: der::DerError| CryptoError::MalformedKey(e.to_string());
    let mut top = Reader::new(bytes);
    let mut seq = top.sequence().map_err(mk_err)?;
    top.finish().map_err(mk_err)?;
    let mut alg = seq.sequence().map_err(mk_err)?;
    if alg.oid().map_err(mk_err)? != OID_EC_PUBLIC_KEY {
        return Err(CryptoError::MalformedKey("not an EC public key".into()));
    }
    if alg.oid().map_err(mk_err)? != OID_PRIME256V1 {
        return Err(CryptoError::MalformedKey("unsupported curve".into()));
    }
    alg.finish().map_err(mk_err)?;
    let point_bytes = seq.bit_string().map_err(mk_err)?;
    seq.finish().map_err(mk_err)?;
    Point::from_sec1(point_bytes).map_err(|e| CryptoError::MalformedKey(e.to_string()))
}

fn pkcs1v15_sha256() -> Pkcs1v15Sign {
    Pkcs1v15Sign {
        hash_len: Some(32),
        prefix: Box::new(SHA256_PKCS1_PREFIX),
    }
}

/// ECDSA signature as DER `SEQUENCE { r INTEGER, s INTEGER }`.
pub fn ecdsa_signature_to_der(sig: &p256::EcdsaSignature) -> Vec<u8> {
    let mut w = Writer::new();
    w.sequence(|w| {
        w.unsigned_be(&sig.r.to_bytes_be());
        w.unsigned_be(&sig.s.to_bytes_be());
    });
    w.into_bytes()
}

pub fn ecdsa_signature_from_der(bytes: &[u8]) -> Result<p256::EcdsaSignature, CryptoError> {
    let mut top = Reader::new(bytes);
    let mut seq = top
        .sequence()
        .map_err(|_| CryptoError::MalformedSignature)?;
    top.finish().map_err(|_| CryptoError::MalformedSignature)?;
    let r = seq
        .unsigned_be()
        .map_err(|_| CryptoError::MalformedSignature)?;
    let s = seq
        .unsigned_be()
        .map_err(|_| CryptoError::MalformedSignature)?;
    seq.finish().map_err(|_| CryptoError::MalformedSignature)?;
    Ok(p256::EcdsaSignature {
        r: BigUint::from_bytes_be(r),
        s: BigUint::from_bytes_be(s),
    })
}
