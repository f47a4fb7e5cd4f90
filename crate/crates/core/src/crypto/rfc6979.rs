//! Deterministic nonce derivation for ECDSA (RFC 6979, section 3.2).
//!
//! The generator is instantiated with HMAC-SHA256 for the P-256 group, where
//! both the hash output and the group order are 256 bits wide, so `bits2int`
//! is a plain big-endian interpretation of 32 bytes.

use hmac::{Hmac, KeyInit, Mac};
use num_bigint::BigUint;
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key size");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// HMAC-DRBG state producing successive nonce candidates.
///
/// The first candidate in [1, n-1] is the RFC 6979 nonce `k`; callers that
/// reject a candidate (r == 0 or s == 0 cases) pull the next one, which
/// applies the step 3.2h retry rule.
pub struct NonceGenerator {
    k: [u8; 32],
    v: [u8; 32],
    first: bool,
}

impl NonceGenerator {
    /// `x` is the private key as 32 big-endian bytes, `h1` the message digest.
    pub fn new(x: &[u8; 32], h1: &[u8; 32]) -> NonceGenerator {
        let mut k = [0u8; 32];
        let mut v = [1u8; 32];
        k = hmac(&k, &[&v, &[0x00], x, h1]);
        v = hmac(&k, &[&v]);
        k = hmac(&k, &[&v, &[0x01], x, h1]);
        v = hmac(&k, &[&v]);
        NonceGenerator { k, v, first: true }
    }

    /// Produces the next candidate value; the caller range-checks it.
    pub fn next_candidate(&mut self) -> BigUint {
        if !self.first {
            self.k = hmac(&self.k, &[&self.v, &[0x00]]);
            self.v = hmac(&self.k, &[&self.v]);
        }
        self.first = false;
        self.v = hmac(&self.k, &[&self.v]);
        BigUint::from_bytes_be(&self.v)
    }
}

/// Derives the RFC 6979 nonce for a P-256 key and message digest.
pub fn generate_k(x: &[u8; 32], h1: &[u8; 32]) -> BigUint {
    let n = &super::p256::curve().n;
    let mut gen = NonceGenerator::new(x, h1);
    loop {
        let k = gen.next_candidate();
        if !num_traits::Zero::is_zero(&k) && k < *n {
            return k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn k_matches_published_vector_sample() {
        // P-256/SHA-256, message "sample".
        let x: [u8; 32] =
            hex::decode("c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721")
                .unwrap()
                .try_into()
                .unwrap();
        let h1: [u8; 32] = Sha256::digest(b"sample").into();
        let k = generate_k(&x, &h1);
        assert_eq!(
            k,
            BigUint::parse_bytes(
                b"a6e3c57dd01abe90086538398355dd4c3b17aa873382b0f24d6129493d8aad60",
                16
            )
            .unwrap()
        );
    }

    #[test]
    fn k_matches_published_vector_test() {
        let x: [u8; 32] =
            hex::decode("c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721")
                .unwrap()
                .try_into()
                .unwrap();
        let h1: [u8; 32] = Sha256::digest(b"test").into();
        let k = generate_k(&x, &h1);
        assert_eq!(
            k,
            BigUint::parse_bytes(
                b"d16b6ae827f17175e040871a1c7ec3500192c4c92677336ec2537acaee0008e0",
                16
            )
            .unwrap()
        );
    }
}
