//! NIST P-256 arithmetic and ECDSA with deterministic nonces.
//!
//! Signatures are produced with the RFC 6979 nonce derivation from
//! [`super::rfc6979`], so signing the same message with the same key always
//! yields the same `(r, s)` pair. No low-s normalization is applied: the
//! signature bytes are exactly what the RFC 6979 procedure produces.

use std::sync::LazyLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};

use super::rfc6979;

/// Field and group parameters for secp256r1 (FIPS 186-4, D.1.2.3).
pub struct CurveParams {
    /// Prime field modulus.
    pub p: BigUint,
    /// Curve coefficient b (a is fixed at p - 3).
    pub b: BigUint,
    /// Group order.
    pub n: BigUint,
    /// Base point.
    pub g: Point,
}

static CURVE: LazyLock<CurveParams> = LazyLock::new(|| {
    let hex = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).unwrap();
    CurveParams {
        p: hex("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff"),
        b: hex("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
        n: hex("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
        g: Point::Affine {
            x: hex("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
            y: hex("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
        },
    }
});

pub fn curve() -> &'static CurveParams {
    &CURVE
}

/// A point on the curve, affine representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Point {
    Infinity,
    Affine { x: BigUint, y: BigUint },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointError {
    /// Encoded point is not 65 bytes or lacks the 0x04 prefix.
    BadEncoding,
    /// Coordinates do not satisfy the curve equation.
    NotOnCurve,
}

impl std::fmt::Display for PointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointError::BadEncoding => write!(f, "bad SEC1 point encoding"),
            PointError::NotOnCurve => write!(f, "point is not on the curve"),
        }
    }
}

impl std::error::Error for PointError {}

impl Point {
    /// SEC1 uncompressed encoding: `04 || x || y`, 65 bytes.
    pub fn to_sec1(&self) -> Vec<u8> {
        match self {
            Point::Infinity => vec![0x00],
            Point::Affine { x, y } => {
                let mut out = Vec::with_capacity(65);
                out.push(0x04);
                out.extend_from_slice(&to_fixed_be(x, 32));
                out.extend_from_slice(&to_fixed_be(y, 32));
                out
            }
        }
    }

    /// Parses an uncompressed SEC1 point and checks it lies on the curve.
    pub fn from_sec1(bytes: &[u8]) -> Result<Point, PointError> {
        if bytes.len() != 65 || bytes[0] != 0x04 {
            return Err(PointError::BadEncoding);
        }
        let x = BigUint::from_bytes_be(&bytes[1..33]);
        let y = BigUint::from_bytes_be(&bytes[33..65]);
        let c = curve();
        if x >= c.p || y >= c.p {
            return Err(PointError::NotOnCurve);
        }
        // y^2 = x^3 - 3x + b (mod p)
        let y2 = mulm(&y, &y, &c.p);
        let x3 = mulm(&mulm(&x, &x, &c.p), &x, &c.p);
        let three_x = mulm(&BigUint::from(3u8), &x, &c.p);
        let rhs = addm(&subm(&x3, &three_x, &c.p), &c.b, &c.p);
        if y2 != rhs {
            return Err(PointError::NotOnCurve);
        }
        Ok(Point::Affine { x, y })
    }
}

fn addm(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    let mut r = a + b;
    if r >= *m {
        r -= m;
    }
    r
}

fn subm(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

fn mulm(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    (a * b) % m
}

/// Inverse mod a prime via Fermat's little theorem.
fn invm(a: &BigUint, m: &BigUint) -> BigUint {
    a.modpow(&(m - 2u8), m)
}

pub fn to_fixed_be(v: &BigUint, len: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= len, "value exceeds {len} bytes");
    let mut out = vec![0u8; len - raw.len()];
    out.extend_from_slice(&raw);
    out
}

/// Jacobian projective point; z == 0 encodes the point at infinity.
#[derive(Clone)]
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Jacobian {
    fn infinity() -> Jacobian {
        Jacobian {
            x: BigUint::one(),
            y: BigUint::one(),
            z: BigUint::zero(),
        }
    }

    fn from_affine(p: &Point) -> Jacobian {
        match p {
            Point::Infinity => Jacobian::infinity(),
            Point::Affine { x, y } => Jacobian {
                x: x.clone(),
                y: y.clone(),
                z: BigUint::one(),
            },
        }
    }

    fn to_affine(&self) -> Point {
        let c = curve();
        if self.z.is_zero() {
            return Point::Infinity;
        }
        let zi = invm(&self.z, &c.p);
        let zi2 = mulm(&zi, &zi, &c.p);
        let zi3 = mulm(&zi2, &zi, &c.p);
        Point::Affine {
            x: mulm(&self.x, &zi2, &c.p),
            y: mulm(&self.y, &zi3, &c.p),
        }
    }

    /// Point doubling, dbl-2001-b specialized for a = -3.
    fn double(&self) -> Jacobian {
        let c = curve();
        let p = &c.p;
        if self.z.is_zero() || self.y.is_zero() {
            return Jacobian::infinity();
        }
        let delta = mulm(&self.z, &self.z, p);
        let gamma = mulm(&self.y, &self.y, p);
        let beta = mulm(&self.x, &gamma, p);
        let alpha = mulm(
            &BigUint::from(3u8),
            &mulm(&subm(&self.x, &delta, p), &addm(&self.x, &delta, p), p),
            p,
        );
        let eight_beta = mulm(&BigUint::from(8u8), &beta, p);
        let x3 = subm(&mulm(&alpha, &alpha, p), &eight_beta, p);
        let zsum = addm(&self.y, &self.z, p);
        let z3 = subm(&subm(&mulm(&zsum, &zsum, p), &gamma, p), &delta, p);
        let four_beta = mulm(&BigUint::from(4u8), &beta, p);
        let gamma2 = mulm(&gamma, &gamma, p);
        let y3 = subm(
            &mulm(&alpha, &subm(&four_beta, &x3, p), p),
            &mulm(&BigUint::from(8u8), &gamma2, p),
            p,
        );
        Jacobian {
            x: x3,
            y: y3,
            z: z3,
        }
    }

    /// General addition, add-2007-bl.
    fn add(&self, other: &Jacobian) -> Jacobian {
        let c = curve();
        let p = &c.p;
        if self.z.is_zero() {
            return other.clone();
        }
        if other.z.is_zero() {
            return self.clone();
        }
        let z1z1 = mulm(&self.z, &self.z, p);
        let z2z2 = mulm(&other.z, &other.z, p);
        let u1 = mulm(&self.x, &z2z2, p);
        let u2 = mulm(&other.x, &z1z1, p);
        let s1 = mulm(&self.y, &mulm(&other.z, &z2z2, p), p);
        let s2 = mulm(&other.y, &mulm(&self.z, &z1z1, p), p);
        if u1 == u2 {
            if s1 != s2 {
                return Jacobian::infinity();
            }
            return self.double();
        }
        let h = subm(&u2, &u1, p);
        let two_h = addm(&h, &h, p);
        let i = mulm(&two_h, &two_h, p);
        let j = mulm(&h, &i, p);
        let r = {
            let d = subm(&s2, &s1, p);
            addm(&d, &d, p)
        };
        let v = mulm(&u1, &i, p);
        let x3 = subm(&subm(&mulm(&r, &r, p), &j, p), &addm(&v, &v, p), p);
        let s1j = mulm(&s1, &j, p);
        let y3 = subm(&mulm(&r, &subm(&v, &x3, p), p), &addm(&s1j, &s1j, p), p);
        let zsum = addm(&self.z, &other.z, p);
        let z3 = mulm(
            &subm(&subm(&mulm(&zsum, &zsum, p), &z1z1, p), &z2z2, p),
            &h,
            p,
        );
        Jacobian {
            x: x3,
            y: y3,
            z: z3,
        }
    }
}

/// Scalar multiplication, left-to-right double-and-add.
pub fn scalar_mult(k: &BigUint, point: &Point) -> Point {
    if k.is_zero() {
        return Point::Infinity;
    }
    let base = Jacobian::from_affine(point);
    let mut acc = Jacobian::infinity();
    for i in (0..k.bits()).rev() {
        acc = acc.double();
        if k.bit(i) {
            acc = acc.add(&base);
        }
    }
    acc.to_affine()
}

pub fn base_mult(k: &BigUint) -> Point {
    scalar_mult(k, &curve().g)
}

fn point_add(a: &Point, b: &Point) -> Point {
    Jacobian::from_affine(a)
        .add(&Jacobian::from_affine(b))
        .to_affine()
}

/// An ECDSA signature as the raw scalar pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcdsaSignature {
    pub r: BigUint,
    pub s: BigUint,
}

/// Derives a private scalar from a 32-byte seed.
///
/// Hashes `seed || counter` until the result lands in [1, n-1]; a fixed seed
/// always yields the same scalar.
pub fn scalar_from_seed(seed: &[u8; 32]) -> BigUint {
    let n = &curve().n;
    for counter in 0u32.. {
        let mut h = Sha256::new();
        h.update(seed);
        h.update(counter.to_be_bytes());
        let candidate = BigUint::from_bytes_be(&h.finalize());
        if !candidate.is_zero() && candidate < *n {
            return candidate;
        }
    }
    unreachable!()
}

/// Signs `message` with SHA-256 and an RFC 6979 deterministic nonce.
pub fn sign(private_scalar: &BigUint, message: &[u8]) -> EcdsaSignature {
    let c = curve();
    let n = &c.n;
    let h1: [u8; 32] = Sha256::digest(message).into();
    let z = BigUint::from_bytes_be(&h1) % n;
    let x_bytes: [u8; 32] = to_fixed_be(private_scalar, 32).try_into().unwrap();

    let mut gen = rfc6979::NonceGenerator::new(&x_bytes, &h1);
    loop {
        let k = gen.next_candidate();
        if k.is_zero() || k >= *n {
            continue;
        }
        let rp = base_mult(&k);
        let r = match &rp {
            Point::Infinity => continue,
            Point::Affine { x, .. } => x % n,
        };
        if r.is_zero() {
            continue;
        }
        let kinv = invm(&k, n);
        let s = mulm(&kinv, &addm(&z, &mulm(&r, private_scalar, n), n), n);
        if s.is_zero() {
            continue;
        }
        return EcdsaSignature { r, s };
    }
}

/// Verifies a signature over `message` (SHA-256 digest internally).
pub fn verify(public: &Point, message: &[u8], sig: &EcdsaSignature) -> bool {
    let c = curve();
    let n = &c.n;
    if sig.r.is_zero() || sig.s.is_zero() || sig.r >= *n || sig.s >= *n {
        return false;
    }
    if matches!(public, Point::Infinity) {
        return false;
    }
    let h1: [u8; 32] = Sha256::digest(message).into();
    let z = BigUint::from_bytes_be(&h1) % n;
    let w = invm(&sig.s, n);
    let u1 = mulm(&z, &w, n);
    let u2 = mulm(&sig.r, &w, n);
    let point = point_add(&base_mult(&u1), &scalar_mult(&u2, public));
    match point {
        Point::Infinity => false,
        Point::Affine { x, .. } => x % n == sig.r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hexn(s: &str) -> BigUint {
        BigUint::parse_bytes(s.as_bytes(), 16).unwrap()
    }

    // Key pair from the published P-256/SHA-256 deterministic-ECDSA test
    // vectors; also used by the acceptance suite.
    const TV_X: &str = "c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721";
    const TV_UX: &str = "60fed4ba255a9d31c961eb74c6356d68c049b8923b61fa6ce669622e60f29fb6";
    const TV_UY: &str = "7903fe1008b8bc99a41ae9e95628bc64f2f1b20c2d7e9f5177a3c294d4462299";

    #[test]
    fn base_point_is_on_curve() {
        let g = curve().g.to_sec1();
        Point::from_sec1(&g).unwrap();
    }

    #[test]
    fn public_key_matches_test_vector() {
        let x = hexn(TV_X);
        match base_mult(&x) {
            Point::Affine { x: px, y: py } => {
                assert_eq!(px, hexn(TV_UX));
                assert_eq!(py, hexn(TV_UY));
            }
            Point::Infinity => panic!("derived point at infinity"),
        }
    }

    #[test]
    fn sign_matches_test_vector_sample() {
        let x = hexn(TV_X);
        let sig = sign(&x, b"sample");
        assert_eq!(
            sig.r,
            hexn("efd48b2aacb6a8fd1140dd9cd45e81d69d2c877b56aaf991c34d0ea84eaf3716")
        );
        assert_eq!(
            sig.s,
            hexn("f7cb1c942d657c41d436c7a1b6e29f65f3e900dbb9aff4064dc4ab2f843acda8")
        );
    }

    #[test]
    fn sign_verify_round_trip() {
        let x = scalar_from_seed(&[7u8; 32]);
        let public = base_mult(&x);
        let sig = sign(&x, b"hello");
        assert!(verify(&public, b"hello", &sig));
        assert!(!verify(&public, b"hellp", &sig));
    }

    #[test]
    fn signing_is_deterministic() {
        let x = scalar_from_seed(&[9u8; 32]);
        assert_eq!(sign(&x, b"msg"), sign(&x, b"msg"));
    }

    #[test]
    fn rejects_off_curve_point() {
        let mut enc = curve().g.to_sec1();
        enc[64] ^= 1;
        assert_eq!(Point::from_sec1(&enc), Err(PointError::NotOnCurve));
    }

    #[test]
    fn sec1_round_trip() {
        let x = scalar_from_seed(&[3u8; 32]);
        let p = base_mult(&x);
        assert_eq!(Point::from_sec1(&p.to_sec1()).unwrap(), p);
    }
}
