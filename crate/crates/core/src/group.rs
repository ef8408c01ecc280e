//! Prime-order group and scalar field arithmetic.
//!
//! Two backends share one representation: a cyclic subgroup of order `q`
//! inside the multiplicative group modulo a prime `p`.  The production
//! backend is the 2048-bit MODP group with 256-bit prime-order subgroup
//! from RFC 5114 (section 2.3).  The test backend is the order-11
//! subgroup of Z_23* with generator 2, small enough that discrete logs
//! can be found by exhaustive search.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;

use crate::error::Error;

/// RFC 5114 2.3: 2048-bit MODP group prime `p`.
const PROD_P_HEX: &str = "87A8E61DB4B6663CFFBBD19C651959998CEEF608660DD0F25D2CEED4435E3B00\
E00DF8F1D61957D4FAF7DF4561B2AA3016C3D91134096FAA3BF4296D830E9A7C\
209E0C6497517ABD5A8A9D306BCF67ED91F9E6725B4758C022E0B1EF4275BF7B\
6C5BFC11D45F9088B941F54EB1E59BB8BC39A0BF12307F5C4FDB70C581B23F76\
B63ACAE1CAA6B7902D52526735488A0EF13C6D9A51BFA4AB3AD8347796524D8E\
F6A167B5A41825D967E144E5140564251CCACB83E6B486F6B3CA3F7971506026\
C0B857F689962856DED4010ABD0BE621C3A3960A54E710C375F26375D7014103\
A4B54330C198AF126116D2276E11715F693877FAD7EF09CADB094AE91E1A1597";

/// RFC 5114 2.3: generator of the order-`q` subgroup.
const PROD_G_HEX: &str = "3FB32C9B73134D0B2E77506660EDBD484CA7B18F21EF205407F4793A1A0BA125\
10DBC15077BE463FFF4FED4AAC0BB555BE3A6C1B0C6B47B1BC3773BF7E8C6F62\
901228F8C28CBB18A55AE31341000A650196F931C77A57F2DDF463E5E9EC144B\
777DE62AAAB8A8628AC376D282D6ED3864E67982428EBC831D14348F6F2F9193\
B5045AF2767164E1DFC967C1FB3F2E55A4BD1BFFE83B9C80D052B985D182EA0A\
DB2A3B7313D3FE14C8484B1E052588B9B7D2BBD2DF016199ECD06E1557CD0915\
B3353BBB64E0EC377FD028370DF92B52C7891428CDC67EB6184B523D1DB246C3\
2F63078490F00EF8D647D148D47954515E2327CFEF98C582664B4C0F6CC41659";

/// RFC 5114 2.3: 256-bit subgroup order `q`.
const PROD_Q_HEX: &str = "8CF83642A709A097B447997640129DA299B1A47D1EB3750BA308B0FE64F5FBD3";

/// Which group the values live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Backend {
    /// RFC 5114 2048-bit MODP group, 256-bit prime-order subgroup.
    Prod,
    /// Order-11 subgroup of Z_23*, generator 2.  Brute-forceable on purpose.
    Test,
}

impl Backend {
    pub fn params(self) -> &'static GroupParams {
        match self {
            Backend::Prod => prod_params(),
            Backend::Test => test_params(),
        }
    }

    /// Wire tag used in serialized headers.
    pub fn tag(self) -> u8 {
        match self {
            Backend::Prod => 0x01,
            Backend::Test => 0x02,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, Error> {
        match tag {
            0x01 => Ok(Backend::Prod),
            0x02 => Ok(Backend::Test),
            other => Err(Error::Decode(format!("unknown group tag 0x{other:02x}"))),
        }
    }
}

/// Parameters of one backend: modulus, subgroup order, generator, and the
/// fixed encoding widths used everywhere bytes are produced.
#[derive(Debug, Clone)]
pub struct GroupParams {
    pub backend: Backend,
    modulus: BigUint,
    order: BigUint,
    generator: BigUint,
    pub element_width: usize,
    pub scalar_width: usize,
}

impl GroupParams {
    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }
}

fn prod_params() -> &'static GroupParams {
    static PARAMS: OnceLock<GroupParams> = OnceLock::new();
    PARAMS.get_or_init(|| GroupParams {
        backend: Backend::Prod,
        modulus: BigUint::parse_bytes(PROD_P_HEX.as_bytes(), 16).expect("prod modulus hex"),
        order: BigUint::parse_bytes(PROD_Q_HEX.as_bytes(), 16).expect("prod order hex"),
        generator: BigUint::parse_bytes(PROD_G_HEX.as_bytes(), 16).expect("prod generator hex"),
        element_width: 256,
        scalar_width: 32,
    })
}

fn test_params() -> &'static GroupParams {
    static PARAMS: OnceLock<GroupParams> = OnceLock::new();
    PARAMS.get_or_init(|| GroupParams {
        backend: Backend::Test,
        modulus: BigUint::from(23u32),
        order: BigUint::from(11u32),
        generator: BigUint::from(2u32),
        element_width: 1,
        scalar_width: 1,
    })
}

fn to_fixed_be(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    debug_assert!(raw.len() <= width);
    let mut out = vec![0u8; width];
    out[width - raw.len()..].copy_from_slice(&raw);
    out
}

/// An element of Z_q, always reduced modulo the subgroup order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar {
    backend: Backend,
    value: BigUint,
}

impl std::fmt::Debug for Scalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Scalar({:?}, {})", self.backend, self.value)
    }
}

impl Scalar {
    pub fn zero(backend: Backend) -> Self {
        Scalar {
            backend,
            value: BigUint::zero(),
        }
    }

    pub fn one(backend: Backend) -> Self {
        Scalar {
            backend,
            value: BigUint::one(),
        }
    }

    pub fn from_u64(backend: Backend, v: u64) -> Self {
        Scalar::reduce(backend, BigUint::from(v))
    }

    /// Reduce an arbitrary integer into Z_q.
    pub fn reduce(backend: Backend, value: BigUint) -> Self {
        Scalar {
            backend,
            value: value % backend.params().order(),
        }
    }

    /// Interpret bytes as a big-endian integer and reduce mod q.  This is the
    /// wide-reduction path used by the PRF and challenge hash.
    pub fn reduce_bytes(backend: Backend, bytes: &[u8]) -> Self {
        Scalar::reduce(backend, BigUint::from_bytes_be(bytes))
    }

    /// Uniform scalar in [0, q) by rejection sampling.
    pub fn random(backend: Backend, rng: &mut dyn RngCore) -> Self {
        let params = backend.params();
        let bits = params.order().bits();
        let bytes = bits.div_ceil(8) as usize;
        loop {
            let mut buf = vec![0u8; bytes];
            rng.fill_bytes(&mut buf);
            // Mask excess high bits so rejection stays cheap.
            let excess = (bytes as u64) * 8 - bits;
            if excess > 0 {
                buf[0] &= 0xff >> excess;
            }
            let candidate = BigUint::from_bytes_be(&buf);
            if &candidate < params.order() {
                return Scalar {
                    backend,
                    value: candidate,
                };
            }
        }
    }

    /// Uniform nonzero scalar.
    pub fn random_nonzero(backend: Backend, rng: &mut dyn RngCore) -> Self {
        loop {
            let s = Scalar::random(backend, rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        assert_eq!(self.backend, other.backend, "mixed-backend scalar add");
        Scalar::reduce(self.backend, &self.value + &other.value)
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        assert_eq!(self.backend, other.backend, "mixed-backend scalar sub");
        let q = self.backend.params().order();
        Scalar::reduce(self.backend, &self.value + q - &other.value)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        assert_eq!(self.backend, other.backend, "mixed-backend scalar mul");
        Scalar::reduce(self.backend, &self.value * &other.value)
    }

    pub fn negate(&self) -> Scalar {
        if self.value.is_zero() {
            self.clone()
        } else {
            let q = self.backend.params().order();
            Scalar {
                backend: self.backend,
                value: q - &self.value,
            }
        }
    }

    /// Multiplicative inverse in Z_q.  Defined only for nonzero values.
    pub fn invert(&self) -> Result<Scalar, Error> {
        if self.value.is_zero() {
            return Err(Error::InvalidScalar("inverse of zero".into()));
        }
        let q = self.backend.params().order();
        // q is prime, so a^(q-2) is the inverse.
        let exp = q - 2u32;
        Ok(Scalar {
            backend: self.backend,
            value: self.value.modpow(&exp, q),
        })
    }

    /// Fixed-width big-endian encoding (`scalar_width` bytes).
    pub fn encode(&self) -> Vec<u8> {
        to_fixed_be(&self.value, self.backend.params().scalar_width)
    }

    pub fn decode(backend: Backend, bytes: &[u8]) -> Result<Scalar, Error> {
        let params = backend.params();
        if bytes.len() != params.scalar_width {
            return Err(Error::Decode(format!(
                "scalar encoding must be {} bytes, got {}",
                params.scalar_width,
                bytes.len()
            )));
        }
        let value = BigUint::from_bytes_be(bytes);
        if &value >= params.order() {
            return Err(Error::Decode("scalar not reduced mod q".into()));
        }
        Ok(Scalar { backend, value })
    }

    pub fn to_biguint(&self) -> &BigUint {
        &self.value
    }
}

/// An element of the cyclic subgroup of order q.  Construction paths all
/// verify subgroup membership, so a held value is always a valid element.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElement {
    backend: Backend,
    value: BigUint,
}

impl std::fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GroupElement({:?}, {})", self.backend, self.value)
    }
}

impl GroupElement {
    pub fn identity(backend: Backend) -> Self {
        GroupElement {
            backend,
            value: BigUint::one(),
        }
    }

    pub fn generator(backend: Backend) -> Self {
        let params = backend.params();
        GroupElement {
            backend,
            value: params.generator.clone(),
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_identity(&self) -> bool {
        self.value.is_one()
    }

    /// self^e.  `exp(base, 0)` is the identity.
    pub fn exp(&self, e: &Scalar) -> GroupElement {
        assert_eq!(self.backend, e.backend, "mixed-backend exponentiation");
        let params = self.backend.params();
        GroupElement {
            backend: self.backend,
            value: self.value.modpow(&e.value, params.modulus()),
        }
    }

    /// Group operation a·b.
    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.backend, other.backend, "mixed-backend group mul");
        let params = self.backend.params();
        GroupElement {
            backend: self.backend,
            value: &self.value * &other.value % params.modulus(),
        }
    }

    /// Group inverse: a^(q-1), staying inside the order-q subgroup.
    pub fn inverse(&self) -> GroupElement {
        let params = self.backend.params();
        let exp = params.order() - 1u32;
        GroupElement {
            backend: self.backend,
            value: self.value.modpow(&exp, params.modulus()),
        }
    }

    /// g^e for the backend generator.
    pub fn base_exp(backend: Backend, e: &Scalar) -> GroupElement {
        GroupElement::generator(backend).exp(e)
    }

    /// Canonical fixed-width big-endian encoding (`element_width` bytes).
    pub fn encode(&self) -> Vec<u8> {
        to_fixed_be(&self.value, self.backend.params().element_width)
    }

    /// Decode and verify membership in the order-q subgroup.
    pub fn decode(backend: Backend, bytes: &[u8]) -> Result<GroupElement, Error> {
        let params = backend.params();
        if bytes.len() != params.element_width {
            return Err(Error::Decode(format!(
                "element encoding must be {} bytes, got {}",
                params.element_width,
                bytes.len()
            )));
        }
        let value = BigUint::from_bytes_be(bytes);
        if value.is_zero() || &value >= params.modulus() {
            return Err(Error::Decode("element out of range".into()));
        }
        // Membership: x^q == 1 mod p in the order-q subgroup.
        if !value.modpow(params.order(), params.modulus()).is_one() {
            return Err(Error::Decode("element not in the order-q subgroup".into()));
        }
        Ok(GroupElement { backend, value })
    }

    pub fn to_biguint(&self) -> &BigUint {
        &self.value
    }
}

/// Product of a sequence of elements; identity for an empty sequence.
pub fn product<'a>(
    backend: Backend,
    elems: impl IntoIterator<Item = &'a GroupElement>,
) -> GroupElement {
    elems
        .into_iter()
        .fold(GroupElement::identity(backend), |acc, e| acc.mul(e))
}

/// Exhaustive-search discrete log.  Test backend only: the production group
/// order makes this infeasible by design, so the call is refused there.
pub fn dlog_bruteforce(y: &GroupElement) -> Result<Scalar, Error> {
    if y.backend != Backend::Test {
        return Err(Error::BruteForceUnavailable);
    }
    let params = y.backend.params();
    let g = GroupElement::generator(y.backend);
    let mut acc = GroupElement::identity(y.backend);
    let mut x = BigUint::zero();
    while &x < params.order() {
        if acc == *y {
            return Ok(Scalar {
                backend: y.backend,
                value: x,
            });
        }
        acc = acc.mul(&g);
        x += 1u32;
    }
    // Unreachable for valid elements: every member of <g> is some power of g.
    Err(Error::InvalidScalar("element not in <g>".into()))
}
